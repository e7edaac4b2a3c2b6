"""Session ingestion, validation and supine-to-stand phase windows.

A session on disk is a directory holding ``ecg.csv`` (``t_s,ecg``), ``ppg.csv``
(``t_s,ppg``) and ``meta.json``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hrvprv.intervals import IntervalError, IntervalSeries

PHASES = ("supine", "transition", "standing")

#: Minimum supine and standing durations (s) for a full three-phase analysis.
MIN_PHASE_DURATION_S = 120.0
EDGE_EXCLUSION_S = 30.0
TRANSITION_HALF_WIDTH_S = 60.0


class SessionError(ValueError):
    """Raised for malformed or unusable session data."""


class PhaseTooShortError(SessionError):
    def __init__(self, phase, detail=""):
        self.phase = phase
        msg = f"session too short for phase {phase}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


@dataclass(frozen=True, eq=False)
class Recording:
    ecg_samples: np.ndarray
    ecg_rate: float
    ppg_samples: np.ndarray
    ppg_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        for name in ("ecg", "ppg"):
            rate = getattr(self, f"{name}_rate")
            samples = np.asarray(getattr(self, f"{name}_samples"), dtype=float)
            if not rate > 0:
                raise SessionError(f"{name} sampling rate must be positive, got {rate}")
            if samples.ndim != 1 or samples.size == 0:
                raise SessionError(f"empty channel: {name}")
            bad = np.flatnonzero(~np.isfinite(samples))
            if bad.size:
                raise SessionError(f"non-finite {name} sample at index {int(bad[0])}")
            samples.setflags(write=False)
            object.__setattr__(self, f"{name}_samples", samples)

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.ecg_rate == other.ecg_rate
            and self.ppg_rate == other.ppg_rate
            and self.start_time == other.start_time
            and np.array_equal(self.ecg_samples, other.ecg_samples)
            and np.array_equal(self.ppg_samples, other.ppg_samples)
        )


@dataclass(frozen=True)
class SessionMeta:
    subject_id: str
    supine_start_s: float
    supine_end_s: float
    session_end_s: float

    def __post_init__(self):
        if not (self.supine_start_s < self.supine_end_s < self.session_end_s):
            raise SessionError(
                "metadata must satisfy supine_start_s < supine_end_s < session_end_s, got "
                f"{self.supine_start_s}, {self.supine_end_s}, {self.session_end_s}"
            )


@dataclass(frozen=True)
class PhaseWindows:
    supine: tuple[float, float]
    transition: tuple[float, float]
    standing: tuple[float, float]

    def items(self):
        return [(p, getattr(self, p)) for p in PHASES]


def phase_window(meta: SessionMeta, phase: str) -> tuple[float, float]:
    """Window ``[t0, t1]`` for a single phase, enforcing its duration policy.

    Raises
    ------
    PhaseTooShortError
        If the phase window would be empty or the underlying posture segment is
        shorter than ``MIN_PHASE_DURATION_S``.
    """
    start, stand, end = meta.supine_start_s, meta.supine_end_s, meta.session_end_s
    supine_dur = stand - start
    standing_dur = end - stand
    if phase == "supine":
        win = (start + EDGE_EXCLUSION_S, stand - EDGE_EXCLUSION_S)
        if win[1] <= win[0]:
            raise PhaseTooShortError(phase, f"window would be [{win[0]:g}, {win[1]:g}]")
        if supine_dur < MIN_PHASE_DURATION_S:
            raise PhaseTooShortError(phase, f"supine lasted {supine_dur:g} s < {MIN_PHASE_DURATION_S:g} s")
    elif phase == "standing":
        win = (stand + EDGE_EXCLUSION_S, end - EDGE_EXCLUSION_S)
        if win[1] <= win[0]:
            raise PhaseTooShortError(phase, f"window would be [{win[0]:g}, {win[1]:g}]")
        if standing_dur < MIN_PHASE_DURATION_S:
            raise PhaseTooShortError(phase, f"standing lasted {standing_dur:g} s < {MIN_PHASE_DURATION_S:g} s")
    elif phase == "transition":
        win = (stand - TRANSITION_HALF_WIDTH_S, stand + TRANSITION_HALF_WIDTH_S)
        if win[0] < start or win[1] > end:
            raise PhaseTooShortError(phase, "less than 60 s of data on one side of the stand-up")
    else:
        raise ValueError(f"unknown phase {phase!r}")
    return win


def segment_phases(meta: SessionMeta) -> PhaseWindows:
    """Cut the supine, transition and standing windows of one session."""
    return PhaseWindows(**{p: phase_window(meta, p) for p in PHASES})


def slice_series(series: IntervalSeries, window) -> IntervalSeries:
    """Intervals whose terminating beat falls inside the closed ``window``."""
    t0, t1 = window
    mask = (series.end_times >= t0) & (series.end_times <= t1)
    if not mask.any():
        raise IntervalError(f"no beats in window [{t0:g}, {t1:g}]")
    return IntervalSeries(series.durations[mask], series.end_times[mask], series.kind)


def _read_channel(path: Path, column: str):
    if not path.is_file():
        raise SessionError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SessionError(f"malformed header in {path.name}: file is empty") from None
        if header != ["t_s", column]:
            raise SessionError(f"malformed header in {path.name}: expected t_s,{column}, got {','.join(header)}")
        t, v = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise SessionError(f"{path.name} line {lineno}: expected 2 fields, got {len(row)}")
            try:
                t.append(float(row[0]))
                v.append(float(row[1]) if row[1].strip() else math.nan)
            except ValueError:
                raise SessionError(f"{path.name} line {lineno}: unparseable number") from None
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise SessionError(f"empty channel: {column}")
    nan_idx = np.flatnonzero(~np.isfinite(v))
    if nan_idx.size:
        raise SessionError(f"NaN sample in {column} at index {int(nan_idx[0])}")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        k = int(np.flatnonzero(np.diff(t) <= 0)[0]) + 1
        raise SessionError(f"non-monotonic time column in {path.name} at index {k}")
    return t, v


def load_session(path) -> tuple[Recording, SessionMeta]:
    """Load and validate one session directory."""
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.is_file():
        raise SessionError(f"missing file: {meta_path}")
    try:
        raw = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SessionError(f"malformed meta.json: {exc}") from None
    keys = ("subject_id", "supine_start_s", "supine_end_s", "session_end_s", "ecg_rate_hz", "ppg_rate_hz")
    missing = [k for k in keys if k not in raw]
    if missing:
        raise SessionError(f"meta.json missing keys: {', '.join(missing)}")
    ecg_t, ecg = _read_channel(path / "ecg.csv", "ecg")
    ppg_t, ppg = _read_channel(path / "ppg.csv", "ppg")
    meta = SessionMeta(
        subject_id=str(raw["subject_id"]),
        supine_start_s=float(raw["supine_start_s"]),
        supine_end_s=float(raw["supine_end_s"]),
        session_end_s=float(raw["session_end_s"]),
    )
    rec = Recording(
        ecg_samples=ecg,
        ecg_rate=float(raw["ecg_rate_hz"]),
        ppg_samples=ppg,
        ppg_rate=float(raw["ppg_rate_hz"]),
        start_time=float(min(ecg_t[0], ppg_t[0])),
    )
    return rec, meta


def _write_channel(path: Path, column: str, samples, rate, start_time):
    n = len(samples)
    t = start_time + np.arange(n) / rate
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"t_s,{column}\n")
        np.savetxt(fh, np.column_stack([t, samples]), fmt=("%.6f", "%.6f"), delimiter=",")


def write_session(path, recording: Recording, meta: SessionMeta) -> Path:
    """Write a session directory readable by :func:`load_session`."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    _write_channel(path / "ecg.csv", "ecg", recording.ecg_samples, recording.ecg_rate, recording.start_time)
    _write_channel(path / "ppg.csv", "ppg", recording.ppg_samples, recording.ppg_rate, recording.start_time)
    meta_doc = {
        "subject_id": meta.subject_id,
        "supine_start_s": meta.supine_start_s,
        "supine_end_s": meta.supine_end_s,
        "session_end_s": meta.session_end_s,
        "ecg_rate_hz": recording.ecg_rate,
        "ppg_rate_hz": recording.ppg_rate,
    }
    (path / "meta.json").write_text(json.dumps(meta_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
