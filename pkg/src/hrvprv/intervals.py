"""Inter-beat interval series: construction, outlier removal, uniform resampling."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from hrvprv.beats import BeatSeries, BeatSource

GUARD_LOW_MS = 250.0
GUARD_HIGH_MS = 3000.0


class IntervalError(ValueError):
    pass


class IntervalKind(str, enum.Enum):
    RRI = "RRI"
    PPI = "PPI"


@dataclass(frozen=True, eq=False)
class IntervalSeries:
    """Interval durations (ms) stamped with the time (s) of their terminating beat.

    ``n_removed`` and ``n_original`` record what :func:`filter_outliers` dropped.
    """

    durations: np.ndarray
    end_times: np.ndarray
    kind: IntervalKind
    n_removed: int = 0
    n_original: int | None = None

    def __post_init__(self):
        d = np.asarray(self.durations, dtype=float)
        t = np.asarray(self.end_times, dtype=float)
        if d.shape != t.shape or d.ndim != 1:
            raise IntervalError("durations and end_times must be 1-D and equally long")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise IntervalError("end_times must be strictly increasing")
        d.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "durations", d)
        object.__setattr__(self, "end_times", t)
        object.__setattr__(self, "kind", IntervalKind(self.kind))
        if self.n_original is None:
            object.__setattr__(self, "n_original", int(d.size) + self.n_removed)

    def __len__(self):
        return int(self.durations.size)

    def __eq__(self, other):
        if not isinstance(other, IntervalSeries):
            return NotImplemented
        return (
            self.kind == other.kind
            and np.array_equal(self.durations, other.durations)
            and np.array_equal(self.end_times, other.end_times)
        )

    @property
    def removed_fraction(self) -> float:
        return self.n_removed / self.n_original if self.n_original else 0.0

    @property
    def unreliable(self) -> bool:
        return self.removed_fraction > 0.2

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("t_s,duration_ms\n")
            np.savetxt(fh, np.column_stack([self.end_times, self.durations]), fmt="%.6f", delimiter=",")


@dataclass(frozen=True, eq=False)
class UniformSeries:
    values: np.ndarray
    rate: float = 4.0
    t0: float = 0.0

    @property
    def times(self):
        return self.t0 + np.arange(self.values.size) / self.rate


def build_intervals(beats: BeatSeries) -> IntervalSeries:
    t = np.asarray(beats.timestamps, dtype=float)
    if t.size < 2:
        raise IntervalError(f"need at least 2 beats to form an interval, got {t.size}")
    kind = IntervalKind.RRI if beats.source == BeatSource.ECG_R_PEAK else IntervalKind.PPI
    return IntervalSeries(durations=np.diff(t) * 1000.0, end_times=t[1:], kind=kind)


def _local_median_outliers(d, window, max_rel_dev):
    half = window // 2
    n = d.size
    med = np.empty(n)
    for i in range(n):
        med[i] = np.median(d[max(0, i - half) : min(n, i + half + 1)])
    return np.abs(d - med) > max_rel_dev * med


def filter_outliers(
    series: IntervalSeries,
    low_ms: float = GUARD_LOW_MS,
    high_ms: float = GUARD_HIGH_MS,
    window: int = 11,
    max_rel_dev: float = 0.2,
) -> IntervalSeries:
    """Drop physiologically implausible intervals and local-median outliers.

    Intervals outside ``(low_ms, high_ms)`` go first. The local-median rule is then
    applied repeatedly until nothing more is removed, so the filter is idempotent.
    Survivors keep their original ``end_times``; nothing is interpolated.
    """
    if len(series) == 0:
        raise IntervalError("cannot filter an empty interval series")
    d = series.durations
    t = series.end_times
    keep = (d > low_ms) & (d < high_ms)
    d, t = d[keep], t[keep]
    while d.size:
        bad = _local_median_outliers(d, window, max_rel_dev)
        if not bad.any():
            break
        d, t = d[~bad], t[~bad]
    removed = len(series) - d.size
    return replace(
        series,
        durations=d,
        end_times=t,
        n_removed=series.n_removed + removed,
        n_original=series.n_original,
    )


def interpolate_uniform(series: IntervalSeries, rate: float = 4.0) -> UniformSeries:
    """Natural cubic spline through ``(end_times, durations)`` sampled at ``rate`` Hz."""
    if len(series) < 4:
        raise IntervalError(f"cubic spline resampling needs at least 4 intervals, got {len(series)}")
    t = series.end_times
    span = t[-1] - t[0]
    n = int(math.floor(span * rate + 1e-9)) + 1
    grid = t[0] + np.arange(n) / rate
    spline = CubicSpline(t, series.durations, bc_type="natural")
    return UniformSeries(values=spline(grid), rate=float(rate), t0=float(t[0]))
