"""Per-session analysis: detect, build intervals, gate quality, slice phases, features."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from hrvprv import beats as bd
from hrvprv.features import DEFAULT_BANDS, DEFAULT_RESAMPLE_HZ, FeatureError, FeatureSet, compute_feature_set
from hrvprv.intervals import IntervalError, build_intervals, filter_outliers
from hrvprv.quality import QualityError, QualityReport, assess_quality, compute_sqi
from hrvprv.session import PHASES, PhaseTooShortError, Recording, SessionMeta, phase_window, slice_series
from hrvprv.stats import build_paired_samples, compare_features

log = logging.getLogger(__name__)

SOURCES = ("HRV", "PRV")


@dataclass
class RunConfig:
    input: list = field(default_factory=list)
    out: str = "out"
    alpha: float = 0.05
    bands: tuple = DEFAULT_BANDS
    resample_hz: float = DEFAULT_RESAMPLE_HZ
    entropy_m: int = 2
    entropy_r: float = 0.2
    seed: int = 7
    workers: int = 1
    quality_gate: bool = True
    export_intervals: bool = False
    align_ppi: bool = True

    def to_dict(self):
        d = asdict(self)
        d["bands"] = list(self.bands)
        return d


@dataclass
class SessionResult:
    subject_id: str
    features: dict = field(default_factory=dict)  # phase -> {"HRV": FeatureSet, "PRV": FeatureSet}
    missing: dict = field(default_factory=dict)  # phase -> reason
    quality: QualityReport | None = None
    rejected: str | None = None
    intervals: dict = field(default_factory=dict)  # "RRI"/"PPI" -> IntervalSeries
    diagnostics: dict = field(default_factory=dict)


def pulse_lag(r_times, p_times, max_lag_s: float = 1.0) -> float:
    """Median delay (s) from each PPG fiducial's preceding R peak, or NaN."""
    r = np.asarray(r_times, dtype=float)
    p = np.asarray(p_times, dtype=float)
    k = np.searchsorted(r, p, side="right") - 1
    ok = k >= 0
    lag = p[ok] - r[k[ok]]
    lag = lag[lag < max_lag_s]
    return float(np.median(lag)) if lag.size else math.nan


def analyze_session(recording: Recording, meta: SessionMeta, config: RunConfig = RunConfig()) -> SessionResult:
    """Run the full single-session pipeline; never raises for data problems.

    A session is rejected outright when detection fails, too many intervals are
    filtered out, or (with gating on) the PPG quality rule rejects it. A phase that
    cannot be analysed is listed in ``missing`` while the others proceed.
    """
    res = SessionResult(meta.subject_id)
    t0 = recording.start_time
    try:
        r_beats = bd.detect_r_peaks(recording.ecg_samples, recording.ecg_rate, t0=t0)
        pt = bd.detect_ppg_peaks_troughs(recording.ppg_samples, recording.ppg_rate)
        p_beats = bd.midpoints(pt, recording.ppg_samples, recording.ppg_rate, t0=t0)
    except bd.DetectionError as exc:
        res.rejected = f"beat detection failed: {exc}"
        return res
    res.diagnostics["ecg"] = dict(r_beats.diagnostics)
    res.diagnostics["ppg"] = {"skipped_extrema": p_beats.diagnostics["skipped_extrema"], **pt.diagnostics}
    lag = pulse_lag(r_beats.timestamps, p_beats.timestamps) if config.align_ppi else 0.0
    res.diagnostics["ppi_lag_s"] = lag
    if not math.isfinite(lag):
        lag = 0.0

    try:
        sqi = compute_sqi(
            recording.ppg_samples, recording.ppg_rate, p_beats, troughs=p_beats.diagnostics["trough_indices"], t0=t0
        )
        res.quality = assess_quality(sqi)
    except QualityError as exc:
        res.rejected = f"quality assessment failed: {exc}"
        return res
    if config.quality_gate and not res.quality.accepted:
        res.rejected = (
            f"PPG quality rejected: good ratio {res.quality.good_ratio:.1f}% <= 80% "
            f"and mean SQI {res.quality.mean_sqi:.3f} <= 0.8"
        )
        return res

    try:
        rri = filter_outliers(build_intervals(r_beats))
        ppi = filter_outliers(build_intervals(p_beats))
    except IntervalError as exc:
        res.rejected = f"interval construction failed: {exc}"
        return res
    res.intervals = {"RRI": rri, "PPI": ppi}
    for name, s in res.intervals.items():
        if s.unreliable:
            res.rejected = f"{name} unreliable: {s.n_removed}/{s.n_original} intervals removed as outliers"
            return res

    for phase in PHASES:
        try:
            window = phase_window(meta, phase)
            fs = {}
            for src, series, shift in zip(SOURCES, (rri, ppi), (0.0, lag)):
                sliced = slice_series(series, (window[0] + shift, window[1] + shift))
                fs[src] = compute_feature_set(
                    sliced,
                    bands=tuple(config.bands),
                    resample_hz=config.resample_hz,
                    entropy_m=config.entropy_m,
                    entropy_r=config.entropy_r,
                )
        except (PhaseTooShortError, IntervalError, FeatureError) as exc:
            res.missing[phase] = str(exc)
            continue
        res.features[phase] = fs
    if not res.features:
        res.rejected = "no phase could be analysed: " + "; ".join(f"{p}: {r}" for p, r in res.missing.items())
    return res


def compare_sessions(results, alpha: float = 0.05):
    """Paired comparison per phase over the sessions that have that phase.

    Returns ``{phase: list[ComparisonResult]}`` for phases with at least one session.
    """
    out = {}
    for phase in PHASES:
        hrv: list[FeatureSet] = []
        prv: list[FeatureSet] = []
        for r in results:
            if r.rejected is None and phase in r.features:
                hrv.append(r.features[phase]["HRV"])
                prv.append(r.features[phase]["PRV"])
        if hrv:
            out[phase] = compare_features(build_paired_samples(hrv, prv), alpha=alpha)
    return out
