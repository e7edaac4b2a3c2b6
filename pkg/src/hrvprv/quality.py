"""Per-pulse PPG signal quality and the session acceptance rule."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from hrvprv.beats import BeatSeries

GOOD_RATIO_THRESHOLD = 80.0
MEAN_SQI_THRESHOLD = 0.8
PULSE_POINTS = 100


class QualityError(ValueError):
    pass


class DegenerateSplitWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class SqiSeries:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or np.any((v < 0) | (v > 1)) or not np.all(np.isfinite(v)):
            raise QualityError("SQI values must be finite and within [0, 1]")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return int(self.values.size)


@dataclass(frozen=True)
class QualityReport:
    good_ratio: float
    mean_sqi: float
    n_good: int
    n_total: int
    accepted: bool
    cluster_centroids: tuple[float, float]  # (low, high)
    degenerate: bool = False

    def to_dict(self):
        d = asdict(self)
        d["cluster_centroids"] = list(self.cluster_centroids)
        return d


def _pulse_bounds(beat_idx, troughs, n):
    """Start/end sample of each pulse: its own trough to the next pulse's trough."""
    starts = np.asarray(troughs, dtype=int)
    ends = np.empty_like(starts)
    ends[:-1] = starts[1:]
    last_len = starts[-1] - starts[-2] if starts.size > 1 else 2 * (beat_idx[-1] - starts[-1])
    ends[-1] = min(n - 1, starts[-1] + max(2, last_len))
    return starts, ends


def _estimate_troughs(x, beat_idx):
    troughs = np.empty(beat_idx.size, dtype=int)
    for i, b in enumerate(beat_idx):
        lo = beat_idx[i - 1] if i > 0 else max(0, b - (beat_idx[1] - b if beat_idx.size > 1 else b))
        troughs[i] = lo + int(np.argmin(x[lo : b + 1])) if b > lo else b
    return troughs


def compute_sqi(ppg, rate: float, beats: BeatSeries, troughs=None, t0: float = 0.0) -> SqiSeries:
    """Template-correlation SQI for each interval of ``beats``.

    Every pulse (trough to next trough) is resampled to 100 points, the template is
    the pointwise median pulse, and a pulse scores its Pearson correlation with the
    template clipped to [0, 1]. The interval ending at beat ``i`` is scored by pulse
    ``i``, so the result has ``len(beats) - 1`` entries.

    Parameters
    ----------
    troughs : array_like of int, optional
        Pulse onset sample for every beat. When omitted, the minimum between
        consecutive fiducials is used.
    """
    x = np.asarray(ppg, dtype=float)
    if len(beats) < 5:
        raise QualityError(f"SQI template needs at least 5 beats, got {len(beats)}")
    beat_idx = np.clip(np.round((beats.timestamps - t0) * rate).astype(int), 0, x.size - 1)
    troughs = _estimate_troughs(x, beat_idx) if troughs is None else np.asarray(troughs, dtype=int)
    if troughs.size != beat_idx.size:
        raise QualityError("troughs must align with beats")
    starts, ends = _pulse_bounds(beat_idx, troughs, x.size)
    grid = np.linspace(0.0, 1.0, PULSE_POINTS)
    pulses = np.empty((starts.size, PULSE_POINTS))
    for i, (a, b) in enumerate(zip(starts, ends)):
        seg = x[a : b + 1] if b > a else x[a : a + 2]
        pulses[i] = np.interp(grid, np.linspace(0.0, 1.0, seg.size), seg)
    template = np.median(pulses, axis=0)
    tc = template - template.mean()
    tn = np.sqrt(np.sum(tc * tc))
    sqi = np.zeros(starts.size)
    for i, p in enumerate(pulses):
        pc = p - p.mean()
        pn = np.sqrt(np.sum(pc * pc))
        if pn == 0 or tn == 0:
            continue
        sqi[i] = np.clip(np.dot(pc, tc) / (pn * tn), 0.0, 1.0)
    return SqiSeries(sqi[1:])


def split_sqi(sqi: SqiSeries):
    """Exact 1-D two-means split of the SQI values.

    Sorting makes every optimal two-cluster partition a prefix/suffix split, so
    scanning the ``n - 1`` split points with prefix sums finds the global optimum.

    Returns
    -------
    high : ndarray of bool
        Membership of each value in the high-SQI cluster.
    centroids : tuple of float
        ``(low, high)`` cluster means.
    degenerate : bool
        True when fewer than two distinct values exist; all points are then high.
    """
    v = sqi.values
    if v.size == 0:
        raise QualityError("empty SQI series")
    if np.unique(v).size < 2:
        warnings.warn("all SQI values identical: single cluster, all points high", DegenerateSplitWarning, stacklevel=2)
        m = float(v.mean())
        return np.ones(v.size, dtype=bool), (m, m), True
    s = np.sort(v)
    n = s.size
    c1 = np.cumsum(s)
    c2 = np.cumsum(s * s)
    k = np.arange(1, n)  # size of the low cluster
    low_sse = c2[k - 1] - c1[k - 1] ** 2 / k
    high_sum = c1[-1] - c1[k - 1]
    high_sse = (c2[-1] - c2[k - 1]) - high_sum**2 / (n - k)
    sse = low_sse + high_sse
    # never split between equal values
    sse[s[k] == s[k - 1]] = np.inf
    best = int(np.argmin(sse))
    kk = best + 1
    threshold = s[kk]
    low_c = float(s[:kk].mean())
    high_c = float(s[kk:].mean())
    return v >= threshold, (low_c, high_c), False


def good_ratio(n_good: int, n_total: int) -> float:
    """Percentage of pulses in the high-SQI cluster."""
    if n_total < 1:
        raise QualityError("n_total must be at least 1")
    if not 0 <= n_good <= n_total:
        raise QualityError(f"n_good={n_good} outside [0, {n_total}]")
    return 100.0 * n_good / n_total


def accepts(good_ratio_pct: float, mean_sqi: float) -> bool:
    """Session acceptance rule; both comparisons are strict."""
    return bool(good_ratio_pct > GOOD_RATIO_THRESHOLD or mean_sqi > MEAN_SQI_THRESHOLD)


def assess_quality(sqi: SqiSeries) -> QualityReport:
    """Accept when the good ratio exceeds 80 % or the mean SQI exceeds 0.8."""
    if len(sqi) == 0:
        raise QualityError("empty SQI series")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSplitWarning)
        high, centroids, degenerate = split_sqi(sqi)
    n_good = int(high.sum())
    ratio = good_ratio(n_good, len(sqi))
    mean = float(sqi.values.mean())
    return QualityReport(
        good_ratio=ratio,
        mean_sqi=mean,
        n_good=n_good,
        n_total=len(sqi),
        accepted=accepts(ratio, mean),
        cluster_centroids=centroids,
        degenerate=degenerate,
    )
