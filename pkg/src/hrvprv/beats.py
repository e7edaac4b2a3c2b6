"""Beat detection: Pan-Tompkins R peaks for ECG, multi-scale peak/trough detection for PPG.

Both detectors return timestamps in seconds relative to the first sample (plus an
optional ``t0`` offset). Filtering is zero-phase so fiducials carry no group delay.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.ndimage import uniform_filter1d


class DetectionError(ValueError):
    pass


class BeatSource(str, enum.Enum):
    ECG_R_PEAK = "ECG_R_PEAK"
    PPG_MIDPOINT = "PPG_MIDPOINT"


@dataclass(frozen=True, eq=False)
class BeatSeries:
    timestamps: np.ndarray
    source: BeatSource
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        if t.ndim != 1:
            raise DetectionError("timestamps must be 1-D")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise DetectionError("beat timestamps must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "source", BeatSource(self.source))

    def __len__(self):
        return int(self.timestamps.size)


@dataclass(frozen=True, eq=False)
class PeakTroughSet:
    """Alternating PPG extrema, as sample indices into the full-rate signal."""

    peak_indices: np.ndarray
    trough_indices: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def pairs(self):
        """``(trough, peak)`` index pairs where the peak immediately follows the trough."""
        events = sorted([(int(i), 1) for i in self.peak_indices] + [(int(i), 0) for i in self.trough_indices])
        out = []
        for (i0, k0), (i1, k1) in zip(events, events[1:]):
            if k0 == 0 and k1 == 1:
                out.append((i0, i1))
        return out


@dataclass(frozen=True)
class PanTompkinsConfig:
    band_hz: tuple = (5.0, 15.0)
    integration_s: float = 0.150
    refractory_s: float = 0.200
    searchback_factor: float = 1.66
    twave_window_s: float = 0.360
    refine_s: float = 0.025
    learning_s: float = 2.0


@dataclass(frozen=True)
class MsptdConfig:
    target_rate_hz: float = 30.0
    min_rate_bpm: float = 30.0
    max_rate_bpm: float = 220.0
    window_s: float = 6.0
    overlap_s: float = 2.0
    refine_s: float = 0.050


def _parabolic_offset(y, i):
    if i <= 0 or i >= y.size - 1:
        return 0.0
    a, b, c = y[i - 1], y[i], y[i + 1]
    den = a - 2.0 * b + c
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))


def detect_r_peaks(ecg, rate: float, config: PanTompkinsConfig = PanTompkinsConfig(), t0: float = 0.0) -> BeatSeries:
    """Detect R peaks with the Pan-Tompkins decision rules.

    Parameters
    ----------
    ecg : array_like
        Single-lead ECG samples, R waves assumed positive.
    rate : float
        Sampling rate in Hz, at least 100.
    config : PanTompkinsConfig
        Filter band, integration width, refractory period and search-back factor.
    t0 : float
        Time of the first sample in seconds.

    Returns
    -------
    BeatSeries
        R-peak instants, refined to the raw ECG maximum within ``config.refine_s``
        and interpolated to sub-sample precision with a parabola fit.
    """
    x = np.asarray(ecg, dtype=float)
    if rate < 100:
        raise DetectionError(f"ECG sampling rate too low: {rate} Hz < 100 Hz")
    if x.size < 5 * rate:
        raise DetectionError(f"signal too short: {x.size / rate:.2f} s < 5 s")

    sos = signal.butter(2, config.band_hz, btype="bandpass", fs=rate, output="sos")
    bp = signal.sosfiltfilt(sos, x - np.median(x))
    deriv = np.convolve(bp, np.array([2.0, 1.0, 0.0, -1.0, -2.0]) * (rate / 8.0), mode="same")
    sq = deriv * deriv
    width = max(1, int(round(config.integration_s * rate)))
    width += 1 - width % 2
    mwi = uniform_filter1d(sq, width, mode="nearest")
    if not np.any(mwi > 0) or np.ptp(x) == 0:
        raise DetectionError("no beats detected")

    refractory = int(round(config.refractory_s * rate))
    cand, _ = signal.find_peaks(mwi, distance=max(1, refractory))
    cand = cand[mwi[cand] > 0]
    if cand.size == 0:
        raise DetectionError("no beats detected")

    # Slope for T-wave discrimination: steepest band-passed slope in the preceding 75 ms.
    slope_win = max(1, int(round(0.075 * rate)))
    abs_d = np.abs(np.gradient(bp))

    def max_slope(i):
        return float(abs_d[max(0, i - slope_win) : i + 1].max())

    learn = x.size if x.size < config.learning_s * rate else int(config.learning_s * rate)
    spki = mwi[:learn].max() / 3.0
    npki = mwi[:learn].mean() / 2.0
    thr1 = npki + 0.25 * (spki - npki)

    qrs = []
    qrs_slopes = []
    noise = []  # candidate indices classified as noise, kept for search-back
    searchback_hits = 0
    twave_rejects = 0

    def rr_avg():
        if len(qrs) < 2:
            return None
        recent = np.diff(qrs[-9:])
        return float(np.mean(recent))

    for c in cand:
        rr = rr_avg()
        if rr is not None and c - qrs[-1] > config.searchback_factor * rr:
            thr2 = 0.5 * thr1
            lo = qrs[-1] + refractory
            pool = [n for n in noise if lo <= n < c and mwi[n] >= thr2]
            if pool:
                best = max(pool, key=lambda n: mwi[n])
                qrs.append(best)
                qrs_slopes.append(max_slope(best))
                spki = 0.25 * mwi[best] + 0.75 * spki
                thr1 = npki + 0.25 * (spki - npki)
                searchback_hits += 1
                noise = [n for n in noise if n > best]
        pk = mwi[c]
        is_qrs = pk >= thr1
        if is_qrs and qrs and c - qrs[-1] < config.twave_window_s * rate:
            if max_slope(c) < 0.5 * qrs_slopes[-1]:
                is_qrs = False
                twave_rejects += 1
        if is_qrs:
            qrs.append(int(c))
            qrs_slopes.append(max_slope(c))
            spki = 0.125 * pk + 0.875 * spki
            noise = []
        else:
            noise.append(int(c))
            npki = 0.125 * pk + 0.875 * npki
        thr1 = npki + 0.25 * (spki - npki)

    if not qrs:
        raise DetectionError("no beats detected")

    coarse = int(round(width / 2))
    fine = max(1, int(round(config.refine_s * rate)))
    times = []
    for c in qrs:
        lo, hi = max(0, c - coarse), min(x.size, c + coarse + 1)
        b = lo + int(np.argmax(bp[lo:hi]))
        lo, hi = max(0, b - fine), min(x.size, b + fine + 1)
        r = lo + int(np.argmax(x[lo:hi]))
        times.append((r + _parabolic_offset(x, r)) / rate + t0)
    times = np.asarray(times)
    keep = np.concatenate([[True], np.diff(times) > 0.5 * config.refractory_s])
    diag = {"searchback_hits": searchback_hits, "twave_rejects": twave_rejects, "merged": int((~keep).sum())}
    return BeatSeries(times[keep], BeatSource.ECG_R_PEAK, diag)


def _scalogram_extrema(x, kmin, kmax, open_left, open_right):
    """Indices that are strict maxima at every scale up to the optimal scale k*.

    k* maximises the count of two-sided local maxima over ``[kmin, kmax]``. Near a
    true signal edge (``open_left``/``open_right``) neighbours beyond the edge are
    ignored instead of disqualifying the sample.
    """
    n = x.size
    kmax = min(kmax, int(math.ceil(n / 2)) - 1)
    if kmax < 1:
        return np.empty(0, dtype=int), 0
    kmin = min(max(1, kmin), kmax)
    is_max = np.ones(n, dtype=bool)
    is_max[0] = is_max[-1] = False
    gamma = np.zeros(kmax + 1, dtype=int)
    rows = []
    for k in range(1, kmax + 1):
        left = np.zeros(n, dtype=bool)
        right = np.zeros(n, dtype=bool)
        left[k:] = x[k:] > x[:-k]
        right[:-k] = x[:-k] > x[k:]
        gamma[k] = int((left & right).sum())
        if open_left:
            left[:k] = True
        if open_right:
            right[n - k :] = True
        rows.append(left & right)
    kstar = kmin + int(np.argmax(gamma[kmin : kmax + 1]))
    for k in range(kstar):
        is_max &= rows[k]
    return np.flatnonzero(is_max), kstar


def _dedupe(idx, x, min_sep, prefer_high):
    if idx.size == 0:
        return idx
    out = [int(idx[0])]
    for i in idx[1:]:
        i = int(i)
        if i - out[-1] < min_sep:
            better = x[i] > x[out[-1]] if prefer_high else x[i] < x[out[-1]]
            if better:
                out[-1] = i
        else:
            out.append(i)
    return np.asarray(out, dtype=int)


def detect_ppg_peaks_troughs(ppg, rate: float, config: MsptdConfig = MsptdConfig()) -> PeakTroughSet:
    """Multi-scale peak and trough detection on overlapping windows.

    The signal is box-car smoothed and decimated to at most ``config.target_rate_hz``
    before the local-maxima scalograms are built; detected extrema are refined on the
    full-rate signal within ``config.refine_s``.
    """
    x = np.asarray(ppg, dtype=float)
    if rate < 20:
        raise DetectionError(f"PPG sampling rate too low: {rate} Hz < 20 Hz")
    if x.size < 5 * rate:
        raise DetectionError(f"window too short: {x.size / rate:.2f} s < 5 s")
    if np.ptp(x) == 0:
        raise DetectionError("no alternating pairing possible: constant signal")

    q = max(1, int(math.ceil(rate / config.target_rate_hz)))
    smooth = uniform_filter1d(x, 2 * (q // 2) + 1, mode="nearest") if q > 1 else x
    xd = smooth[::q]
    fs = rate / q
    kmax = int(math.ceil(fs * 60.0 / config.min_rate_bpm / 2.0))
    kmin = max(1, int(math.floor(fs * 60.0 / config.max_rate_bpm / 2.0)))
    win = int(round(config.window_s * fs))
    step = max(1, int(round((config.window_s - config.overlap_s) * fs)))
    if xd.size <= win:
        starts = [0]
    else:
        starts = list(range(0, xd.size - win + 1, step))
        if starts[-1] + win < xd.size:
            starts.append(xd.size - win)

    scale = np.ptp(x)
    peaks, troughs, kstars = [], [], []
    for s in starts:
        seg = xd[s : s + win]
        if np.ptp(seg) <= 1e-9 * scale:
            kstars.append(0)
            continue
        seg = signal.detrend(seg)
        open_l = s == 0
        open_r = s + win >= xd.size
        p, kp = _scalogram_extrema(seg, kmin, kmax, open_l, open_r)
        t, _ = _scalogram_extrema(-seg, kmin, kmax, open_l, open_r)
        kstars.append(kp)
        peaks.extend((p + s).tolist())
        troughs.extend((t + s).tolist())

    tol = max(q, int(round(config.refine_s * rate)))

    def refine(idx, fn):
        out = []
        for i in sorted(set(idx)):
            c = i * q
            lo, hi = max(0, c - tol), min(x.size, c + tol + 1)
            out.append(lo + int(fn(x[lo:hi])))
        return np.unique(np.asarray(out, dtype=int))

    min_sep = int(round(rate * 60.0 / config.max_rate_bpm))
    p = _dedupe(refine(peaks, np.argmax), x, min_sep, True)
    t = _dedupe(refine(troughs, np.argmin), x, min_sep, False)

    # Enforce alternation, keeping the more extreme of consecutive same-type events.
    events = sorted([(int(i), 1) for i in p] + [(int(i), 0) for i in t])
    alt = []
    for i, kind in events:
        if alt and alt[-1][1] == kind:
            j = alt[-1][0]
            if (kind == 1 and x[i] > x[j]) or (kind == 0 and x[i] < x[j]):
                alt[-1] = (i, kind)
            continue
        if alt and alt[-1][0] == i:
            continue
        alt.append((i, kind))
    pk = np.asarray([i for i, k in alt if k == 1], dtype=int)
    tr = np.asarray([i for i, k in alt if k == 0], dtype=int)
    result = PeakTroughSet(pk, tr, {"decimation": q, "kstar_per_window": kstars})
    if not result.pairs():
        raise DetectionError("no alternating peak/trough pairing possible")
    return result


def midpoints(pt: PeakTroughSet, ppg, rate: float, t0: float = 0.0, interpolate: bool = True) -> BeatSeries:
    """Rising-edge half-amplitude instants between each trough and the following peak.

    With ``interpolate`` the crossing is located linearly between the last sample
    below the level and the first sample at or above it.
    """
    x = np.asarray(ppg, dtype=float)
    times, used_troughs, used_peaks = [], [], []
    skipped = len(pt.peak_indices) + len(pt.trough_indices)
    for tr, pk in pt.pairs():
        skipped -= 2
        lo_amp, hi_amp = x[tr], x[pk]
        if hi_amp <= lo_amp:
            skipped += 2
            continue
        level = 0.5 * (lo_amp + hi_amp)
        seg = x[tr : pk + 1]
        k = int(np.argmax(seg >= level))
        if interpolate and k > 0:
            a, b = seg[k - 1], seg[k]
            ti = tr + k - 1 + (level - a) / (b - a)
        else:
            ti = tr + k
        t = ti / rate + t0
        if times and t <= times[-1]:
            skipped += 2
            continue
        times.append(t)
        used_troughs.append(tr)
        used_peaks.append(pk)
    if not times:
        raise DetectionError("no valid trough/peak pairs: all extrema skipped")
    diag = {"skipped_extrema": skipped, "trough_indices": used_troughs, "peak_indices": used_peaks}
    return BeatSeries(np.asarray(times), BeatSource.PPG_MIDPOINT, diag)
