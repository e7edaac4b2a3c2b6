"""The fifteen HRV/PRV features: time domain, spectral, Poincaré and entropy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.integrate import trapezoid

from hrvprv import kernels
from hrvprv.intervals import IntervalSeries, interpolate_uniform

#: Column names in output order.
FEATURE_NAMES = (
    "AHR", "RMSSD", "SDNN", "SDSD", "pNN50",
    "LF", "HF", "nLF", "nHF", "LF/HF",
    "SD1", "SD2", "SD2/SD1", "ApEn", "SampEn",
)  # fmt: skip
_ATTR = dict(zip(FEATURE_NAMES, (
    "ahr", "rmssd", "sdnn", "sdsd", "pnn50",
    "lf", "hf", "nlf", "nhf", "lf_hf",
    "sd1", "sd2", "sd2_sd1", "apen", "sampen",
)))  # fmt: skip

DEFAULT_BANDS = (0.04, 0.15, 0.15, 0.40)
DEFAULT_RESAMPLE_HZ = 4.0
MIN_SPECTRAL_SPAN_S = 60.0
MIN_ENTROPY_INTERVALS = 30


class FeatureError(ValueError):
    def __init__(self, feature, message):
        self.feature = feature
        super().__init__(f"{feature}: {message}")


@dataclass(frozen=True)
class FeatureSet:
    """Feature values; ``None`` marks an undefined feature whose reason is in ``flags``.

    ``flags`` may also hold ``"degenerate"`` notes for defined values (entropy of a
    constant series).
    """

    ahr: float | None = None
    rmssd: float | None = None
    sdnn: float | None = None
    sdsd: float | None = None
    pnn50: float | None = None
    lf: float | None = None
    hf: float | None = None
    nlf: float | None = None
    nhf: float | None = None
    lf_hf: float | None = None
    sd1: float | None = None
    sd2: float | None = None
    sd2_sd1: float | None = None
    apen: float | None = None
    sampen: float | None = None
    flags: dict = field(default_factory=dict)

    def get(self, name):
        return getattr(self, _ATTR.get(name, name))

    def to_dict(self):
        """Flat mapping keyed by the display feature names (``None`` when undefined)."""
        return {name: self.get(name) for name in FEATURE_NAMES}

    def csv_row(self):
        return ["" if v is None else repr(float(v)) for v in self.to_dict().values()]

    @classmethod
    def from_dict(cls, d, flags=None):
        kw = {}
        for name in FEATURE_NAMES:
            v = d.get(name)
            kw[_ATTR[name]] = None if v in (None, "") else float(v)
        return cls(**kw, flags=dict(flags or {}))


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    freqs: np.ndarray
    power: np.ndarray
    windowed_variance: float = 0.0

    @property
    def df(self):
        return float(self.freqs[1] - self.freqs[0]) if self.freqs.size > 1 else 0.0


def time_domain(series: IntervalSeries) -> dict:
    d = np.asarray(series.durations, dtype=float)
    if d.size < 3:
        raise FeatureError("time_domain", f"needs at least 3 intervals, got {d.size}")
    diff = np.diff(d)
    return {
        "ahr": 60000.0 / d.mean(),
        "rmssd": math.sqrt(np.mean(diff * diff)),
        "sdnn": float(np.std(d, ddof=1)),
        "sdsd": float(np.std(diff, ddof=1)),
        "pnn50": 100.0 * np.count_nonzero(np.abs(diff) > 50.0) / diff.size,
    }


def psd(series: IntervalSeries, rate: float = DEFAULT_RESAMPLE_HZ) -> PsdEstimate:
    """Hann-windowed periodogram of the spline-resampled tachogram.

    Densities are one-sided in ms²/Hz and scaled by the window power, so that
    ``sum(power) * df`` equals ``sum((w*x)**2) / sum(w**2)`` for the mean-removed
    series ``x`` and window ``w``.
    """
    if len(series) < 4:
        raise FeatureError("psd", f"needs at least 4 intervals, got {len(series)}")
    span = series.end_times[-1] - series.end_times[0]
    if span < MIN_SPECTRAL_SPAN_S:
        raise FeatureError("psd", f"span too short: {span:.1f} s < {MIN_SPECTRAL_SPAN_S:g} s")
    u = interpolate_uniform(series, rate)
    x = u.values - u.values.mean()
    n = x.size
    w = np.hanning(n)
    y = w * x
    spec = np.abs(np.fft.rfft(y)) ** 2
    wp = float(np.sum(w * w))
    power = spec / (rate * wp)
    if n % 2 == 0:
        power[1:-1] *= 2.0
    else:
        power[1:] *= 2.0
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    return PsdEstimate(freqs, power, float(np.sum(y * y) / wp))


def band_power(p: PsdEstimate, lo, hi, closed_hi=False):
    mask = (p.freqs >= lo) & ((p.freqs <= hi) if closed_hi else (p.freqs < hi))
    if mask.sum() < 2:
        return float(np.sum(p.power[mask]) * p.df)
    return float(trapezoid(p.power[mask], p.freqs[mask]))


def spectral_features(p: PsdEstimate, bands=DEFAULT_BANDS):
    """LF and HF band powers with normalized units and their ratio.

    Returns a dict of values; undefined entries are ``None`` and explained in the
    returned ``flags`` dict.
    """
    lf_lo, lf_hi, hf_lo, hf_hi = bands
    if p.freqs.size == 0 or p.freqs[-1] < hf_hi:
        raise FeatureError("spectral", f"PSD does not reach {hf_hi} Hz")
    lf = band_power(p, lf_lo, lf_hi)
    hf = band_power(p, hf_lo, hf_hi, closed_hi=True)
    out = {"lf": lf, "hf": hf, "nlf": None, "nhf": None, "lf_hf": None}
    flags = {}
    total = lf + hf
    if total > 0:
        out["nlf"] = lf / total
        out["nhf"] = hf / total
    else:
        flags["nLF"] = flags["nHF"] = "undefined: LF + HF = 0"
    if hf > 0:
        out["lf_hf"] = lf / hf
    else:
        flags["LF/HF"] = "undefined: HF = 0"
    return out, flags


def poincare(series: IntervalSeries):
    d = np.asarray(series.durations, dtype=float)
    if d.size < 3:
        raise FeatureError("poincare", f"needs at least 3 intervals, got {d.size}")
    sd1 = math.sqrt(0.5 * np.var(np.diff(d), ddof=1))
    sdnn2 = np.var(d, ddof=1)
    sd2 = math.sqrt(max(0.0, 2.0 * sdnn2 - sd1 * sd1))
    out = {"sd1": sd1, "sd2": sd2, "sd2_sd1": None}
    flags = {}
    if sd1 > 0:
        out["sd2_sd1"] = sd2 / sd1
    else:
        flags["SD2/SD1"] = "undefined: SD1 = 0"
    return out, flags


def _tolerance(d, r_frac):
    r = r_frac * float(np.std(d))
    if r == 0:
        return np.finfo(float).eps * max(1.0, float(np.max(np.abs(d)))), True
    return r, False


def _entropy_input(series, m, name):
    d = np.ascontiguousarray(series.durations if isinstance(series, IntervalSeries) else series, dtype=float)
    if d.size < MIN_ENTROPY_INTERVALS:
        raise FeatureError(name, f"needs at least {MIN_ENTROPY_INTERVALS} intervals, got {d.size}")
    if m < 1:
        raise FeatureError(name, "embedding dimension must be >= 1")
    return d


def apen(series, m: int = 2, r_frac: float = 0.2):
    """Approximate entropy; returns ``(value, degenerate)``.

    Chebyshev distance, matches at ``distance <= r`` with self-matches counted and
    ``r = r_frac * std(durations)`` (population SD).
    """
    d = _entropy_input(series, m, "ApEn")
    r, degenerate = _tolerance(d, r_frac)
    cm, cm1 = kernels.apen_counts(d, m, r)
    phi_m = np.mean(np.log(cm / cm.size))
    phi_m1 = np.mean(np.log(cm1 / cm1.size))
    return float(phi_m - phi_m1), degenerate


def sampen(series, m: int = 2, r_frac: float = 0.2):
    """Sample entropy ``-ln(A/B)``; returns ``(value or None, degenerate)``.

    ``None`` means A or B is zero and the entropy is undefined.
    """
    d = _entropy_input(series, m, "SampEn")
    r, degenerate = _tolerance(d, r_frac)
    a, b = kernels.sampen_counts(d, m, r)
    if a == 0 or b == 0:
        return None, degenerate
    return float(-math.log(a / b)), degenerate


def compute_feature_set(
    series: IntervalSeries,
    bands=DEFAULT_BANDS,
    resample_hz: float = DEFAULT_RESAMPLE_HZ,
    entropy_m: int = 2,
    entropy_r: float = 0.2,
) -> FeatureSet:
    values = dict(time_domain(series))
    flags = {}
    p = psd(series, resample_hz)
    spec, f = spectral_features(p, bands)
    values.update(spec)
    flags.update(f)
    poin, f = poincare(series)
    values.update(poin)
    flags.update(f)
    values["apen"], deg = apen(series, entropy_m, entropy_r)
    if deg:
        flags["ApEn"] = "degenerate: zero variance"
    values["sampen"], deg = sampen(series, entropy_m, entropy_r)
    if values["sampen"] is None:
        flags["SampEn"] = "undefined: no template matches"
    elif deg:
        flags["SampEn"] = "degenerate: zero variance"
    names = {f.name for f in fields(FeatureSet)}
    return FeatureSet(**{k: (None if v is None else float(v)) for k, v in values.items() if k in names}, flags=flags)
