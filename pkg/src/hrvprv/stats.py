"""Paired HRV-vs-PRV comparison: normality gate, paired tests, Bonferroni, report."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from hrvprv.features import FEATURE_NAMES

N_FEATURES = len(FEATURE_NAMES)
NORMALITY_ALPHA = 0.05
EXACT_WILCOXON_MAX_N = 25
MIN_PAIRS = 5


class StatsError(ValueError):
    pass


class TestUsed(str, enum.Enum):
    PAIRED_T = "PAIRED_T"
    WILCOXON = "WILCOXON"


def bonferroni_alpha(alpha: float = 0.05, n_tests: int = N_FEATURES) -> float:
    return alpha / n_tests


@dataclass(frozen=True)
class PairedSample:
    feature_name: str
    hrv_values: tuple
    prv_values: tuple
    n_excluded: int = 0

    def __post_init__(self):
        h = tuple(float(v) for v in self.hrv_values)
        p = tuple(float(v) for v in self.prv_values)
        if len(h) != len(p):
            raise StatsError(f"{self.feature_name}: HRV and PRV sequences differ in length")
        if len(h) < MIN_PAIRS:
            raise StatsError(f"{self.feature_name}: need at least {MIN_PAIRS} pairs, got {len(h)}")
        if not all(map(math.isfinite, h + p)):
            raise StatsError(f"{self.feature_name}: non-finite values")
        object.__setattr__(self, "hrv_values", h)
        object.__setattr__(self, "prv_values", p)


@dataclass(frozen=True)
class ComparisonResult:
    feature_name: str
    normality_p: float | None
    test_used: TestUsed | None
    p_value: float | None
    significant: bool
    alpha_corrected: float
    n_pairs: int = 0
    n_excluded: int = 0
    error: str | None = None

    def to_dict(self):
        return {
            "normality_p": self.normality_p,
            "test_used": None if self.test_used is None else self.test_used.value,
            "p_value": self.p_value,
            "significant": self.significant,
            "n_pairs": self.n_pairs,
            "n_excluded": self.n_excluded,
            "error": self.error,
        }


# --- Shapiro-Wilk (Royston 1995, AS R94) -----------------------------------------

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)
_NORMAL = NormalDist()


def _poly(coef, x):
    out = 0.0
    for c in reversed(coef):
        out = out * x + c
    return out


def _sw_coefficients(n):
    """Lower-half weights ``a_1..a_{n//2}`` (positive), largest first."""
    nn2 = n // 2
    if n == 3:
        return np.array([math.sqrt(0.5)])
    m = np.array([_NORMAL.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, nn2 + 1)])
    summ2 = 2.0 * float(np.sum(m * m))
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a1 = _poly(_C1, rsn) - m[0] / ssumm2
    a = -m / ssumm2
    if n > 5:
        a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2) / (1.0 - 2.0 * a1**2 - 2.0 * a2**2))
        a = -m / fac
        a[1] = a2
    else:
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1**2))
        a = -m / fac
    a[0] = a1
    return a


def shapiro_wilk(x) -> tuple[float, float]:
    """Shapiro-Wilk ``(W, p)`` using Royston's approximation, valid for 3 <= n <= 5000."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n < 3 or n > 5000:
        raise StatsError(f"Shapiro-Wilk needs 3 <= n <= 5000, got n={n}")
    rng = x[-1] - x[0]
    if rng <= 1e-19 * max(1.0, abs(x[0])):
        raise StatsError("Shapiro-Wilk undefined for constant input")
    a = _sw_coefficients(n)
    nn2 = n // 2
    lower = x[:nn2]
    upper = x[::-1][:nn2]
    xs = x / rng
    num = float(np.sum(a * (upper - lower) / rng)) ** 2
    den = float(np.sum((xs - xs.mean()) ** 2))
    w = min(1.0, num / den)
    if n == 3:
        p = 1.90985931710274 * (math.asin(math.sqrt(w)) - 1.04719755119660)
        return w, max(0.0, min(1.0, p))
    if w >= 1.0:
        return w, 1.0
    w1 = math.log(1.0 - w)
    if n <= 11:
        gamma = _poly(_G, n)
        if w1 >= gamma:
            return w, 1e-99
        y = -math.log(gamma - w1)
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        y = w1
        mu = _poly(_C5, ln)
        sigma = math.exp(_poly(_C6, ln))
    z = (y - mu) / sigma
    return w, 0.5 * math.erfc(z / math.sqrt(2.0))


# --- Student t via the regularized incomplete beta -------------------------------


def _betacf(a, b, x, max_iter=300, eps=1e-15):
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    return h


def betainc(a, b, x):
    """Regularized incomplete beta ``I_x(a, b)``."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbt = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t, df):
    if math.isinf(t):
        return 0.0
    return betainc(0.5 * df, 0.5, df / (df + t * t))


def paired_t(x, y) -> float:
    """Two-sided paired t-test p-value.

    All-zero differences give ``p = 1``; constant non-zero differences give ``p = 0``.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if d.size < 2:
        raise StatsError("paired t-test needs at least 2 pairs")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0 or np.ptp(d) == 0:
        return 1.0 if mean == 0.0 else 0.0
    t = mean / (sd / math.sqrt(d.size))
    return t_two_sided_p(t, d.size - 1)


# --- Wilcoxon signed-rank ----------------------------------------------------------


def rank_abs(d):
    """Mid-ranks of ``|d|`` (1-based)."""
    a = np.abs(np.asarray(d, dtype=float))
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size)
    sa = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sa[j + 1] == sa[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def exact_wplus_distribution(ranks):
    """Counts of each attainable doubled ``W+`` over all ``2**n`` sign assignments.

    Mid-ranks are multiples of 0.5, so doubled ranks are integers and the subset-sum
    recurrence enumerates the sign patterns exactly (tie-aware).
    """
    r2 = np.rint(2.0 * np.asarray(ranks)).astype(np.int64)
    counts = [1] + [0] * int(r2.sum())
    for r in r2:
        r = int(r)
        for s in range(len(counts) - 1, r - 1, -1):
            counts[s] += counts[s - r]
    return counts


def _exact_p(ranks, w_plus):
    counts = exact_wplus_distribution(ranks)
    total = 2 ** len(ranks)
    w2 = int(round(2 * w_plus))
    le = sum(counts[: w2 + 1])
    ge = sum(counts[w2:])
    return min(1.0, 2.0 * min(le, ge) / total)


def wilcoxon_signed_rank(x, y=None, exact_max_n: int = EXACT_WILCOXON_MAX_N) -> float:
    """Two-sided Wilcoxon signed-rank p-value on paired differences.

    Zero differences are dropped and tied ``|d|`` share mid-ranks. Up to
    ``exact_max_n`` remaining pairs the exact null distribution is used; above it a
    normal approximation with tie-corrected variance and continuity correction.
    """
    d = np.asarray(x, dtype=float)
    if y is not None:
        d = d - np.asarray(y, dtype=float)
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise StatsError("Wilcoxon undefined: all differences are zero")
    ranks = rank_abs(d)
    w_plus = float(ranks[d > 0].sum())
    if n <= exact_max_n:
        return _exact_p(ranks, w_plus)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    z = max(0.0, abs(w_plus - mean) - 0.5) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


# --- protocol ------------------------------------------------------------------------


def compare_feature(sample: PairedSample, alpha_corrected: float) -> ComparisonResult:
    h = np.asarray(sample.hrv_values)
    p = np.asarray(sample.prv_values)
    d = h - p
    base = dict(
        feature_name=sample.feature_name,
        alpha_corrected=alpha_corrected,
        n_pairs=int(d.size),
        n_excluded=sample.n_excluded,
    )
    if np.ptp(d) == 0:
        # constant differences: no spread to test normality on
        pv = paired_t(h, p)
        return ComparisonResult(normality_p=None, test_used=TestUsed.PAIRED_T, p_value=pv, significant=pv < alpha_corrected, **base)
    _, norm_p = shapiro_wilk(d)
    if norm_p >= NORMALITY_ALPHA:
        test, pv = TestUsed.PAIRED_T, paired_t(h, p)
    else:
        test, pv = TestUsed.WILCOXON, wilcoxon_signed_rank(d)
    return ComparisonResult(normality_p=norm_p, test_used=test, p_value=pv, significant=pv < alpha_corrected, **base)


def compare_features(samples, alpha: float = 0.05, n_tests: int = N_FEATURES):
    """Run the paired protocol on each feature; results follow ``FEATURE_NAMES`` order.

    ``samples`` maps feature name to a :class:`PairedSample`, or to an exception
    describing why the sample could not be built. Per-feature failures are recorded
    in the result instead of aborting the batch.
    """
    if not isinstance(samples, dict):
        samples = {s.feature_name: s for s in samples}
    missing = [f for f in FEATURE_NAMES if f not in samples]
    if missing:
        raise StatsError(f"missing features: {', '.join(missing)}")
    alpha_c = bonferroni_alpha(alpha, n_tests)
    out = []
    for name in FEATURE_NAMES:
        s = samples[name]
        try:
            if isinstance(s, Exception):
                raise s
            out.append(compare_feature(s, alpha_c))
        except (StatsError, ValueError) as exc:
            out.append(
                ComparisonResult(
                    feature_name=name,
                    normality_p=None,
                    test_used=None,
                    p_value=None,
                    significant=False,
                    alpha_corrected=alpha_c,
                    n_excluded=getattr(s, "n_excluded", 0),
                    error=str(exc),
                )
            )
    return out


def build_paired_samples(hrv_sets, prv_sets):
    """Pair per-session HRV and PRV :class:`FeatureSet` lists feature by feature.

    Sessions where either side is undefined for a feature are excluded for that
    feature only. Returns ``{feature: PairedSample | StatsError}``.
    """
    if len(hrv_sets) != len(prv_sets):
        raise StatsError("HRV and PRV feature lists must align by session")
    out = {}
    for name in FEATURE_NAMES:
        h, p = [], []
        excluded = 0
        for fh, fp in zip(hrv_sets, prv_sets):
            a, b = fh.get(name), fp.get(name)
            if a is None or b is None:
                excluded += 1
                continue
            h.append(a)
            p.append(b)
        try:
            out[name] = PairedSample(name, h, p, n_excluded=excluded)
        except StatsError as exc:
            out[name] = exc
            exc.n_excluded = excluded
    return out


@dataclass
class Report:
    """Per-phase comparison results rendered as a text grid and as JSON."""

    phases: dict = field(default_factory=dict)  # phase -> list[ComparisonResult]
    alpha: float = 0.05
    n_sessions: dict = field(default_factory=dict)

    def to_json_obj(self):
        return {phase: {r.feature_name: r.to_dict() for r in results} for phase, results in self.phases.items()}

    def to_json(self):
        return json.dumps(self.to_json_obj(), indent=2) + "\n"

    def significant_counts(self):
        return {phase: sum(r.significant for r in results) for phase, results in self.phases.items()}


def _fmt_p(r: ComparisonResult):
    if r.p_value is None:
        return "n/a"
    p = r.p_value
    s = f"{p:.4f}" if p >= 1e-4 else f"{p:.0e}"
    return s + ("*" if r.significant else "")


def render_report(phases: dict, alpha: float = 0.05, n_tests: int = N_FEATURES) -> tuple[str, dict]:
    """Text table (one row per feature, one column per phase) and its JSON twin.

    Significant cells carry an asterisk; features with excluded sessions get a
    footnote with the exclusion count.
    """
    order = [p for p in ("supine", "transition", "standing") if p in phases] + [
        p for p in phases if p not in ("supine", "transition", "standing")
    ]
    headers = [""] + [p.capitalize() for p in order]
    rows = []
    notes = []
    for i, name in enumerate(FEATURE_NAMES):
        cells = []
        marks = ""
        for phase in order:
            r = phases[phase][i]
            cells.append(_fmt_p(r))
            if r.n_excluded or r.error:
                detail = f"{r.n_excluded} session(s) excluded" if r.n_excluded else ""
                if r.error:
                    detail = f"{detail}; {r.error}" if detail else r.error
                notes.append(f"{name} [{phase}]: {detail}")
                marks = "†"
        rows.append([name + marks] + cells)
    widths = [max(len(str(row[c])) for row in [headers] + rows) for c in range(len(headers))]
    line = lambda row: "  ".join(str(v).ljust(w) if c == 0 else str(v).rjust(w) for c, (v, w) in enumerate(zip(row, widths)))  # noqa: E731
    rule = "-" * len(line(headers))
    alpha_c = bonferroni_alpha(alpha, n_tests)
    text = [
        "p-values of the paired HRV vs PRV tests; significant cells marked with *",
        f"α = {alpha_c:.4f} (Bonferroni, {n_tests} tests)",
        rule,
        line(headers),
        rule,
        *[line(r) for r in rows],
        rule,
    ]
    if notes:
        text.append("† " + "\n† ".join(notes))
    doc = {phase: {r.feature_name: r.to_dict() for r in phases[phase]} for phase in order}
    return "\n".join(text) + "\n", doc
