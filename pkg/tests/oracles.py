"""Independent reference implementations used as test oracles.

Everything here is written from the textbook definitions with plain loops, sharing
no code with the package.
"""
import itertools
import math


def apen_oracle(x, m, r):
    n = len(x)

    def phi(k):
        count = n - k + 1
        total = 0.0
        for i in range(count):
            c = 0
            for j in range(count):
                if max(abs(x[i + t] - x[j + t]) for t in range(k)) <= r:
                    c += 1
            total += math.log(c / count)
        return total / count

    return phi(m) - phi(m + 1)


def sampen_counts_oracle(x, m, r):
    n = len(x)
    a = b = 0
    for i in range(n - m):
        for j in range(i + 1, n - m):
            if max(abs(x[i + t] - x[j + t]) for t in range(m)) <= r:
                b += 1
                if abs(x[i + m] - x[j + m]) <= r:
                    a += 1
    return a, b


def sampen_oracle(x, m, r):
    a, b = sampen_counts_oracle(x, m, r)
    if a == 0 or b == 0:
        return None
    return -math.log(a / b)


def pop_sd(x):
    mu = sum(x) / len(x)
    return math.sqrt(sum((v - mu) ** 2 for v in x) / len(x))


def midranks(values):
    a = [abs(v) for v in values]
    order = sorted(range(len(a)), key=lambda i: a[i])
    ranks = [0.0] * len(a)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and a[order[j + 1]] == a[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def wilcoxon_enumeration_p(d):
    """Exact two-sided p by listing every one of the 2**n sign assignments."""
    d = [v for v in d if v != 0]
    ranks = midranks(d)
    w_obs = sum(r for r, v in zip(ranks, d) if v > 0)
    le = ge = 0
    for signs in itertools.product((0, 1), repeat=len(d)):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if w <= w_obs + 1e-9:
            le += 1
        if w >= w_obs - 1e-9:
            ge += 1
    return min(1.0, 2 * min(le, ge) / 2 ** len(d))


def two_means_oracle(values):
    """Minimum within-cluster SSE over every non-trivial two-way partition by threshold.

    Returns the SSE of the best partition; any optimal 1-D partition is a threshold
    split, and checking every subset is used for small inputs in the tests.
    """
    best = math.inf
    distinct = sorted(set(values))
    for thr in distinct[1:]:
        lo = [v for v in values if v < thr]
        hi = [v for v in values if v >= thr]
        best = min(best, _sse(lo) + _sse(hi))
    return best


def two_means_subsets_oracle(values):
    """Minimum SSE over all 2**n - 2 non-empty bipartitions (for small n)."""
    n = len(values)
    best = math.inf
    for mask in range(1, 2 ** n - 1):
        lo = [values[i] for i in range(n) if mask >> i & 1]
        hi = [values[i] for i in range(n) if not mask >> i & 1]
        best = min(best, _sse(lo) + _sse(hi))
    return best


def _sse(v):
    if not v:
        return 0.0
    mu = sum(v) / len(v)
    return sum((x - mu) ** 2 for x in v)


def match_beats(detected, truth, tol=0.05):
    """Greedy one-to-one matching; returns (true positives, false positives, false negatives)."""
    detected = sorted(detected)
    truth = sorted(truth)
    i = j = tp = 0
    while i < len(detected) and j < len(truth):
        dt = detected[i] - truth[j]
        if abs(dt) <= tol:
            tp += 1
            i += 1
            j += 1
        elif dt < 0:
            i += 1
        else:
            j += 1
    return tp, len(detected) - tp, len(truth) - tp
