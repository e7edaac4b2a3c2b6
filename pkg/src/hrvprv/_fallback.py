"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same functions with identical integer outputs.
"""
import numpy as np

_BLOCK = 512


def _embed(x, length, count):
    return np.lib.stride_tricks.sliding_window_view(x, length)[:count]


def apen_counts(x, m, r):
    x = np.ascontiguousarray(x, dtype=float)
    nm = x.size - m + 1
    emb = _embed(x, m, nm)
    cm = np.zeros(nm, dtype=np.int64)
    cm1 = np.zeros(nm - 1, dtype=np.int64)
    last = x[m:]  # element m of each (m+1)-template
    for start in range(0, nm, _BLOCK):
        stop = min(start + _BLOCK, nm)
        dist = np.abs(emb[start:stop, None, :] - emb[None, :, :]).max(axis=2)
        match = dist <= r
        cm[start:stop] = match.sum(axis=1)
        rows = min(stop, nm - 1)
        if rows > start:
            ext = np.abs(last[start:rows, None] - last[None, :]) <= r
            cm1[start:rows] = (match[: rows - start, : nm - 1] & ext).sum(axis=1)
    return cm, cm1


def sampen_counts(x, m, r):
    x = np.ascontiguousarray(x, dtype=float)
    nt = x.size - m
    emb = _embed(x, m, nt)
    last = x[m : m + nt]
    a = 0
    b = 0
    for start in range(0, nt, _BLOCK):
        stop = min(start + _BLOCK, nt)
        dist = np.abs(emb[start:stop, None, :] - emb[None, :, :]).max(axis=2)
        match = dist <= r
        ext = np.abs(last[start:stop, None] - last[None, :]) <= r
        # strict upper triangle: j > i
        upper = np.arange(nt)[None, :] > np.arange(start, stop)[:, None]
        match &= upper
        b += int(match.sum())
        a += int((match & ext).sum())
    return a, b
