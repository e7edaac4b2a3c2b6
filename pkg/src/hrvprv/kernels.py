"""Select the entropy kernel backend at import time.

The compiled extension is used when it was built; setting ``HRVPRV_PURE_PYTHON=1``
forces the numpy fallback.
"""
import os

from hrvprv import _fallback

BACKEND = "python"
apen_counts = _fallback.apen_counts
sampen_counts = _fallback.sampen_counts

if os.environ.get("HRVPRV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from hrvprv import _kernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        apen_counts = _kernels.apen_counts
        sampen_counts = _kernels.sampen_counts


def backends():
    """Return ``{name: (apen_counts, sampen_counts)}`` for every available backend."""
    out = {"python": (_fallback.apen_counts, _fallback.sampen_counts)}
    try:
        from hrvprv import _kernels
    except ImportError:
        return out
    out["cython"] = (_kernels.apen_counts, _kernels.sampen_counts)
    return out
