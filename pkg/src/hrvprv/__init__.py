"""Heart rate variability (ECG) versus pulse rate variability (PPG) analysis."""
from hrvprv.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
