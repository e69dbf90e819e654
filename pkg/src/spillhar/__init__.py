"""Realized-measure construction, quantile spillover estimation, and
state-adaptive HAR volatility forecasting."""

from ._kernels import BACKEND as kernel_backend
from .panels import MEASURE_KINDS, MeasurePanel, ReturnPanel, load_price_csv

__version__ = "0.1.0"

__all__ = [
    "MEASURE_KINDS",
    "MeasurePanel",
    "ReturnPanel",
    "load_price_csv",
    "kernel_backend",
    "__version__",
]
