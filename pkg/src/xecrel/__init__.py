"""Computational reliability of streaming inference on volatile edge devices."""

from xecrel.errors import (
    ConfigError,
    ConvergenceError,
    InfeasibleError,
    QuadratureError,
    TraceError,
    XecrelError,
)
from xecrel.probkernel import Bounds, TruncNormModel, UniformModel
from xecrel.reliability import DeviceModel, reliability, reliability_curve, reliability_hist, reliability_mi

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "ConfigError",
    "ConvergenceError",
    "DeviceModel",
    "InfeasibleError",
    "QuadratureError",
    "TraceError",
    "TruncNormModel",
    "UniformModel",
    "XecrelError",
    "reliability",
    "reliability_curve",
    "reliability_hist",
    "reliability_mi",
]
