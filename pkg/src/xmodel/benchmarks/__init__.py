"""Comparison models for the rolling study."""
from .ar import ARFit, ar_hourly, ar_univariate, autocovariance, fit_ar, levinson_durbin
from .base import BenchmarkForecast
from .persistent import persistent
from .regime import RegimeFit, fit_switching, regime_switching

__all__ = [
    "ARFit", "BenchmarkForecast", "RegimeFit", "ar_hourly", "ar_univariate", "autocovariance",
    "fit_ar", "fit_switching", "levinson_durbin", "persistent", "regime_switching",
]
