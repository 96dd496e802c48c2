"""Weekly persistent benchmark with hour-specific Gaussian errors."""
from __future__ import annotations

import logging

import numpy as np

from ..errors import InsufficientHistoryError
from .base import BenchmarkForecast

log = logging.getLogger(__name__)


def persistent(price: np.ndarray, target: int, window_days: int | None = None) -> BenchmarkForecast:
    """Forecast day ``target`` of a ``(n_days, 24)`` price array from day ``target - 7``.

    The error variance of hour h is the mean squared weekly difference over the
    history (the last ``window_days`` days before ``target`` when given).
    """
    if target < 7:
        raise InsufficientHistoryError("the persistent model needs at least 7 days of prices")
    start = 0 if window_days is None else max(0, target - window_days)
    hist = np.asarray(price[start:target], dtype=float)
    diff = hist[7:] - hist[:-7]
    if diff.shape[0] == 0:
        log.info("no weekly differences available, using zero variance")
        sigma = np.zeros(24)
    else:
        sigma = np.sqrt(np.nanmean(diff**2, axis=0))
    return BenchmarkForecast.gaussian("persistent", price[target - 7], sigma)
