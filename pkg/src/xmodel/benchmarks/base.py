"""Predictive densities shared by the benchmark models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri


@dataclass(frozen=True, eq=False)
class BenchmarkForecast:
    """Point forecast and Gaussian-mixture density per hour.

    ``weights``, ``means`` and ``sds`` have shape ``(24, K)``; K = 1 is a plain
    Gaussian. ``point`` is the mixture mean unless a model says otherwise.
    """

    model: str
    point: np.ndarray
    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < -1e-12) or not np.allclose(w.sum(axis=1), 1.0):
            raise ValueError("mixture weights must be non-negative and sum to 1")

    @classmethod
    def gaussian(cls, model: str, mean, sd) -> "BenchmarkForecast":
        mean = np.asarray(mean, dtype=float)
        sd = np.broadcast_to(np.asarray(sd, dtype=float), mean.shape)
        return cls(model, mean.copy(), np.ones((mean.size, 1)), mean[:, None].copy(), sd[:, None].copy())

    def cdf(self, x) -> np.ndarray:
        """Predictive CDF at ``x`` (one value per hour)."""
        x = np.asarray(x, dtype=float)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (x - self.means) / self.sds
        comp = np.where(self.sds > 0, ndtr(z), (x >= self.means).astype(float))
        return (self.weights * comp).sum(axis=1)

    def quantiles(self, levels) -> np.ndarray:
        """``(24, len(levels))`` quantiles by inverting the mixture CDF."""
        levels = np.asarray(levels, dtype=float)
        if self.weights.shape[1] == 1:
            return self.means + self.sds * ndtri(levels)[None, :]
        out = np.empty((self.point.size, levels.size))
        lo = (self.means - 10 * self.sds).min(axis=1) - 1e-9
        hi = (self.means + 10 * self.sds).max(axis=1) + 1e-9
        for i, q in enumerate(levels):
            a, b = lo.copy(), hi.copy()
            for _ in range(100):  # bisection, vectorized over hours
                mid = 0.5 * (a + b)
                below = self.cdf(mid) < q
                a = np.where(below, mid, a)
                b = np.where(below, b, mid)
            out[:, i] = 0.5 * (a + b)
        return out
