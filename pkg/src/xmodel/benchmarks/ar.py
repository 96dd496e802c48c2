"""Autoregressions fitted by Yule-Walker with AIC order selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientHistoryError, NumericalError
from .base import BenchmarkForecast


def autocovariance(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased sample autocovariances ``gamma(0..max_lag)`` of a demeaned series."""
    x = np.asarray(x, dtype=float)
    n = x.size
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    f = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    return acf / n


def levinson_durbin(gamma: np.ndarray, order: int):
    """Yule-Walker solutions for every order up to ``order``.

    Returns ``(phis, sigma2)`` where ``phis[p-1]`` holds the p coefficients of
    the AR(p) fit and ``sigma2[p]`` its innovation variance (``sigma2[0]`` is
    gamma(0)).
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma[0] <= 0:
        raise NumericalError("zero variance series")
    sigma2 = np.empty(order + 1)
    sigma2[0] = gamma[0]
    phi = np.zeros(order)
    phis = []
    for p in range(1, order + 1):
        acc = gamma[p] - phi[: p - 1] @ gamma[1:p][::-1]
        kappa = acc / sigma2[p - 1]
        if not abs(kappa) < 1:
            raise NumericalError(f"autocovariance matrix is not positive definite at order {p}")
        new = phi[: p - 1] - kappa * phi[: p - 1][::-1]
        phi[: p - 1] = new
        phi[p - 1] = kappa
        sigma2[p] = sigma2[p - 1] * (1 - kappa * kappa)
        phis.append(phi[:p].copy())
    return phis, sigma2


@dataclass(frozen=True, eq=False)
class ARFit:
    mean: float
    phi: np.ndarray
    sigma2: float
    aic: np.ndarray  # AIC per candidate order 1..max

    @property
    def order(self) -> int:
        return self.phi.size

    @property
    def intercept(self) -> float:
        return self.mean * (1 - self.phi.sum())

    def forecast(self, history: np.ndarray, steps: int):
        """Recursive multi-step forecast and its standard deviation per step."""
        p = self.order
        buf = list(np.asarray(history[-p:], dtype=float) - self.mean) if p else []
        out = np.empty(steps)
        for s in range(steps):
            nxt = float(np.dot(self.phi, buf[::-1][:p])) if p else 0.0
            out[s] = nxt + self.mean
            buf.append(nxt)
        # MA(infinity) weights for the forecast error variance
        psi = np.zeros(steps)
        psi[0] = 1.0
        for s in range(1, steps):
            k = min(s, p)
            psi[s] = np.dot(self.phi[:k], psi[s - k:s][::-1])
        sd = np.sqrt(self.sigma2 * np.cumsum(psi**2))
        return out, sd


def fit_ar(x, max_order: int) -> ARFit:
    """AIC-optimal Yule-Walker AR on orders 1..max_order, AIC = n log(sigma2_p) + 2p."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n <= max_order:
        raise InsufficientHistoryError(f"series of length {n} is too short for order {max_order}")
    mean = float(x.mean())
    xc = x - mean
    gamma = autocovariance(xc, max_order)
    if gamma[0] <= 1e-12 * max(1.0, mean * mean):
        return ARFit(mean, np.zeros(1), 0.0, np.zeros(max_order))
    phis, sigma2 = levinson_durbin(gamma, max_order)
    orders = np.arange(1, max_order + 1)
    aic = n * np.log(np.maximum(sigma2[1:], np.finfo(float).tiny)) + 2 * orders
    best = int(np.argmin(aic))
    return ARFit(mean, phis[best], float(sigma2[best + 1]), aic)


def ar_univariate(price: np.ndarray, target: int, window_days: int | None = None, max_order: int = 700) -> BenchmarkForecast:
    """AR(p) on the hourly price series; forecasts hours 0..23 of ``target`` from hour 23 of the day before."""
    start = 0 if window_days is None else max(0, target - window_days)
    series = np.asarray(price[start:target], dtype=float).ravel()
    if np.isnan(series).any():
        series = _fill(series)
    fit = fit_ar(series, max_order)
    mean, sd = fit.forecast(series, 24)
    return BenchmarkForecast.gaussian("ar", mean, sd)


def ar_hourly(price: np.ndarray, target: int, window_days: int | None = None, max_order: int = 50) -> BenchmarkForecast:
    """24 separate daily AR models, one step ahead each."""
    start = 0 if window_days is None else max(0, target - window_days)
    hist = np.asarray(price[start:target], dtype=float)
    mean = np.empty(24)
    sd = np.empty(24)
    for h in range(24):
        s = hist[:, h]
        if np.isnan(s).any():
            s = _fill(s)
        fit = fit_ar(s, max_order)
        m, e = fit.forecast(s, 1)
        mean[h], sd[h] = m[0], e[0]
    return BenchmarkForecast.gaussian("ar24", mean, sd)


def _fill(x):
    """Linear interpolation over missing values (edges held constant)."""
    x = x.copy()
    bad = np.isnan(x)
    idx = np.arange(x.size)
    x[bad] = np.interp(idx[bad], idx[~bad], x[~bad])
    return x
