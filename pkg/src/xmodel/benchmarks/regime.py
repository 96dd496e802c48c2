"""Two-regime Markov switching regression per hour, fitted by EM."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np

from ..errors import DegenerateRegimeError, InsufficientHistoryError
from .base import BenchmarkForecast

log = logging.getLogger(__name__)

NIGHT_HOURS = (0, 1, 2, 3, 23)
LOG_2PI = float(np.log(2 * np.pi))


@numba.njit(cache=True)
def _forward_backward(logdens, P, pi0):
    """Hamilton filter and Kim smoother.

    Returns ``(loglik, filtered, smoothed, joint)`` where ``joint[i, j]`` sums
    the smoothed probabilities of the transition i -> j over time.
    """
    n, K = logdens.shape
    filt = np.empty((n, K))
    pred = np.empty((n, K))
    ll = 0.0
    prior = pi0.copy()
    for t in range(n):
        m = logdens[t].max()
        tot = 0.0
        for s in range(K):
            pred[t, s] = prior[s]
            filt[t, s] = prior[s] * np.exp(logdens[t, s] - m)
            tot += filt[t, s]
        ll += m + np.log(tot)
        for s in range(K):
            filt[t, s] /= tot
        for j in range(K):
            acc = 0.0
            for i in range(K):
                acc += filt[t, i] * P[i, j]
            prior[j] = acc
    smooth = np.empty((n, K))
    smooth[n - 1] = filt[n - 1]
    joint = np.zeros((K, K))
    for t in range(n - 2, -1, -1):
        for i in range(K):
            acc = 0.0
            for j in range(K):
                pj = pred[t + 1, j]
                if pj > 0:
                    w = filt[t, i] * P[i, j] * smooth[t + 1, j] / pj
                    acc += w
                    joint[i, j] += w
            smooth[t, i] = acc
    return ll, filt, smooth, joint


@dataclass(frozen=True, eq=False)
class RegimeFit:
    """Fitted switching regression; regimes are ordered by increasing sigma."""

    beta: np.ndarray  # (2, k)
    sigma: np.ndarray  # (2,)
    P: np.ndarray  # (2, 2) row-stochastic transition matrix
    pi0: np.ndarray
    loglik: float
    history: np.ndarray  # log-likelihood per EM iteration
    filtered: np.ndarray  # (n, 2)
    smoothed: np.ndarray  # (n, 2)
    restarts: int
    collapsed: bool = False  # every EM attempt lost a regime; both rows hold the OLS fit

    def predictive(self, x_next):
        """Mixture weights, component means and sds for the next observation."""
        w = self.filtered[-1] @ self.P
        return w / w.sum(), self.beta @ np.asarray(x_next, dtype=float), self.sigma.copy()


def _log_densities(y, X, beta, sigma):
    r = y[:, None] - X @ beta.T
    return -0.5 * (LOG_2PI + 2 * np.log(sigma)[None, :] + (r / sigma[None, :]) ** 2)


def _wls(X, y, w):
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    r = y - X @ coef
    return coef, float(np.sqrt((w * r * r).sum() / w.sum()))


def _initial_split(r: np.ndarray, rng, attempt: int) -> np.ndarray:
    """Low/high variance labels from a 2-means split of log squared residuals."""
    z = np.log(r * r + 1e-300)
    if attempt == 0:
        c = np.percentile(z, [25, 75])
    else:
        c = np.sort(rng.choice(z, 2, replace=False))
        if c[0] == c[1]:
            c = c + np.array([-1.0, 1.0])
    for _ in range(50):
        lab = np.abs(z - c[1]) < np.abs(z - c[0])
        new = np.array([z[~lab].mean() if (~lab).any() else c[0], z[lab].mean() if lab.any() else c[1]])
        if np.allclose(new, c):
            break
        c = new
    return lab


def fit_switching(y, X, tol: float = 1e-6, max_iter: int = 1000, max_restarts: int = 10, seed=0) -> RegimeFit:
    """EM fit of a 2-regime Gaussian switching regression.

    Each E step runs the Hamilton filter and Kim smoother; each M step solves
    weighted least squares per regime and re-estimates the transition matrix.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    if n < 2 * (k + 1):
        raise InsufficientHistoryError(f"{n} observations are too few for {k} regressors in two regimes")
    rng = np.random.default_rng(seed)
    ols, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ ols
    scale = float(np.std(y)) or 1.0
    min_sigma = 1e-8 * scale
    min_weight = float(k + 1)
    for attempt in range(max_restarts + 1):
        lab = _initial_split(resid, rng, attempt)
        beta = np.vstack([ols, ols])
        sigma = np.array([resid[~lab].std() if (~lab).sum() > 1 else scale,
                          resid[lab].std() if lab.sum() > 1 else scale])
        sigma = np.maximum(sigma, 1e-3 * scale)
        P = np.array([[0.9, 0.1], [0.1, 0.9]])
        pi0 = np.array([0.5, 0.5])
        history = []
        degenerate = False
        for _ in range(max_iter):
            ll, filt, smooth, joint = _forward_backward(_log_densities(y, X, beta, sigma), P, pi0)
            history.append(ll)
            if len(history) > 1 and history[-1] - history[-2] < tol:
                break
            wsum = smooth.sum(axis=0)
            if np.any(wsum < min_weight):
                degenerate = True
                break
            for s in range(2):
                beta[s], sigma[s] = _wls(X, y, smooth[:, s])
            if np.any(sigma < min_sigma):
                degenerate = True
                break
            P = joint / joint.sum(axis=1, keepdims=True)
            pi0 = smooth[0].copy()
        if degenerate:
            log.info("regime fit attempt %d degenerated, restarting", attempt)
            continue
        ll, filt, smooth, _ = _forward_backward(_log_densities(y, X, beta, sigma), P, pi0)
        order = np.argsort(sigma)
        return RegimeFit(
            beta[order], sigma[order], P[np.ix_(order, order)], pi0[order], ll, np.array(history),
            filt[:, order], smooth[:, order], attempt,
        )
    raise DegenerateRegimeError(f"EM degenerated in {max_restarts + 1} attempts")


def single_regime(y, X, restarts: int = 0) -> RegimeFit:
    """OLS fit stored as a two-regime model whose second regime is never visited."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    sigma = float(np.sqrt(r @ r / max(y.size - X.shape[1], 1)))
    n = y.size
    probs = np.tile([1.0, 0.0], (n, 1))
    ll = float(-0.5 * n * (LOG_2PI + 2 * np.log(sigma)) - 0.5 * (r @ r) / sigma**2) if sigma > 0 else np.inf
    return RegimeFit(
        np.vstack([coef, coef]), np.array([sigma, sigma]), np.eye(2), np.array([1.0, 0.0]), ll,
        np.array([ll]), probs, probs.copy(), restarts, True,
    )


def regressors(price: np.ndarray, exo: dict, d: int, h: int) -> np.ndarray:
    """Regressor row for day d, hour h: constant, lag-1, lag-7, previous-day mean, planned series."""
    row = [1.0, price[d - 1, h], price[d - 7, h], np.nanmean(price[d - 1])]
    for name in ("generation", "wind", "solar"):
        if name == "solar" and h in NIGHT_HOURS:
            continue
        row.append(exo[name][d, h])
    return np.array(row, dtype=float)


def regime_switching(price, exo: dict, target: int, window_days: int | None = None, seed: int = 0, **kw) -> BenchmarkForecast:
    """Per-hour switching regression fitted on the window before ``target``.

    ``price`` is read only before ``target``; planned series in ``exo`` are read
    through ``target``.
    """
    price = np.asarray(price, dtype=float)
    start = 7 if window_days is None else max(7, target - window_days)
    if target - start < 20:
        raise InsufficientHistoryError(f"target day {target} leaves {target - start} usable days")
    W = np.empty((24, 2))
    M = np.empty((24, 2))
    S = np.empty((24, 2))
    for h in range(24):
        days = np.arange(start, target)
        X = np.array([regressors(price, exo, d, h) for d in days])
        y = price[days, h]
        ok = np.isfinite(y) & np.isfinite(X).all(axis=1)
        try:
            fit = fit_switching(y[ok], X[ok], seed=np.random.SeedSequence([seed, target, h]), **kw)
        except DegenerateRegimeError:
            # the window shows no second regime: forecast with the single-regime regression
            log.info("day %d hour %d: switching fit degenerated, using one regime", target, h)
            fit = single_regime(y[ok], X[ok], kw.get("max_restarts", 10) + 1)
        W[h], M[h], S[h] = fit.predictive(regressors(price, exo, target, h))
    point = (W * M).sum(axis=1)
    return BenchmarkForecast("regime", point, W, M, S)
