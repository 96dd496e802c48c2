"""Lasso path by cyclic coordinate descent with BIC selection.

The objective is ``||y - X b||^2 + lam * ||b||_1`` (no 1/2 or 1/n factor), so
the coordinate update is ``b_j = S(x_j'r_j, lam / 2) / x_j'x_j`` and every
coefficient vanishes for ``lam >= 2 max_j |x_j'y|``.

The solver works in covariance mode: it keeps the gradient vector ``X'r`` up
to date and computes Gram columns ``X'x_j`` only for coordinates that become
active.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConvergenceError

log = logging.getLogger(__name__)

STATUS_OK = 0
STATUS_NO_CONVERGENCE = 1


@dataclass(frozen=True, eq=False)
class Standardized:
    X: np.ndarray  # retained columns divided by their scale
    y: np.ndarray
    scale: np.ndarray  # per retained column
    y_scale: float
    keep: np.ndarray  # indices of retained columns in the raw design
    dropped: np.ndarray  # constant columns

    def unscale(self, beta_tilde: np.ndarray, n_raw: int) -> np.ndarray:
        """Coefficients on the raw design (zeros for dropped columns)."""
        beta = np.zeros(n_raw)
        beta[self.keep] = beta_tilde * self.y_scale / self.scale
        return beta


def standardize(X: np.ndarray, y: np.ndarray, eps: float = 1e-12) -> Standardized:
    """Scale every column and the response to unit sample variance (no centring)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    sd = X.std(axis=0)
    ref = np.maximum(np.abs(X).max(axis=0), 1.0)
    keep = np.flatnonzero(sd > eps * ref)
    dropped = np.setdiff1d(np.arange(X.shape[1]), keep)
    if dropped.size:
        log.debug("dropping %d constant design columns", dropped.size)
    s = sd[keep]
    sy = float(y.std())
    if not sy > eps * max(1.0, float(np.abs(y).max(initial=0.0))):
        sy = 0.0
    Xs = np.asfortranarray(X[:, keep] / s)
    ys = y / sy if sy > 0 else np.zeros_like(y)
    return Standardized(Xs, ys, s, sy, keep, dropped)


def lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    return 2.0 * float(np.abs(X.T @ y).max(initial=0.0))


def lambda_grid(lam_max: float, size: int = 100, min_ratio: float = 1e-4) -> np.ndarray:
    """Exponentially decaying grid from ``lam_max`` down to ``lam_max * min_ratio``."""
    if size == 1:
        return np.array([lam_max])
    return lam_max * np.exp(np.linspace(0.0, np.log(min_ratio), size))


def bic(rss, df, n):
    rss = np.maximum(np.asarray(rss, dtype=float), np.finfo(float).tiny)
    return n * np.log(rss / n) + np.asarray(df) * np.log(n)


@njit(cache=True, nogil=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True, nogil=True)
def _axpy(a, x, y):
    for i in range(y.size):
        y[i] += a * x[i]


@njit(cache=True, nogil=True)
def _refit_rss(X, y, xy, gram, slot, idx, r):
    # least-squares fit on the support via its Gram block; residuals written to r
    k = idx.size
    G = np.empty((k, k))
    c = np.empty(k)
    for a in range(k):
        c[a] = xy[idx[a]]
        row = gram[slot[idx[a]]]
        for b in range(k):
            G[a, b] = row[idx[b]]
    coef = np.linalg.lstsq(G, c)[0]
    for i in range(y.size):
        r[i] = y[i]
    for a in range(k):
        j = idx[a]
        for i in range(y.size):
            r[i] -= X[i, j] * coef[a]
    return r.dot(r)


@njit(cache=True, nogil=True)
def _path_kernel(X, y, lambdas, tol, max_sweeps, patience, store_path, refit):
    n, p = X.shape
    nl = lambdas.size
    xx = np.empty(p)
    for j in range(p):
        acc = 0.0
        for i in range(n):
            acc += X[i, j] * X[i, j]
        xx[j] = acc
    xy = X.T.dot(y)
    grad = xy.copy()  # X'r with r = y - X beta
    yy = y.dot(y)

    beta = np.zeros(p)
    slot = -np.ones(p, np.int64)
    cap = min(p, 64)
    gram = np.empty((cap, p))  # row a holds X'x_j for the a-th activated j
    active = np.empty(p, np.int64)
    n_active = 0

    path = np.zeros((nl if store_path else 1, p))
    rss_out = np.full(nl, np.nan)
    df_out = np.zeros(nl, np.int64)
    bic_out = np.full(nl, np.nan)
    best = np.zeros(p)
    best_i = -1
    best_bic = np.inf
    since_best = 0
    n_done = 0
    r = np.empty(n)
    logn = np.log(n)

    for li in range(nl):
        half = 0.5 * lambdas[li]
        sweeps = 0
        converged = False
        while sweeps < max_sweeps:
            # full sweep over all coordinates
            max_delta = 0.0
            for j in range(p):
                if xx[j] == 0.0:
                    continue
                z = grad[j] + xx[j] * beta[j]
                b_new = _soft(z, half) / xx[j]
                delta = b_new - beta[j]
                if delta != 0.0:
                    if slot[j] < 0:
                        if n_active == cap:
                            cap2 = min(p, 2 * cap)
                            g2 = np.empty((cap2, p))
                            g2[:cap] = gram[:cap]
                            gram = g2
                            cap = cap2
                        slot[j] = n_active
                        active[n_active] = j
                        gram[n_active] = X.T.dot(X[:, j])
                        n_active += 1
                    beta[j] = b_new
                    _axpy(-delta, gram[slot[j]], grad)
                    if abs(delta) > max_delta:
                        max_delta = abs(delta)
            sweeps += 1
            if max_delta < tol:
                converged = True
                break
            # inner sweeps over the active set; only active gradient entries are kept current
            while sweeps < max_sweeps:
                max_delta = 0.0
                for a in range(n_active):
                    j = active[a]
                    z = grad[j] + xx[j] * beta[j]
                    b_new = _soft(z, half) / xx[j]
                    delta = b_new - beta[j]
                    if delta != 0.0:
                        beta[j] = b_new
                        row = gram[a]
                        for q in range(n_active):
                            grad[active[q]] -= delta * row[active[q]]
                        if abs(delta) > max_delta:
                            max_delta = abs(delta)
                sweeps += 1
                if max_delta < tol:
                    break
            # refresh the full gradient before the next full sweep
            grad[:] = xy
            for a in range(n_active):
                bj = beta[active[a]]
                if bj != 0.0:
                    _axpy(-bj, gram[a], grad)
        if not converged:
            return path, rss_out, df_out, bic_out, best, best_i, n_done, STATUS_NO_CONVERGENCE, li

        # residual sum of squares, computed directly for accuracy
        for i in range(n):
            r[i] = y[i]
        df = 0
        for a in range(n_active):
            j = active[a]
            if beta[j] != 0.0:
                df += 1
                bj = beta[j]
                for i in range(n):
                    r[i] -= X[i, j] * bj
        rss = r.dot(r)
        if refit and df > 0:
            support = np.empty(df, np.int64)
            q = 0
            for a in range(n_active):
                if beta[active[a]] != 0.0:
                    support[q] = active[a]
                    q += 1
            rss = _refit_rss(X, y, xy, gram, slot, support, r)
        if yy == 0.0:
            rss = 0.0
        rss_out[li] = rss
        df_out[li] = df
        val = n * np.log(max(rss, 1e-300) / n) + df * logn
        bic_out[li] = val
        if store_path:
            path[li] = beta
        n_done = li + 1
        if val < best_bic:
            best_bic = val
            best_i = li
            best[:] = beta
            since_best = 0
        else:
            since_best += 1
            if patience > 0 and since_best >= patience:
                break
        if df >= n - 1:
            break  # saturated fit, smaller penalties cannot be scored
    return path, rss_out, df_out, bic_out, best, best_i, n_done, STATUS_OK, -1


def _rss_mode(name: str) -> bool:
    if name not in ("refit", "lasso"):
        raise ValueError(f"bic_rss must be 'refit' or 'lasso', got {name!r}")
    return name == "refit"


@dataclass(frozen=True, eq=False)
class LassoPath:
    lambdas: np.ndarray
    coefs: np.ndarray | None  # (n_lambda, p) when the full path was stored
    rss: np.ndarray
    df: np.ndarray
    bic: np.ndarray
    best_index: int
    best_coef: np.ndarray
    n_computed: int

    @property
    def best_lambda(self) -> float:
        return float(self.lambdas[self.best_index])


def lasso_path(
    X, y, lambdas, tol: float = 1e-7, max_sweeps: int = 100_000, patience: int = 0,
    store_path: bool = True, bic_rss: str = "lasso",
) -> LassoPath:
    """Warm-started coordinate-descent path over a decreasing grid.

    BIC uses ``n log(RSS / n) + df log n`` with df the number of nonzero
    coefficients. ``bic_rss="refit"`` takes RSS from a least-squares refit on
    the lasso support at each grid point; ``"lasso"`` takes the penalized
    residuals as they are. With ``patience > 0`` the path stops once BIC has not improved for that many
    consecutive grid points.
    """
    X = np.asfortranarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ValueError("lambda grid must be a non-empty vector")
    if np.any(lambdas < 0) or np.any(np.diff(lambdas) > 0):
        raise ValueError("lambda grid must be non-negative and decreasing")
    path, rss, df, bic_v, best, best_i, n_done, status, fail = _path_kernel(
        X, y, lambdas, tol, max_sweeps, patience, store_path, _rss_mode(bic_rss)
    )
    if status != STATUS_OK:
        raise ConvergenceError(f"coordinate descent did not converge at lambda index {fail}", fail)
    return LassoPath(lambdas, path[:n_done] if store_path else None, rss, df, bic_v, int(best_i), best, int(n_done))


def select_lambda(path: LassoPath, n: int | None = None):
    """Index of the BIC-minimal grid point; ties go to the larger penalty."""
    if n is None:
        vals = path.bic[: path.n_computed]
    else:
        vals = bic(path.rss[: path.n_computed], path.df[: path.n_computed], n)
    best = int(np.argmin(vals))  # first occurrence = larger lambda
    return best, float(path.lambdas[best])


def ols(X, y) -> np.ndarray:
    return np.linalg.lstsq(X, y, rcond=None)[0]
