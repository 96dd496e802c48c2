"""Per-(class, hour) lasso autoregressions: fitting, forecasting, bootstrap."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError, MissingExogenousError
from .features import N_DUMMIES, CenteredPanel, FeatureSpace, build_design, design_rows
from .ingest import read_npz, write_npz
from .lasso import lambda_grid, lambda_max, lasso_path, standardize

log = logging.getLogger(__name__)

MODEL_FORMAT = "xmodel-fit"
MODEL_VERSION = 1
DUMMY = -1  # process id used for weekday-dummy coefficients, k holds the dummy index 2..7


@dataclass(frozen=True)
class FitSettings:
    lambda_grid_size: int = 100
    lambda_min_ratio: float = 1e-4
    cd_tol: float = 1e-7
    cd_max_sweeps: int = 100_000
    patience: int = 10  # stop the path after this many non-improving BIC values (0 = full path)
    bic_rss: str = "lasso"

    def __post_init__(self):
        if self.lambda_grid_size < 1:
            raise ConfigError("lambda_grid_size must be positive")
        if not 0 < self.lambda_min_ratio < 1:
            raise ConfigError("lambda_min_ratio must lie in (0, 1)")
        if self.cd_tol <= 0 or self.cd_max_sweeps < 1:
            raise ConfigError("cd_tol and cd_max_sweeps must be positive")


@dataclass(frozen=True, eq=False)
class FittedClassModel:
    """Sparse coefficients of one target on the unscaled regressors.

    ``terms`` rows are ``(l, j, k)``; weekday dummies use ``l = j = -1`` and
    ``k`` in 2..7. ``scale`` is the standardization scale of each term.
    """

    target: tuple
    terms: np.ndarray
    coef: np.ndarray
    scale: np.ndarray
    y_scale: float
    lam: float
    bic: float
    df: int
    sigma2: float
    n_obs: int
    dropped: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), np.int64))

    def lag_coef(self, l: int, j: int, k: int) -> float:
        hit = np.flatnonzero((self.terms[:, 0] == l) & (self.terms[:, 1] == j) & (self.terms[:, 2] == k))
        return float(self.coef[hit[0]]) if hit.size else 0.0

    def weekday_coef(self, k: int) -> float:
        return self.lag_coef(DUMMY, DUMMY, k)

    def scaled_coef(self) -> np.ndarray:
        """Coefficients on the standardized design."""
        if self.y_scale == 0:
            return np.zeros_like(self.coef)
        return self.coef * self.scale / self.y_scale


def _all_terms(cols: np.ndarray) -> np.ndarray:
    dummies = np.column_stack([np.full(N_DUMMIES, DUMMY), np.full(N_DUMMIES, DUMMY), np.arange(2, 8)])
    return np.vstack([cols, dummies])


def fit_target(cp: CenteredPanel, m: int, h: int, settings: FitSettings = FitSettings()):
    """Fit one target; returns the model and its in-sample residuals."""
    X, y, cols = build_design(cp, m, h)
    n = y.size
    terms = _all_terms(cols)
    st = standardize(X, y)
    if st.y_scale == 0 or st.keep.size == 0:
        resid = y.copy()
        model = FittedClassModel(
            (m, h), np.zeros((0, 3), np.int64), np.zeros(0), np.zeros(0), st.y_scale, np.inf,
            np.nan, 0, float(resid @ resid / max(n, 1)), n, terms[st.dropped],
        )
        return model, resid
    lams = lambda_grid(lambda_max(st.X, st.y), settings.lambda_grid_size, settings.lambda_min_ratio)
    try:
        path = lasso_path(
            st.X, st.y, lams, settings.cd_tol, settings.cd_max_sweeps, settings.patience,
            store_path=False, bic_rss=settings.bic_rss,
        )
    except ConvergenceError as exc:
        raise ConvergenceError(f"target (m={m}, h={h}): {exc}", exc.lambda_index) from None
    bt = path.best_coef
    nz = np.flatnonzero(bt)
    beta = bt[nz] * st.y_scale / st.scale[nz]
    raw_idx = st.keep[nz]
    resid = y - X[:, raw_idx] @ beta
    df = int(nz.size)
    sigma2 = float(resid @ resid / (n - df)) if n > df else np.nan
    model = FittedClassModel(
        (m, h), terms[raw_idx], beta, st.scale[nz], st.y_scale, path.best_lambda,
        float(path.bic[path.best_index]), df, sigma2, n, terms[st.dropped],
    )
    return model, resid


@dataclass(frozen=True, eq=False)
class FittedModels:
    """All class models of one estimation window.

    ``residuals`` has shape ``(n_rows, 24, n_classes)`` with rows aligned to
    ``row_days`` (window positions), so a whole day block can be resampled.
    """

    space: FeatureSpace
    models: list  # models[m][h]
    mu: np.ndarray  # (n_processes, 24)
    residuals: np.ndarray
    row_days: np.ndarray
    settings: FitSettings = FitSettings()

    @property
    def n_classes(self) -> int:
        return self.space.n_classes

    def model(self, m: int, h: int) -> FittedClassModel:
        return self.models[m][h]

    def table(self):
        """One record per target: m, h, lambda, df, BIC, sigma2."""
        return [
            (m, h, mod.lam, mod.df, mod.bic, mod.sigma2)
            for m, row in enumerate(self.models)
            for h, mod in enumerate(row)
        ]


def default_threads() -> int:
    return max(1, os.cpu_count() or 1)


def fit_all(cp: CenteredPanel, settings: FitSettings = FitSettings(), threads: int | None = None) -> FittedModels:
    """Fit every (class, hour) target of the window; results do not depend on ``threads``."""
    space = cp.space
    rows = design_rows(cp)
    targets = [(m, h) for m in range(space.n_classes) for h in range(24)]
    threads = threads or default_threads()

    def job(t):
        return fit_target(cp, t[0], t[1], settings)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(job, targets))
    else:
        results = [job(t) for t in targets]
    models = [[None] * 24 for _ in range(space.n_classes)]
    resid = np.empty((rows.size, 24, space.n_classes))
    for (m, h), (mod, r) in zip(targets, results):
        models[m][h] = mod
        resid[:, h, m] = r
    return FittedModels(space, models, cp.mu.copy(), resid, rows, settings)


def point_forecast(fm: FittedModels, cp: CenteredPanel, target_weekday: int) -> np.ndarray:
    """Class-volume forecast ``(n_classes, 24)`` for the day after the window."""
    planned = fm.space.planned
    gap = cp.filled is not None and cp.filled[planned, -1, :].any()
    if planned.any() and (gap or not np.all(np.isfinite(cp.Y[planned, -1, :]))):
        raise MissingExogenousError("planned series are missing for the forecast day")
    out = np.empty((fm.n_classes, 24))
    for m in range(fm.n_classes):
        for h in range(24):
            mod = fm.models[m][h]
            yhat = 0.0
            if mod.coef.size:
                x = _term_values(cp, mod.terms, target_weekday)
                yhat = float(x @ mod.coef)
            out[m, h] = yhat + fm.mu[m, h]
    return out


def _term_values(cp: CenteredPanel, terms: np.ndarray, target_weekday: int) -> np.ndarray:
    n = cp.n_days
    lag = terms[:, 0] >= 0
    x = np.empty(terms.shape[0])
    t = terms[lag]
    x[lag] = cp.Y[t[:, 0], n - t[:, 2], t[:, 1]]
    x[~lag] = (target_weekday < terms[~lag, 2]).astype(float)
    return x


@dataclass(frozen=True, eq=False)
class ForecastSample:
    point: np.ndarray  # (n_classes, 24)
    draws: np.ndarray  # (B, n_classes, 24)
    day_index: np.ndarray  # (B,) residual row used by each draw

    @property
    def B(self) -> int:
        return self.draws.shape[0]


def bootstrap_forecast(fm: FittedModels, point: np.ndarray, B: int, rng, center: bool = True) -> ForecastSample:
    """Add whole daily residual blocks (all classes, all hours) to the point forecast.

    With ``center`` the residuals of each target are shifted to mean zero first,
    so the draws scatter around the point forecast.
    """
    if B < 1:
        raise ConfigError("B must be at least 1")
    rng = np.random.default_rng(rng)
    resid = fm.residuals
    if center:
        resid = resid - resid.mean(axis=0, keepdims=True)
    idx = rng.integers(0, resid.shape[0], size=B)
    draws = point[None, :, :] + resid[idx].transpose(0, 2, 1)
    return ForecastSample(point, draws, idx)


# -- persistence --------------------------------------------------------------

def save_models(fm: FittedModels, path, extra_arrays: dict | None = None, extra_meta: dict | None = None):
    trip, dropped, per = [], [], []
    for m, row in enumerate(fm.models):
        for h, mod in enumerate(row):
            for (l, j, k), c, s in zip(mod.terms.tolist(), mod.coef.tolist(), mod.scale.tolist()):
                trip.append((m, h, l, j, k, c, s))
            for l, j, k in mod.dropped.tolist():
                dropped.append((m, h, l, j, k))
            per.append((mod.y_scale, mod.lam, mod.bic, mod.df, mod.sigma2, mod.n_obs))
    trip_arr = np.array(trip, dtype=float).reshape(-1, 7)
    arrays = {
        "coef_index": trip_arr[:, :5].astype(np.int64),
        "coef_value": trip_arr[:, 5].copy(),
        "coef_scale": trip_arr[:, 6].copy(),
        "dropped": np.array(dropped, dtype=np.int64).reshape(-1, 5),
        "model_stats": np.array(per, dtype=float),
        "mu": fm.mu,
        "residuals": fm.residuals,
        "row_days": fm.row_days,
    }
    arrays.update(extra_arrays or {})
    meta = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "space": {"n_classes": fm.space.n_classes, "exogenous": list(fm.space.exogenous),
                  "own_lags": fm.space.own_lags, "near_lags": fm.space.near_lags, "far_lags": fm.space.far_lags},
        "settings": asdict(fm.settings),
        "model_stats_columns": ["y_scale", "lambda", "bic", "df", "sigma2", "n_obs"],
    }
    meta.update(extra_meta or {})
    write_npz(path, arrays, meta)


def load_models(path):
    """Returns ``(FittedModels, arrays, meta)``."""
    from .errors import ValidationError

    arrays, meta = read_npz(path)
    if meta.get("format") != MODEL_FORMAT or meta.get("version") != MODEL_VERSION:
        raise ValidationError(f"{path} is not a version {MODEL_VERSION} model container")
    sp = meta["space"]
    space = FeatureSpace(sp["n_classes"], tuple(sp["exogenous"]), sp["own_lags"], sp["near_lags"], sp["far_lags"])
    settings = FitSettings(**meta["settings"])
    idx, val, scl = arrays["coef_index"], arrays["coef_value"], arrays["coef_scale"]
    drop = arrays["dropped"]
    stats = arrays["model_stats"]
    models = [[None] * 24 for _ in range(space.n_classes)]
    for t in range(stats.shape[0]):
        m, h = divmod(t, 24)
        sel = (idx[:, 0] == m) & (idx[:, 1] == h)
        dsel = (drop[:, 0] == m) & (drop[:, 1] == h)
        ys, lam, b, df, s2, nobs = stats[t]
        models[m][h] = FittedClassModel(
            (m, h), idx[sel, 2:], val[sel], scl[sel], float(ys), float(lam), float(b), int(df), float(s2),
            int(nobs), drop[dsel, 2:],
        )
    fm = FittedModels(space, models, arrays["mu"], arrays["residuals"], arrays["row_days"], settings)
    return fm, arrays, meta
