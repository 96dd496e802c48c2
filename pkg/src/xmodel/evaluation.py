"""Rolling out-of-sample study, point scores and probabilistic coverage."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from datetime import date

import numpy as np
from scipy.special import ndtri

from .benchmarks.ar import ar_hourly, ar_univariate
from .benchmarks.persistent import persistent
from .benchmarks.regime import regime_switching
from .errors import ConfigError, ParseError, XModelError
from .panel import HOURS, PanelDataset
from .reconstruction import QUANTILE_LEVELS

log = logging.getLogger(__name__)

REFERENCE = "persistent"
PLANNED = ("generation", "wind", "solar")


# -- scores -------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelScores:
    model: str
    n_obs: int
    mae: float
    rmse: float
    mae_sd: float
    rmse_sd: float
    mae_h: np.ndarray
    rmse_h: np.ndarray
    mae_pct: float = float("nan")
    rmse_pct: float = float("nan")


def score_errors(model: str, errors) -> ModelScores:
    """MAE and RMSE over all finite errors of a ``(n_days, 24)`` array.

    Standard deviations are standard errors of the mean: ``std(|e|)/sqrt(N)``
    for the MAE and the delta-method ``std(e^2) / (2 RMSE sqrt(N))`` for the
    RMSE (0 when the RMSE is 0).
    """
    e = np.asarray(errors, dtype=float)
    ok = np.isfinite(e)
    v = e[ok]
    n = v.size
    if n == 0:
        nanh = np.full(e.shape[-1] if e.ndim == 2 else HOURS, np.nan)
        return ModelScores(model, 0, np.nan, np.nan, np.nan, np.nan, nanh, nanh.copy())
    a = np.abs(v)
    sq = v * v
    mae = float(a.mean())
    rmse = float(np.sqrt(sq.mean()))
    mae_sd = float(a.std() / np.sqrt(n))
    rmse_sd = float(sq.std() / (2 * rmse * np.sqrt(n))) if rmse > 0 else 0.0
    e2 = np.where(ok, e, np.nan).reshape(-1, e.shape[-1]) if e.ndim > 1 else np.where(ok, e, np.nan)[:, None]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-missing hours
        mae_h = np.nanmean(np.abs(e2), axis=0)
        rmse_h = np.sqrt(np.nanmean(e2 * e2, axis=0))
    return ModelScores(model, n, mae, rmse, mae_sd, rmse_sd, mae_h, rmse_h)


@dataclass(frozen=True, eq=False)
class ScoreTable:
    rows: dict  # model -> ModelScores, in insertion order
    reference: str = REFERENCE

    def __getitem__(self, model) -> ModelScores:
        return self.rows[model]

    def models(self):
        return list(self.rows)


def score_table(errors: dict, reference: str = REFERENCE) -> ScoreTable:
    """Scores per model with percent-of-reference ratios (NaN without a reference row)."""
    base = {m: score_errors(m, e) for m, e in errors.items()}
    ref = base.get(reference)
    rows = {}
    for m, s in base.items():
        if ref is not None and ref.mae > 0:
            mae_pct = 100.0 * s.mae / ref.mae
            rmse_pct = 100.0 * s.rmse / ref.rmse
        else:
            mae_pct = rmse_pct = float("nan")
        rows[m] = ModelScores(
            s.model, s.n_obs, s.mae, s.rmse, s.mae_sd, s.rmse_sd, s.mae_h, s.rmse_h, mae_pct, rmse_pct
        )
    return ScoreTable(rows, reference)


SCORE_HEADER = ["model", "mae", "mae_sd", "mae_pct", "rmse", "rmse_sd", "rmse_pct", "n_obs"]


def write_score_table(path, table: ScoreTable):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_HEADER)
        for s in table.rows.values():
            w.writerow([
                s.model, f"{s.mae:.4f}", f"{s.mae_sd:.4f}", f"{s.mae_pct:.1f}",
                f"{s.rmse:.4f}", f"{s.rmse_sd:.4f}", f"{s.rmse_pct:.1f}", s.n_obs,
            ])


def write_hourly_scores(path, table: ScoreTable):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "hour", "mae", "rmse"])
        for s in table.rows.values():
            for h in range(s.mae_h.size):
                w.writerow([s.model, h, f"{s.mae_h[h]:.4f}", f"{s.rmse_h[h]:.4f}"])


# -- coverage -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoverageReport:
    """Observed over theoretical frequency per quantile bin.

    Bin ``i`` lies between ``levels[i-1]`` and ``levels[i]`` (with 0 and 1 at
    the ends), so there are ``len(levels) + 1`` bins.
    """

    levels: np.ndarray
    counts: np.ndarray
    n_obs: int

    @property
    def expected(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.levels, [1.0]]))

    @property
    def observed(self) -> np.ndarray:
        return self.counts / self.n_obs if self.n_obs else np.full(self.counts.size, np.nan)

    @property
    def ratios(self) -> np.ndarray:
        return self.observed / self.expected


def percent_levels(levels=QUANTILE_LEVELS) -> np.ndarray:
    """Indices of the levels on the 1% grid 0.01..0.99."""
    levels = np.asarray(levels, dtype=float)
    on_grid = np.isclose(levels * 100, np.round(levels * 100)) & (levels > 0) & (levels < 1)
    return np.flatnonzero(on_grid)


def coverage(realized, quantiles, levels=None) -> CoverageReport:
    """Assign each realized value to the bin between adjacent forecast quantiles.

    ``quantiles`` has shape ``(N, L)``. Non-monotone rows are sorted first.
    A realized value equal to one or more quantiles (common with clustered
    prices) is shared among the bins touching it in proportion to their
    nominal probability, which keeps exactly calibrated discrete forecasts
    flat.
    """
    y = np.asarray(realized, dtype=float).ravel()
    q = np.asarray(quantiles, dtype=float).reshape(y.size, -1)
    if levels is None:
        levels = np.arange(1, q.shape[1] + 1) / (q.shape[1] + 1)
    levels = np.asarray(levels, dtype=float)
    if levels.size != q.shape[1]:
        raise ConfigError("levels do not match the quantile columns")
    ok = np.isfinite(y) & np.isfinite(q).all(axis=1)
    y, q = y[ok], q[ok]
    bad = np.any(np.diff(q, axis=1) < 0, axis=1)
    if bad.any():
        log.warning("sorted %d non-monotone quantile vectors", int(bad.sum()))
        q = np.sort(q, axis=1)
    width = np.diff(np.concatenate([[0.0], levels, [1.0]]))
    counts = np.zeros(levels.size + 1)
    lo = np.array([np.searchsorted(r, v, "left") for r, v in zip(q, y)], dtype=np.int64)
    hi = np.array([np.searchsorted(r, v, "right") for r, v in zip(q, y)], dtype=np.int64)
    single = lo == hi
    np.add.at(counts, lo[single], 1.0)
    for a, b in zip(lo[~single], hi[~single]):
        w = width[a:b + 1]
        counts[a:b + 1] += w / w.sum()
    return CoverageReport(levels, counts, int(y.size))


def interval_coverage(realized, lower, upper) -> float:
    """Share of finite realized values inside the closed interval ``[lower, upper]``."""
    y = np.asarray(realized, dtype=float).ravel()
    lo = np.asarray(lower, dtype=float).ravel()
    hi = np.asarray(upper, dtype=float).ravel()
    ok = np.isfinite(y) & np.isfinite(lo) & np.isfinite(hi)
    if not ok.any():
        return float("nan")
    return float(np.mean((y[ok] >= lo[ok]) & (y[ok] <= hi[ok])))


def write_coverage(path, report: CoverageReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "ratio"])
        for i, r in enumerate(report.ratios):
            w.writerow([i, f"{r:.6f}"])


# -- forecasters --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Prediction:
    point: np.ndarray  # (24,)
    quantiles: np.ndarray | None = None  # (24, L) at the study levels


def _history(panel: PanelDataset, target: int):
    """Pre-auction information for ``target``: prices before it, planned series through it."""
    price = panel.series("price")[:target]
    exo = {k: panel.series(k)[: target + 1] for k in PLANNED if k in panel.exogenous}
    return price, exo


class Forecaster:
    name = "model"
    probabilistic = True

    def predict(self, panel: PanelDataset, target: int, levels) -> Prediction:
        raise NotImplementedError


class _Benchmark(Forecaster):
    def _prediction(self, fc, levels):
        return Prediction(fc.point, fc.quantiles(levels))


class PersistentForecaster(_Benchmark):
    name = "persistent"

    def __init__(self, window_days: int | None = 730):
        self.window_days = window_days

    def predict(self, panel, target, levels):
        price, _ = _history(panel, target)
        return self._prediction(persistent(price, target, self.window_days), levels)


class ARForecaster(_Benchmark):
    name = "ar"

    def __init__(self, window_days: int | None = 730, max_order: int = 700):
        self.window_days, self.max_order = window_days, max_order

    def predict(self, panel, target, levels):
        price, _ = _history(panel, target)
        return self._prediction(ar_univariate(price, target, self.window_days, self.max_order), levels)


class HourlyARForecaster(_Benchmark):
    name = "ar24"

    def __init__(self, window_days: int | None = 730, max_order: int = 50):
        self.window_days, self.max_order = window_days, max_order

    def predict(self, panel, target, levels):
        price, _ = _history(panel, target)
        return self._prediction(ar_hourly(price, target, self.window_days, self.max_order), levels)


class RegimeForecaster(_Benchmark):
    name = "regime"

    def __init__(self, window_days: int | None = 730, seed: int = 0):
        self.window_days, self.seed = window_days, seed

    def predict(self, panel, target, levels):
        price, exo = _history(panel, target)
        fc = regime_switching(price, exo, target, self.window_days, self.seed)
        return self._prediction(fc, levels)


class XModelForecaster(Forecaster):
    name = "xmodel"

    def __init__(self, config=None, threads: int | None = None):
        from .pipeline import XModelConfig

        self.config = config or XModelConfig()
        self.threads = threads

    def predict(self, panel, target, levels):
        from .pipeline import fit_window, forecast_day

        wf = fit_window(panel.slice_days(0, target + 1), target, self.config, self.threads)
        fc = forecast_day(wf, self.config, levels=levels)
        q = fc.quantiles() if self.config.B > 0 else None
        return Prediction(fc.point_prices(), q)


class OracleForecaster(Forecaster):
    """Perfect-foresight dummy that returns the realized prices (harness check only)."""

    name = "oracle"

    def predict(self, panel, target, levels):
        y = panel.series("price")[target].copy()
        return Prediction(y, np.repeat(y[:, None], len(levels), axis=1))


class ExternalForecaster(Forecaster):
    """Forecasts read from ``model,date,hour,point[,mean,sd]`` CSV files.

    Rows with ``mean`` and ``sd`` yield Gaussian quantiles, otherwise the model
    is point-only.
    """

    def __init__(self, name: str, table: dict):
        self.name = name
        self.table = table  # date -> (point[24], mean[24], sd[24])
        self.probabilistic = all(np.isfinite(v[2]).all() for v in table.values()) if table else False

    @classmethod
    def read(cls, path) -> list:
        tables: dict = {}
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd, None)
            if header is None or [h.strip() for h in header[:4]] != ["model", "date", "hour", "point"]:
                raise ParseError(f"{path}: header must start with model,date,hour,point", 1)
            extra = [h.strip() for h in header[4:]]
            for lineno, row in enumerate(rd, start=2):
                if not row:
                    continue
                try:
                    model, d, h = row[0].strip(), date.fromisoformat(row[1].strip()), int(row[2])
                    vals = [float(x) for x in row[3:]]
                except ValueError as exc:
                    raise ParseError(str(exc), lineno) from None
                if not 0 <= h < HOURS:
                    raise ParseError(f"hour {h} outside 0..23", lineno)
                rec = dict(zip(["point"] + extra, vals))
                slot = tables.setdefault(model, {}).setdefault(
                    d, (np.full(HOURS, np.nan), np.full(HOURS, np.nan), np.full(HOURS, np.nan))
                )
                slot[0][h] = rec["point"]
                slot[1][h] = rec.get("mean", np.nan)
                slot[2][h] = rec.get("sd", np.nan)
        return [cls(m, t) for m, t in tables.items()]

    def predict(self, panel, target, levels):
        d = panel.days[target]
        if d not in self.table:
            raise XModelError(f"no external forecast for {d}")
        point, mean, sd = self.table[d]
        if not np.isfinite(point).all():
            raise XModelError(f"external forecast for {d} is incomplete")
        q = None
        if np.isfinite(mean).all() and np.isfinite(sd).all():
            q = mean[:, None] + sd[:, None] * ndtri(np.asarray(levels))[None, :]
        return Prediction(point.copy(), q)


# -- study --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StudyResult:
    days: np.ndarray  # evaluated day indices
    realized: np.ndarray  # (n_days, 24)
    levels: np.ndarray
    points: dict  # model -> (n_days, 24), NaN rows for missing days
    quantiles: dict  # model -> (n_days, 24, L) or None
    missing: dict  # model -> list of (day, message)
    scores: ScoreTable = None
    coverage: dict = field(default_factory=dict)

    def errors(self, model: str) -> np.ndarray:
        return self.points[model] - self.realized

    def central_coverage(self, model: str, alpha: float = 0.9) -> float:
        lo_level, hi_level = (1 - alpha) / 2, (1 + alpha) / 2
        i = np.flatnonzero(np.isclose(self.levels, lo_level))
        j = np.flatnonzero(np.isclose(self.levels, hi_level))
        if not (i.size and j.size) or self.quantiles.get(model) is None:
            return float("nan")
        q = self.quantiles[model]
        return interval_coverage(self.realized, q[..., i[0]], q[..., j[0]])


def study_days(panel: PanelDataset, start: int, stop: int, exclude_dst: bool = True) -> np.ndarray:
    days = np.arange(start, stop)
    if exclude_dst:
        days = np.array([d for d in days if panel.days[d] not in panel.dst_days], dtype=np.int64)
    return days


def rolling_study(panel: PanelDataset, forecasters, days, levels=QUANTILE_LEVELS, reference: str = REFERENCE) -> StudyResult:
    """Forecast every day in ``days`` with every model re-fitted on its trailing window.

    A model failing on a day (any package error) leaves that day missing for
    that model, with a warning; it is never imputed.
    """
    days = np.asarray(days, dtype=np.int64)
    levels = np.asarray(levels, dtype=float)
    names = [f.name for f in forecasters]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate model names: {names}")
    realized = panel.series("price")[days]
    points = {n: np.full((days.size, HOURS), np.nan) for n in names}
    quants = {f.name: np.full((days.size, HOURS, levels.size), np.nan) if f.probabilistic else None for f in forecasters}
    missing = {n: [] for n in names}
    for i, d in enumerate(days):
        for f in forecasters:
            try:
                pred = f.predict(panel, int(d), levels)
            except (XModelError, np.linalg.LinAlgError) as exc:
                log.warning("model %s failed on day %d: %s", f.name, d, exc)
                missing[f.name].append((int(d), str(exc)))
                continue
            points[f.name][i] = pred.point
            if quants[f.name] is not None:
                if pred.quantiles is None:
                    quants[f.name] = None
                else:
                    quants[f.name][i] = pred.quantiles
    scores = score_table({n: points[n] - realized for n in names}, reference)
    pct = percent_levels(levels)
    cov = {}
    for n, q in quants.items():
        if q is not None:
            cov[n] = coverage(realized.ravel(), q[..., pct].reshape(-1, pct.size), levels[pct])
    return StudyResult(days, realized, levels, points, quants, missing, scores, cov)
