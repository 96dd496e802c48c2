"""Regressor processes, lag sets and regression designs for the class models."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InsufficientHistoryError, MissingExogenousError
from .panel import HOURS

log = logging.getLogger(__name__)

OWN_LAGS = 36
NEAR_LAGS = 8
FAR_LAGS = 1
MAX_LAG = OWN_LAGS
N_DUMMIES = 6  # W_2 .. W_7

MARKET_SERIES = ("price", "volume")
PLANNED_SERIES = ("generation", "wind", "solar")


def lag_set(m: int, h: int, l: int, j: int, own=OWN_LAGS, near=NEAR_LAGS, far=FAR_LAGS) -> range:
    """Admissible daily lags of process ``l`` at hour ``j`` in the model of ``(m, h)``."""
    same_proc = m == l
    same_hour = h == j
    if same_proc and same_hour:
        return range(1, own + 1)
    if same_proc or same_hour:
        return range(1, near + 1)
    return range(1, far + 1)


def weekday_dummies(weekdays) -> np.ndarray:
    """``W_k(d) = 1`` iff weekday(d) < k for k = 2..7 (Monday = 1)."""
    w = np.asarray(weekdays, dtype=np.int64)
    return (w[:, None] < np.arange(2, 8)[None, :]).astype(float)


@dataclass(frozen=True)
class FeatureSpace:
    """Process layout: ``n_classes`` modelled processes followed by exogenous ones.

    ``planned`` flags processes that are known one day ahead; they are stored
    shifted so that index ``d`` holds the value of day ``d + 1``.
    """

    n_classes: int
    exogenous: tuple = MARKET_SERIES + PLANNED_SERIES
    own_lags: int = OWN_LAGS
    near_lags: int = NEAR_LAGS
    far_lags: int = FAR_LAGS

    @property
    def n_processes(self) -> int:
        return self.n_classes + len(self.exogenous)

    @property
    def max_lag(self) -> int:
        return max(self.own_lags, self.near_lags, self.far_lags)

    @cached_property
    def planned(self) -> np.ndarray:
        flags = np.zeros(self.n_processes, dtype=bool)
        for i, name in enumerate(self.exogenous):
            flags[self.n_classes + i] = name in PLANNED_SERIES
        return flags

    def lags(self, m, h, l, j) -> range:
        return lag_set(m, h, l, j, self.own_lags, self.near_lags, self.far_lags)

    def columns(self, m: int, h: int) -> np.ndarray:
        """``(n_cols, 3)`` array of ``(l, j, k)`` in l-major, j, k order (dummies excluded)."""
        cached = self._column_cache.get((m, h))
        if cached is not None:
            return cached
        out = []
        for l in range(self.n_processes):
            for j in range(HOURS):
                for k in self.lags(m, h, l, j):
                    out.append((l, j, k))
        arr = np.array(out, dtype=np.int64)
        arr.setflags(write=False)
        self._column_cache[(m, h)] = arr
        return arr

    @cached_property
    def _column_cache(self) -> dict:
        return {}

    def n_columns(self, m: int = 0, h: int = 0) -> int:
        """Regressor count including the six weekday dummies."""
        return len(self.columns(m, h)) + N_DUMMIES

    def min_window(self) -> int:
        return self.max_lag + 1 + self.max_lag


@dataclass(frozen=True, eq=False)
class CenteredPanel:
    """Zero-mean process array ``Y[l, d, h] = X[l, d, h] - mu[l, h]`` over a window.

    ``weekdays[d]`` is the weekday of window day ``d``; one extra entry may hold
    the weekday of the day after the window (the forecast target).
    """

    Y: np.ndarray
    mu: np.ndarray
    weekdays: np.ndarray
    space: FeatureSpace
    filled: np.ndarray | None = None  # True where a missing value was replaced by the mean

    @property
    def n_days(self) -> int:
        return self.Y.shape[1]

    @classmethod
    def from_arrays(cls, X: np.ndarray, weekdays, space: FeatureSpace) -> "CenteredPanel":
        X = np.asarray(X, dtype=float)
        with np.errstate(invalid="ignore"):
            mu = np.nanmean(X, axis=1) if np.isnan(X).any() else X.mean(axis=1)
        mu = np.where(np.isfinite(mu), mu, 0.0)
        Y = X - mu[:, None, :]
        holes = np.isnan(Y)
        if holes.any():
            # a gap in a regressor series is filled with its mean (0 after centring)
            log.debug("filling %d missing process values with the sample mean", int(holes.sum()))
            Y = np.where(holes, 0.0, Y)
        return cls(Y, mu, np.asarray(weekdays, dtype=np.int64), space, holes)


def process_array(class_vols: np.ndarray, exo: dict, space: FeatureSpace, days: slice, n_panel_days: int) -> np.ndarray:
    """Stack class volumes and exogenous series for window ``days``.

    Planned series are shifted one day: position ``d`` of the window holds the
    planned value for day ``d + 1``. Values beyond the panel become NaN.
    """
    start, stop, _ = days.indices(n_panel_days)
    n = stop - start
    X = np.full((space.n_processes, n, HOURS), np.nan)
    X[: space.n_classes] = class_vols
    for i, name in enumerate(space.exogenous):
        series = exo.get(name)
        if series is None:
            raise MissingExogenousError(f"series {name!r} is required")
        shift = 1 if space.planned[space.n_classes + i] else 0
        a, b = start + shift, min(stop + shift, n_panel_days)
        X[space.n_classes + i, : b - a] = series[a:b]
    return X


def design_rows(cp: CenteredPanel) -> np.ndarray:
    """Window days usable as regression rows (full lag history available)."""
    lag = cp.space.max_lag
    if cp.n_days < cp.space.min_window():
        raise InsufficientHistoryError(
            f"window of {cp.n_days} days is shorter than the required {cp.space.min_window()}"
        )
    return np.arange(lag, cp.n_days)


def build_design(cp: CenteredPanel, m: int, h: int, rows=None):
    """Regression matrix and response for target ``(m, h)``.

    Returns ``(X, y, columns)`` where ``columns`` lists ``(l, j, k)`` of the lag
    regressors; the last six columns of ``X`` are the weekday dummies.
    """
    rows = design_rows(cp) if rows is None else np.asarray(rows)
    cols = cp.space.columns(m, h)
    Z = cp.Y.transpose(1, 0, 2)  # (day, process, hour)
    X = np.empty((rows.size, cols.shape[0] + N_DUMMIES), order="F")
    X[:, : cols.shape[0]] = Z[rows[:, None] - cols[None, :, 2], cols[None, :, 0], cols[None, :, 1]]
    X[:, cols.shape[0]:] = weekday_dummies(cp.weekdays[rows])
    y = cp.Y[m, rows, h].copy()
    return X, y, cols

