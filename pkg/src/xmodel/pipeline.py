"""End-to-end model: partition, fit, forecast and reconstruct for one target day."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .classes import ClassPartition, class_volumes, mean_surfaces, build_partition, mean_curve
from .errors import ConfigError, InsufficientHistoryError
from .features import CenteredPanel, FeatureSpace, process_array
from .grid import Side
from .model import FitSettings, FittedModels, ForecastSample, bootstrap_forecast, fit_all, point_forecast
from .panel import HOURS, PanelDataset
from .reconstruction import (
    DEFAULT_THRESHOLD, QUANTILE_LEVELS, PriceForecast, SideLayout, clear_draws, estimate_activity,
    price_forecast, reconstructed_clearing,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class XModelConfig:
    window_days: int = 730
    v_star: float = 1000.0
    fit: FitSettings = field(default_factory=FitSettings)
    B: int = 1000
    threshold: float = DEFAULT_THRESHOLD
    pool_activity: bool = False
    center_residuals: bool = True
    exogenous: tuple = ("price", "volume", "generation", "wind", "solar")
    seed: int = 0

    def __post_init__(self):
        if self.window_days < 1:
            raise ConfigError("window_days must be positive")
        if not self.v_star > 0:
            raise ConfigError("V_star must be positive")
        if self.B < 0:
            raise ConfigError("B must be non-negative")
        if not 0 <= self.threshold <= 1:
            raise ConfigError("threshold must lie in [0, 1]")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["exogenous"] = list(self.exogenous)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "XModelConfig":
        d = dict(d)
        fit = d.pop("fit", {}) or {}
        if "exogenous" in d:
            d["exogenous"] = tuple(d["exogenous"])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(fit=FitSettings(**fit), **d)

    def with_fit(self, **kw) -> "XModelConfig":
        return replace(self, fit=replace(self.fit, **kw))


@dataclass(frozen=True, eq=False)
class WindowFit:
    """Fitted state for the window ``[start, stop)`` of a panel, forecasting day ``stop``."""

    start: int
    stop: int
    partitions: tuple  # (supply, demand)
    layouts: tuple  # (supply, demand) SideLayout
    models: FittedModels
    centered: CenteredPanel
    target_weekday: int | None

    @property
    def n_supply(self) -> int:
        return self.partitions[0].n_classes


def window_bounds(panel: PanelDataset, target: int, window_days: int):
    start = target - window_days
    if start < 0:
        raise InsufficientHistoryError(
            f"target day {target} needs {window_days} days of history, panel has {target}"
        )
    return start, target


def prepare_window(panel: PanelDataset, start: int, stop: int, cfg: XModelConfig):
    """Partitions, class volumes and centred processes for window days ``[start, stop)``.

    Only bids and market results of days before ``stop`` are read; planned
    series are read through day ``stop`` (they are known before the auction).
    """
    hist = panel.slice_days(start, stop)
    ms, md = mean_surfaces(hist)
    ps = build_partition(mean_curve(ms), cfg.v_star, panel.grid)
    pd = build_partition(mean_curve(md), cfg.v_star, panel.grid)
    xs = class_volumes(hist, ps)
    xd = class_volumes(hist, pd)
    space = FeatureSpace(ps.n_classes + pd.n_classes, tuple(cfg.exogenous))
    exo = {}
    for name in cfg.exogenous:
        series = panel.series(name)
        if name in ("price", "volume"):
            series = series[:stop]  # market results are only known up to the last auction
        exo[name] = series
    X = process_array(np.concatenate([xs, xd]), exo, space, slice(start, stop), min(panel.n_days, stop + 1))
    weekdays = np.array([panel.weekday(d) for d in range(start, stop)])
    cp = CenteredPanel.from_arrays(X, weekdays, space)
    act_s = estimate_activity(hist, Side.SUPPLY, cfg.pool_activity)
    act_d = estimate_activity(hist, Side.DEMAND, cfg.pool_activity)
    layouts = (SideLayout.build(ps, ms, act_s), SideLayout.build(pd, md, act_d))
    return (ps, pd), layouts, cp


def fit_window(panel: PanelDataset, target: int, cfg: XModelConfig, threads: int | None = None) -> WindowFit:
    start, stop = window_bounds(panel, target, cfg.window_days)
    parts, layouts, cp = prepare_window(panel, start, stop, cfg)
    fm = fit_all(cp, cfg.fit, threads)
    if target < panel.n_days:
        wd = panel.weekday(target)
    else:
        wd = ((panel.days[-1].isoweekday() + (target - panel.n_days + 1) - 1) % 7) + 1
    return WindowFit(start, stop, parts, layouts, fm, cp, wd)


@dataclass(frozen=True, eq=False)
class DayForecast:
    target: int
    class_point: np.ndarray  # (n_classes, 24)
    sample: ForecastSample | None
    hours: list  # PriceForecast per hour

    def point_prices(self) -> np.ndarray:
        return np.array([f.point_price for f in self.hours])

    def quantiles(self) -> np.ndarray:
        return np.array([f.price_quantiles for f in self.hours])


def day_seed(seed: int, target: int, hour: int | None = None):
    key = [int(seed), int(target)] if hour is None else [int(seed), int(target), int(hour)]
    return np.random.SeedSequence(key)


def forecast_day(wf: WindowFit, cfg: XModelConfig, B: int | None = None, levels=QUANTILE_LEVELS) -> DayForecast:
    """Point and bootstrap forecast of all 24 clearing prices of the target day."""
    B = cfg.B if B is None else B
    point = point_forecast(wf.models, wf.centered, wf.target_weekday)
    sample = None
    if B > 0:
        sample = bootstrap_forecast(
            wf.models, point, B, np.random.default_rng(day_seed(cfg.seed, wf.stop)), cfg.center_residuals
        )
    sl, dl = wf.layouts
    ms = wf.n_supply
    hours = []
    for h in range(HOURS):
        inter = reconstructed_clearing(sl, dl, h, point[:ms, h], point[ms:, h], cfg.threshold)
        if sample is None:
            hours.append(price_forecast(inter, [], [], levels))
            continue
        rng = np.random.default_rng(day_seed(cfg.seed, wf.stop, h))
        p, v, st = clear_draws(sl, dl, h, sample.draws[:, :ms, h], sample.draws[:, ms:, h], rng)
        fc = price_forecast(inter, p, v, levels)
        if fc.unreliable:
            log.warning("day %d hour %d: %d of %d draws did not cross", wf.stop, h, fc.n_failed, fc.n_draws)
        hours.append(fc)
    return DayForecast(wf.stop, point, sample, hours)
