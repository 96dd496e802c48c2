"""Synthetic auction panels with planted class-level dynamics.

Each market side consists of a must-run class (all volume at the extreme grid
price) and interior classes that each own a contiguous block of bid prices.
Class volumes follow

    X[c, d, h] = mu[c] * (1 + amp * profile[h]) + weekday[W(d)]
                 + g[c] (wind[d, h] - wind mean) + Y[c, d, h]
    Y[c, d, h] = a1 Y[c, d-1, h] + a7 Y[c, d-7, h] + b Y[c, d-1, h-1] + e[c, d, h]

where ``h - 1`` is taken modulo 24, the weekday effects are centred over the
week and the wind gain ``g`` is nonzero only for the supply must-run class. The class volume is then
spread over the class prices: each price is active with probability ``pi`` and
active prices share the class volume in proportion to fixed weights. The top
price of every class (lowest for demand) is always active, so class totals are
reproduced exactly by the generated bids.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .errors import ConfigError
from .grid import DEFAULT_GRID, PriceGrid, Side
from .panel import HOURS, BidArrays, PanelDataset, clearing_series

log = logging.getLogger(__name__)

MIN_DAYS = 60


@dataclass(frozen=True)
class SyntheticConfig:
    n_days: int = 830
    start: date = date(2013, 1, 7)
    n_supply_classes: int = 16  # including the must-run class
    n_demand_classes: int = 16
    class_volume: float = 1000.0  # mean MW of an interior class
    must_run_margin: float = 0.15  # must-run mean = (K + margin) * class_volume
    price_low: float = -50.0
    price_high: float = 150.0
    prices_per_class: int = 6
    top_weight: float = 0.3  # share of the always-active boundary price
    activity_range: tuple = (0.35, 0.95)
    a1: float = 0.5
    a7: float = 0.25
    b_cross: float = 0.1
    noise: float = 0.06  # innovation sd is noise * sqrt(mu * class_volume)
    day_factor: float = 0.5  # correlation of innovations within a day
    daily_amplitude: float = 0.15
    weekday_effect: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, -30.0, -60.0)  # MW, Mon..Sun
    wind_coupling: float = 0.05  # must-run supply MW per MW of wind
    wind_level: float = 8000.0
    solar_level: float = 6000.0
    burn_in: int = 100

    def __post_init__(self):
        if self.n_days < MIN_DAYS:
            raise ConfigError(f"n_days must be at least {MIN_DAYS} to cover lag depth 36")
        if self.n_supply_classes < 2 or self.n_demand_classes < 2:
            raise ConfigError("need a must-run and at least one interior class per side")
        if len(self.weekday_effect) != 7:
            raise ConfigError("weekday_effect needs one value per weekday")
        if not 0 <= self.top_weight <= 1:
            raise ConfigError("top_weight must lie in [0, 1]")
        if self.noise < 0 or self.class_volume <= 0:
            raise ConfigError("noise must be >= 0 and class_volume > 0")
        if self.prices_per_class < 1:
            raise ConfigError("prices_per_class must be positive")


@dataclass(frozen=True, eq=False)
class SideTruth:
    side: Side
    class_ticks: list  # per class: ticks of its prices (ascending)
    top_index: np.ndarray  # per class: position of the always-active price
    weights: list  # per class: spreading weights, sum 1
    activity: list  # per class: (n_prices, 24) activation probabilities
    mu: np.ndarray  # (K,)
    volumes: np.ndarray  # (K, n_days, 24) planted class volumes
    latent: np.ndarray  # (K, n_days, 24) AR component Y
    wind_gain: np.ndarray  # (K,)

    def bounds(self) -> np.ndarray:
        """Boundary tick of each planted class (top for supply, bottom for demand)."""
        return np.array([t[i] for t, i in zip(self.class_ticks, self.top_index)])


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    config: SyntheticConfig
    seed: int
    supply: SideTruth
    demand: SideTruth
    profile: np.ndarray
    clamped: int = 0
    extras: dict = field(default_factory=dict)

    def side(self, side) -> SideTruth:
        return self.supply if Side(side) is Side.SUPPLY else self.demand


def _hour_profile():
    h = np.arange(HOURS)
    return np.sin(2 * np.pi * (h - 6) / 24)


def _layout(cfg: SyntheticConfig, side: Side, k: int, grid: PriceGrid, rng):
    """Price ticks, weights and activity probabilities of the k classes of a side."""
    n_int = k - 1
    edges = np.linspace(cfg.price_low, cfg.price_high, n_int + 1)
    if side is Side.DEMAND:
        edges = edges[::-1]
    ticks, tops, weights, activity = [], [], [], []
    extreme = 0 if side is Side.SUPPLY else grid.max_tick
    ticks.append(np.array([extreme]))
    tops.append(0)
    weights.append(np.ones(1))
    activity.append(np.ones((1, HOURS)))
    for c in range(n_int):
        lo, hi = sorted((edges[c], edges[c + 1]))
        t_lo, t_hi = grid.to_tick(round(lo, 1)) + 1, grid.to_tick(round(hi, 1))
        pos = np.unique(np.linspace(t_lo, t_hi, cfg.prices_per_class).round().astype(np.int64))
        top = pos.size - 1 if side is Side.SUPPLY else 0
        w = rng.dirichlet(np.ones(pos.size)) * (1 - cfg.top_weight) if pos.size > 1 else np.zeros(1)
        w[top] += cfg.top_weight if pos.size > 1 else 1.0
        base = rng.uniform(*cfg.activity_range, size=pos.size)
        wobble = 0.05 * rng.standard_normal((pos.size, 1)) * np.cos(2 * np.pi * np.arange(HOURS) / 24)
        pi = np.clip(base[:, None] + wobble, 0.0, 1.0)
        pi[top] = 1.0
        ticks.append(pos)
        tops.append(top)
        weights.append(w / w.sum())
        activity.append(pi)
    return ticks, np.array(tops), weights, activity


def _exogenous(cfg: SyntheticConfig, n: int, rng):
    h = np.arange(HOURS)
    wind_day = np.empty(n)
    x = 0.0
    for d in range(n):
        x = 0.7 * x + rng.standard_normal()
        wind_day[d] = x
    wind = cfg.wind_level * np.exp(0.35 * wind_day[:, None] + 0.1 * np.cos(2 * np.pi * h / 24)[None, :])
    wind += 0.03 * cfg.wind_level * rng.standard_normal((n, HOURS))
    wind = np.maximum(wind, 0.0)
    shape = np.clip(np.sin(np.pi * (h - 5) / 14), 0.0, None)
    shape[(h < 5) | (h > 19)] = 0.0
    sun = np.clip(0.6 + 0.25 * rng.standard_normal(n), 0.05, 1.2)
    solar = cfg.solar_level * sun[:, None] * shape[None, :]
    load = 50000 + 8000 * np.sin(np.pi * (h - 4) / 20).clip(0)[None, :] + 1500 * rng.standard_normal((n, HOURS))
    generation = load - 0.5 * wind - 0.5 * solar
    return wind, solar, generation


def _simulate_latent(cfg, mu, rng, n_total):
    k = mu.size
    y = np.zeros((k, n_total, HOURS))
    sd = cfg.noise * np.sqrt(mu * cfg.class_volume)
    rho = np.sqrt(cfg.day_factor)
    for d in range(n_total):
        common = rng.standard_normal(HOURS)
        idio = rng.standard_normal((k, HOURS))
        e = sd[:, None] * (rho * common[None, :] + np.sqrt(1 - cfg.day_factor) * idio)
        prev = y[:, d - 1] if d >= 1 else np.zeros((k, HOURS))
        week = y[:, d - 7] if d >= 7 else np.zeros((k, HOURS))
        cross = np.roll(prev, 1, axis=1)  # hour h-1 (mod 24) of day d-1
        y[:, d] = cfg.a1 * prev + cfg.a7 * week + cfg.b_cross * cross + e
    return y


def _spread(truth_vol, ticks, tops, weights, activity, n_days, rng):
    """Bid volumes per auction for one side, as dense (n_auctions, n_prices) plus tick vector."""
    all_ticks = np.concatenate(ticks)
    cols = []
    for c in range(len(ticks)):
        pi = activity[c]  # (p, 24)
        draws = rng.random((n_days, HOURS, pi.shape[0])) < pi.T[None, :, :]
        draws[:, :, tops[c]] = True
        w = draws * weights[c][None, None, :]
        share = w / w.sum(axis=2, keepdims=True)
        cols.append(share * truth_vol[c][:, :, None])
    dense = np.concatenate(cols, axis=2).reshape(n_days * HOURS, -1)
    return all_ticks, dense


def generate_synthetic(config: SyntheticConfig | None = None, seed: int = 0, grid: PriceGrid = DEFAULT_GRID) -> PanelDataset:
    """Deterministic synthetic panel; the planted truth is attached as ``panel.truth``."""
    cfg = config or SyntheticConfig()
    ss = np.random.SeedSequence(seed)
    r_layout, r_exo, r_sup, r_dem, r_spread = (np.random.default_rng(s) for s in ss.spawn(5))
    n = cfg.n_days
    n_total = n + cfg.burn_in
    days = tuple(cfg.start + timedelta(days=i) for i in range(n))
    profile = _hour_profile()

    wind, solar, generation = _exogenous(cfg, n_total, r_exo)
    wind_c = wind - wind.mean()
    weekdays = np.array([(cfg.start + timedelta(days=i - cfg.burn_in)).isoweekday() for i in range(n_total)])
    effect = np.asarray(cfg.weekday_effect, dtype=float)
    wd = (effect - effect.mean())[weekdays - 1]  # centred so that class means stay at mu

    sides = {}
    clamped = 0
    bids = {}
    for side, k, rng in ((Side.SUPPLY, cfg.n_supply_classes, r_sup), (Side.DEMAND, cfg.n_demand_classes, r_dem)):
        ticks, tops, weights, activity = _layout(cfg, side, k, grid, r_layout)
        mu = np.full(k, cfg.class_volume)
        mu[0] = (k - 1 + cfg.must_run_margin) * cfg.class_volume
        mu[-1] = 0.5 * cfg.class_volume  # last class carries less, as observed on real curves
        if k == 2:
            mu[-1] = cfg.class_volume
        gain = np.zeros(k)
        if side is Side.SUPPLY:
            gain[0] = cfg.wind_coupling  # renewables enter the must-run stack
        latent = _simulate_latent(cfg, mu, rng, n_total)
        level = mu[:, None, None] * (1 + cfg.daily_amplitude * profile[None, None, :]) + wd[None, :, None]
        vol = level + gain[:, None, None] * wind_c[None, :, :] + latent
        floor = 1e-3 * mu[:, None, None]
        low = vol < floor
        clamped += int(low[:, cfg.burn_in:].sum())
        vol = np.where(low, floor, vol)
        vol = vol[:, cfg.burn_in:]
        latent = latent[:, cfg.burn_in:]
        sides[side] = SideTruth(side, ticks, tops, weights, activity, mu, vol, latent, gain)
        all_ticks, dense = _spread(vol, ticks, tops, weights, activity, n, r_spread)
        bids[side] = BidArrays.from_dense(all_ticks, dense)
    if clamped:
        log.warning("clamped %d planted class volumes at the positivity floor", clamped)

    exo = {
        "generation": generation[cfg.burn_in:],
        "wind": wind[cfg.burn_in:],
        "solar": solar[cfg.burn_in:],
    }
    truth = SyntheticTruth(cfg, seed, sides[Side.SUPPLY], sides[Side.DEMAND], profile, clamped)
    panel = PanelDataset(days, bids[Side.SUPPLY], bids[Side.DEMAND], exo, grid, frozenset(), truth)
    price, volume = clearing_series(panel)
    return panel.with_exogenous(price=price, volume=volume)
