"""From class-volume forecasts back to bid surfaces, curves and clearing prices.

Within a class the forecast volume is shared among the active prices in
proportion to their mean bid volume. Active means ``pi >= threshold`` for the
point forecast and an independent Bernoulli(``pi``) draw per price for every
bootstrap path.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from numba import njit

from .classes import ClassPartition, MeanSurface
from .curves import CROSS_OK, Intersection, PriceCurve, VolumeSurface, aggregate_curve, crossing, intersect
from .errors import ReconstructionError
from .grid import PriceGrid, Side
from .panel import HOURS, PanelDataset

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1.0 / 12.0
QUANTILE_LEVELS = np.round(np.concatenate([[0.001], np.arange(1, 100) / 100, [0.999]]), 3)


@dataclass(frozen=True, eq=False)
class ActivityProfile:
    """Relative frequency of a positive bid per (hour, price) for one side.

    ``pi`` has shape ``(24, len(ticks))``; with pooling every row is the same.
    Prices outside ``ticks`` were never bid and have probability 0.
    """

    side: Side
    ticks: np.ndarray
    pi: np.ndarray
    pooled: bool = False

    def at(self, hour: int) -> np.ndarray:
        return self.pi[hour]

    def lookup(self, hour: int, tick: int) -> float:
        i = np.searchsorted(self.ticks, tick)
        if i < self.ticks.size and self.ticks[i] == tick:
            return float(self.pi[hour, i])
        return 0.0


def estimate_activity(panel: PanelDataset, side, pooled: bool = False) -> ActivityProfile:
    side = Side(side)
    bids = panel.bids(side)
    ticks = np.unique(bids.ticks)
    pos = np.searchsorted(ticks, bids.ticks)
    hour = bids.auction_index() % HOURS
    counts = np.bincount(hour * ticks.size + pos, minlength=HOURS * ticks.size).reshape(HOURS, ticks.size)
    if pooled:
        pi = np.repeat(counts.sum(axis=0, keepdims=True) / (panel.n_days * HOURS), HOURS, axis=0)
    else:
        pi = counts / panel.n_days
    return ActivityProfile(side, ticks, pi, pooled)


@dataclass(frozen=True, eq=False)
class SideLayout:
    """Everything needed to rebuild one side: prices, their class, mean volume, activity."""

    side: Side
    ticks: np.ndarray  # ascending, every price with positive mean volume
    cls: np.ndarray  # class index per tick
    vbar: np.ndarray  # mean volume per tick
    pi: np.ndarray  # (24, n_ticks)
    bound_ticks: np.ndarray  # representative price of each class
    grid: PriceGrid

    @property
    def n_classes(self) -> int:
        return self.bound_ticks.size

    @classmethod
    def build(cls, partition: ClassPartition, mean: MeanSurface, profile: ActivityProfile) -> "SideLayout":
        if not (partition.side == mean.side == profile.side):
            raise ValueError("partition, mean surface and profile must belong to the same side")
        ticks = mean.ticks
        pos = np.searchsorted(profile.ticks, ticks)
        pos = np.minimum(pos, max(profile.ticks.size - 1, 0))
        found = profile.ticks.size > 0
        pi = np.zeros((HOURS, ticks.size))
        if found:
            hit = profile.ticks[pos] == ticks
            pi[:, hit] = profile.pi[:, pos[hit]]
        return cls(
            partition.side, ticks, partition.class_of(ticks), mean.volumes, pi,
            partition.bounds.copy(), partition.grid,
        )


@dataclass(frozen=True, eq=False)
class ReconstructedAuction:
    supply: VolumeSurface
    demand: VolumeSurface
    supply_curve: PriceCurve
    demand_curve: PriceCurve
    intersection: Intersection | None
    clamped: int = 0


def _clamp(x, side: Side):
    x = np.asarray(x, dtype=float)
    neg = x < 0
    if neg.any():
        log.info("%s: clamped %d negative class forecasts to zero", side.name.lower(), int(neg.sum()))
    return np.where(neg, 0.0, x), int(neg.sum())


def redistribute(layout: SideLayout, active: np.ndarray, x: np.ndarray):
    """Bid surface ``(ticks, volumes)`` that puts ``x[c]`` on the active prices of class c.

    A class with positive volume but no active mean mass gets a single bid at
    its representative price.
    """
    x, _ = _clamp(x, layout.side)
    if x.size != layout.n_classes:
        raise ValueError(f"expected {layout.n_classes} class volumes, got {x.size}")
    w = np.where(active, layout.vbar, 0.0)
    mass = np.bincount(layout.cls, weights=w, minlength=layout.n_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        vol = np.where(w > 0, w / mass[layout.cls] * x[layout.cls], 0.0)
    orphan = (mass <= 0) & (x > 0)
    t = np.concatenate([layout.ticks, layout.bound_ticks[orphan]])
    v = np.concatenate([vol, x[orphan]])
    keep = v > 0
    t, v = t[keep], v[keep]
    uniq, inv = np.unique(t, return_inverse=True)
    return uniq, np.bincount(inv, weights=v, minlength=uniq.size)


def _auction(sl: SideLayout, dl: SideLayout, ra, rd, xs, xd) -> ReconstructedAuction:
    xs, cs = _clamp(xs, Side.SUPPLY)
    xd, cd = _clamp(xd, Side.DEMAND)
    ts, vs = redistribute(sl, ra, xs)
    td, vd = redistribute(dl, rd, xd)
    if ts.size == 0 or td.size == 0:
        raise ReconstructionError("every class of one side is empty")
    s = VolumeSurface(Side.SUPPLY, ts, vs, sl.grid)
    d = VolumeSurface(Side.DEMAND, td, vd, dl.grid)
    sc, dc = aggregate_curve(s), aggregate_curve(d)
    try:
        inter = intersect(sc, dc)
    except Exception as exc:  # NoCrossingError
        log.info("reconstructed curves do not cross: %s", exc)
        inter = None
    return ReconstructedAuction(s, d, sc, dc, inter, cs + cd)


def reconstruct_point(sl: SideLayout, dl: SideLayout, hour: int, xs, xd, threshold: float = DEFAULT_THRESHOLD):
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    return _auction(sl, dl, sl.pi[hour] >= threshold, dl.pi[hour] >= threshold, xs, xd)


def reconstruct_draw(sl: SideLayout, dl: SideLayout, hour: int, xs, xd, rng):
    """One Bernoulli activity draw per price, independent across prices."""
    rng = np.random.default_rng(rng)
    ra = rng.random(sl.ticks.size) < sl.pi[hour]
    rd = rng.random(dl.ticks.size) < dl.pi[hour]
    return _auction(sl, dl, ra, rd, xs, xd)


# -- batch kernel ---------------------------------------------------------------

@njit(cache=True, nogil=True)
def _side_volumes(ticks, cls, vbar, bounds, active, x, out_t, out_v):
    """Fill out_t/out_v (ascending ticks) and return the count."""
    m = bounds.size
    k = ticks.size
    mass = np.zeros(m)
    for i in range(k):
        if active[i]:
            mass[cls[i]] += vbar[i]
    n = 0
    # classes are contiguous in tick order; walk ticks and insert orphan bids in order
    orphan = np.zeros(m, np.bool_)
    for c in range(m):
        orphan[c] = mass[c] <= 0.0 and x[c] > 0.0
    # merge ticks with orphan bound ticks (both ascending after sorting bounds)
    order = np.argsort(bounds)
    oi = 0
    for i in range(k + 1):
        t_next = ticks[i] if i < k else 1 << 62
        while oi < m and bounds[order[oi]] <= t_next:
            c = order[oi]
            if orphan[c]:
                bt = bounds[c]
                if n > 0 and out_t[n - 1] == bt:
                    out_v[n - 1] += x[c]
                else:
                    out_t[n] = bt
                    out_v[n] = x[c]
                    n += 1
            oi += 1
        if i == k:
            break
        if active[i] and mass[cls[i]] > 0.0 and x[cls[i]] > 0.0:
            v = vbar[i] / mass[cls[i]] * x[cls[i]]
            if v > 0.0:
                if n > 0 and out_t[n - 1] == ticks[i]:
                    out_v[n - 1] += v
                else:
                    out_t[n] = ticks[i]
                    out_v[n] = v
                    n += 1
    return n


@njit(cache=True, nogil=True)
def _clear_batch(s_ticks, s_cls, s_vbar, s_bounds, s_pi, s_u, xs,
                 d_ticks, d_cls, d_vbar, d_bounds, d_pi, d_u, xd, p_min, tick):
    """Clearing price/volume of B reconstructions (one per row of xs / xd)."""
    B = xs.shape[0]
    price = np.full(B, np.nan)
    volume = np.full(B, np.nan)
    status = np.zeros(B, np.int64)
    ts = np.empty(s_ticks.size + s_bounds.size, np.int64)
    vs = np.empty(s_ticks.size + s_bounds.size)
    td = np.empty(d_ticks.size + d_bounds.size, np.int64)
    vd = np.empty(d_ticks.size + d_bounds.size)
    act_s = np.empty(s_ticks.size, np.bool_)
    act_d = np.empty(d_ticks.size, np.bool_)
    for b in range(B):
        for i in range(s_ticks.size):
            act_s[i] = s_u[b, i] < s_pi[i]
        for i in range(d_ticks.size):
            act_d[i] = d_u[b, i] < d_pi[i]
        xsb = np.maximum(xs[b], 0.0)
        xdb = np.maximum(xd[b], 0.0)
        ns = _side_volumes(s_ticks, s_cls, s_vbar, s_bounds, act_s, xsb, ts, vs)
        nd = _side_volumes(d_ticks, d_cls, d_vbar, d_bounds, act_d, xdb, td, vd)
        if ns == 0 or nd == 0:
            status[b] = 4
            continue
        cs = np.cumsum(vs[:ns])
        ps = p_min + ts[:ns] * tick
        cd = np.cumsum(vd[:nd][::-1])
        pd = p_min + td[:nd][::-1] * tick
        st, v, p, _deg = crossing(cs, ps, cd, pd)
        status[b] = st
        if st == 0:
            price[b] = p
            volume[b] = v
    return price, volume, status


def clear_draws(sl: SideLayout, dl: SideLayout, hour: int, xs_draws, xd_draws, rng=None, threshold=None):
    """Clearing prices for many class-volume draws at one hour.

    With ``threshold`` set, activity is deterministic (``pi >= threshold``);
    otherwise each draw gets fresh Bernoulli activity from ``rng``.
    Returns unrounded ``(price, volume, status)`` arrays.
    """
    xs_draws = np.ascontiguousarray(np.atleast_2d(xs_draws), dtype=float)
    xd_draws = np.ascontiguousarray(np.atleast_2d(xd_draws), dtype=float)
    B = xs_draws.shape[0]
    if threshold is not None:
        pi_s = (sl.pi[hour] >= threshold).astype(float)
        pi_d = (dl.pi[hour] >= threshold).astype(float)
        us = np.full((B, sl.ticks.size), 0.5)
        ud = np.full((B, dl.ticks.size), 0.5)
    else:
        rng = np.random.default_rng(rng)
        pi_s, pi_d = sl.pi[hour], dl.pi[hour]
        us = rng.random((B, sl.ticks.size))
        ud = rng.random((B, dl.ticks.size))
    g = sl.grid
    return _clear_batch(
        sl.ticks, sl.cls, sl.vbar, sl.bound_ticks, np.ascontiguousarray(pi_s), us, xs_draws,
        dl.ticks, dl.cls, dl.vbar, dl.bound_ticks, np.ascontiguousarray(pi_d), ud, xd_draws,
        float(g.p_min), float(g.tick),
    )


# -- forecasts ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PriceForecast:
    point_price: float
    point_volume: float
    levels: np.ndarray
    price_quantiles: np.ndarray
    volume_quantiles: np.ndarray
    n_draws: int = 0
    n_failed: int = 0

    @property
    def unreliable(self) -> bool:
        return self.n_draws > 0 and self.n_failed > 0.01 * self.n_draws

    def quantile(self, level: float) -> float:
        i = np.flatnonzero(np.isclose(self.levels, level))
        if not i.size:
            raise KeyError(level)
        return float(self.price_quantiles[i[0]])


def empirical_quantiles(values, levels=QUANTILE_LEVELS) -> np.ndarray:
    """Order-statistic quantiles with linear interpolation between ranks.

    For sorted values v_1..v_n and level q the position is 1 + q (n - 1).
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.full(len(levels), np.nan)
    return np.quantile(v, levels, method="linear")


def price_forecast(point: Intersection | None, draw_prices, draw_volumes, levels=QUANTILE_LEVELS, n_failed: int = 0) -> PriceForecast:
    """Point forecast plus empirical quantiles of the successful draws."""
    levels = np.asarray(levels, dtype=float)
    p = np.asarray(draw_prices, dtype=float)
    v = np.asarray(draw_volumes, dtype=float)
    ok = np.isfinite(p)
    n_failed = int(n_failed + (~ok).sum())
    pp = float("nan") if point is None else point.price
    pv = float("nan") if point is None else point.volume
    if p.size and not ok.any():
        log.warning("no reconstruction draw produced a crossing")
    return PriceForecast(
        pp, pv, levels,
        np.round(empirical_quantiles(p[ok], levels), 2),
        empirical_quantiles(v[ok], levels),
        int(p.size), n_failed,
    )


def write_forecast_report(path, rows):
    """``rows``: iterable of ``(date, hour, PriceForecast)``."""
    rows = list(rows)
    levels = rows[0][2].levels if rows else QUANTILE_LEVELS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "hour", "point_price", "point_volume"] + [f"q{lv:g}" for lv in levels])
        for day, hour, fc in rows:
            w.writerow([str(day), hour, _fmt(fc.point_price), _fmt(fc.point_volume, 4)]
                       + [_fmt(q) for q in fc.price_quantiles])


def _fmt(x, digits=2):
    return "" if not np.isfinite(x) else f"{x:.{digits}f}"


def curve_bands(layout: SideLayout, hour: int, x_point, x_draws, rng, levels=(0.05, 0.5, 0.95), threshold=DEFAULT_THRESHOLD):
    """Cumulative volume per price for the point reconstruction and quantile bands over draws.

    Returns ``(prices, point_cum, band)`` with ``band`` of shape ``(len(levels), n_prices)``;
    cumulation follows the side's aggregation order (ascending supply, descending demand).
    """
    rng = np.random.default_rng(rng)
    ticks = np.union1d(layout.ticks, layout.bound_ticks)

    def cum_of(active, x):
        t, v = redistribute(layout, active, x)
        dense = np.zeros(ticks.size)
        dense[np.searchsorted(ticks, t)] = v
        if layout.side is Side.DEMAND:
            return np.cumsum(dense[::-1])[::-1]
        return np.cumsum(dense)

    point_cum = cum_of(layout.pi[hour] >= threshold, x_point)
    x_draws = np.atleast_2d(x_draws)
    sims = np.empty((x_draws.shape[0], ticks.size))
    for b in range(x_draws.shape[0]):
        sims[b] = cum_of(rng.random(layout.ticks.size) < layout.pi[hour], x_draws[b])
    band = np.quantile(sims, levels, axis=0, method="linear")
    return layout.grid.to_prices(ticks), point_cum, band


def write_curve_bands(path, records, levels):
    """``records``: iterable of ``(date, hour, side, prices, point_cum, band)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "hour", "side", "price", "point"] + [f"q{lv:g}" for lv in levels])
        for day, hour, side, prices, point_cum, band in records:
            for i, p in enumerate(prices.tolist()):
                w.writerow([str(day), hour, Side(side).value, f"{p:.1f}", f"{point_cum[i]:.4f}"]
                           + [f"{band[q, i]:.4f}" for q in range(band.shape[0])])


def reconstructed_clearing(sl, dl, hour, xs, xd, threshold=DEFAULT_THRESHOLD) -> Intersection | None:
    """Point reconstruction clearing via the batch kernel (rounded like ``intersect``)."""
    p, v, st = clear_draws(sl, dl, hour, xs[None], xd[None], threshold=threshold)
    if st[0] != CROSS_OK:
        return None
    return Intersection(round(float(p[0]), 2), float(v[0]), False, float(p[0]))
