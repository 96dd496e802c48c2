"""Bid surfaces, aggregated sale/purchase curves and their intersection.

Curves are piecewise linear in the (cumulative volume, price) plane. The supply
curve accumulates bids in ascending price order, the demand curve in descending
price order, so both have strictly increasing cumulative volume and the clearing
point is the unique volume where supply price minus demand price changes sign.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from numba import njit

from .errors import EmptyCurveError, NoCrossingError, OutOfSupportError
from .grid import DEFAULT_GRID, PriceGrid, Side

# status codes returned by the crossing kernel
CROSS_OK = 0
CROSS_NO_OVERLAP = 1
CROSS_SUPPLY_ABOVE = 2
CROSS_DEMAND_ABOVE = 3
CROSS_EMPTY = 4


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VolumeSurface:
    """Bid volume per grid price for one auction and one market side.

    Only prices with strictly positive volume are stored; ``ticks`` is sorted
    ascending and unique.
    """

    side: Side
    ticks: np.ndarray
    volumes: np.ndarray
    grid: PriceGrid = DEFAULT_GRID

    def __post_init__(self):
        ticks = _frozen(self.ticks, np.int64)
        volumes = _frozen(self.volumes, np.float64)
        if ticks.shape != volumes.shape or ticks.ndim != 1:
            raise ValueError("ticks and volumes must be 1-d arrays of equal length")
        if ticks.size and (np.any(np.diff(ticks) <= 0) or ticks[0] < 0 or ticks[-1] > self.grid.max_tick):
            raise ValueError("ticks must be sorted, unique and on the grid")
        if np.any(~(volumes > 0)):
            raise ValueError("stored bid volumes must be strictly positive")
        object.__setattr__(self, "ticks", ticks)
        object.__setattr__(self, "volumes", volumes)
        object.__setattr__(self, "side", Side(self.side))

    @classmethod
    def from_bids(cls, side, bids, grid: PriceGrid = DEFAULT_GRID) -> "VolumeSurface":
        """Build a surface from ``{price: volume}`` or ``(price, volume)`` pairs.

        Several bids at one price are summed; zero volumes are dropped.
        """
        items = list(bids.items()) if isinstance(bids, Mapping) else list(bids)
        if not items:
            return cls(side, np.zeros(0, np.int64), np.zeros(0), grid)
        prices, vols = zip(*items)
        vols = np.asarray(vols, dtype=float)
        if np.any(vols < 0) or not np.all(np.isfinite(vols)):
            raise ValueError("bid volumes must be finite and non-negative")
        ticks = grid.to_ticks(prices)
        uniq, inv = np.unique(ticks, return_inverse=True)
        summed = np.bincount(inv, weights=vols, minlength=uniq.size)
        keep = summed > 0
        return cls(side, uniq[keep], summed[keep], grid)

    @property
    def prices(self) -> np.ndarray:
        return self.grid.to_prices(self.ticks)

    @property
    def total(self) -> float:
        return float(self.volumes.sum())

    def __len__(self):
        return int(self.ticks.size)

    def as_dict(self) -> dict:
        return dict(zip(self.prices.tolist(), self.volumes.tolist()))


@dataclass(frozen=True, eq=False)
class PriceCurve:
    """Aggregated curve as knots ``(cumulative volume, price)``."""

    side: Side
    volumes: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        v = _frozen(self.volumes, np.float64)
        p = _frozen(self.prices, np.float64)
        if v.shape != p.shape or v.ndim != 1:
            raise ValueError("volumes and prices must be 1-d arrays of equal length")
        if v.size == 0:
            raise EmptyCurveError("a price curve needs at least one point")
        if np.any(np.diff(v) < 0):
            raise ValueError("cumulative volume must be non-decreasing")
        dp = np.diff(p)
        side = Side(self.side)
        if side is Side.SUPPLY and np.any(dp <= 0):
            raise ValueError("supply prices must be strictly increasing")
        if side is Side.DEMAND and np.any(dp >= 0):
            raise ValueError("demand prices must be strictly decreasing")
        object.__setattr__(self, "side", side)
        object.__setattr__(self, "volumes", v)
        object.__setattr__(self, "prices", p)

    def __len__(self):
        return int(self.volumes.size)

    @property
    def total_volume(self) -> float:
        return float(self.volumes[-1])


@dataclass(frozen=True)
class Intersection:
    price: float
    volume: float
    degenerate: bool = False
    unrounded_price: float = field(default=float("nan"), compare=False)


def aggregate_curve(surface: VolumeSurface) -> PriceCurve:
    """Cumulate bid volumes: ascending prices for supply, descending for demand."""
    if len(surface) == 0:
        raise EmptyCurveError(f"no bids on the {surface.side.name.lower()} side")
    prices = surface.prices
    vols = surface.volumes
    if surface.side is Side.DEMAND:
        prices = prices[::-1]
        vols = vols[::-1]
    return PriceCurve(surface.side, np.cumsum(vols), prices)


def interpolate(curve: PriceCurve, volume: float) -> float:
    """Price of the linearly interpolated curve at ``volume``."""
    v = curve.volumes
    tol = 1e-9 * max(1.0, abs(v[-1]))
    if not (v[0] - tol <= volume <= v[-1] + tol):
        raise OutOfSupportError(f"volume {volume} outside curve support [{v[0]}, {v[-1]}]")
    if v.size == 1:
        return float(curve.prices[0])
    return float(np.interp(volume, v, curve.prices))


@njit(cache=True, nogil=True)
def _value_at(x, xs, ys, i):
    # linear interpolation on segment [xs[i], xs[i+1]]; i may be the last knot
    if i >= xs.size - 1:
        return ys[xs.size - 1]
    x0 = xs[i]
    x1 = xs[i + 1]
    if x1 == x0:
        return ys[i + 1]
    return ys[i] + (ys[i + 1] - ys[i]) * (x - x0) / (x1 - x0)


@njit(cache=True, nogil=True)
def _advance(x, xs, i):
    # largest i with xs[i] <= x (xs sorted)
    while i + 1 < xs.size and xs[i + 1] <= x:
        i += 1
    return i


@njit(cache=True, nogil=True)
def crossing(vs, ps, vd, pd):
    """Merge-sweep crossing of two piecewise-linear curves.

    Returns ``(status, volume, price, degenerate)``; the first curve plays the
    supply role (it must start below the second one).
    """
    ns = vs.size
    nd = vd.size
    if ns == 0 or nd == 0:
        return CROSS_EMPTY, np.nan, np.nan, False
    lo = max(vs[0], vd[0])
    hi = min(vs[ns - 1], vd[nd - 1])
    if lo > hi:
        return CROSS_NO_OVERLAP, np.nan, np.nan, False
    i = _advance(lo, vs, 0)
    k = _advance(lo, vd, 0)
    v_prev = lo
    f_prev = _value_at(lo, vs, ps, i) - _value_at(lo, vd, pd, k)
    if f_prev > 0.0:
        return CROSS_SUPPLY_ABOVE, np.nan, np.nan, False
    while True:
        if f_prev == 0.0:
            # touching point; look ahead for a coincident segment
            degenerate = False
            if v_prev < hi:
                nxt = hi
                if i + 1 < ns and vs[i + 1] < nxt:
                    nxt = vs[i + 1]
                if k + 1 < nd and vd[k + 1] < nxt:
                    nxt = vd[k + 1]
                ii = _advance(nxt, vs, i)
                kk = _advance(nxt, vd, k)
                f_nxt = _value_at(nxt, vs, ps, ii) - _value_at(nxt, vd, pd, kk)
                degenerate = f_nxt == 0.0
            return CROSS_OK, v_prev, _value_at(v_prev, vs, ps, i), degenerate
        if v_prev >= hi:
            return CROSS_DEMAND_ABOVE, np.nan, np.nan, False
        v_next = hi
        if i + 1 < ns and vs[i + 1] < v_next:
            v_next = vs[i + 1]
        if k + 1 < nd and vd[k + 1] < v_next:
            v_next = vd[k + 1]
        # f is linear on [v_prev, v_next]; evaluate with the segments valid there
        f_next = _value_at(v_next, vs, ps, i) - _value_at(v_next, vd, pd, k)
        if f_next >= 0.0:
            if f_next == 0.0:
                v_prev = v_next
                i = _advance(v_prev, vs, i)
                k = _advance(v_prev, vd, k)
                f_prev = 0.0
                continue
            v = v_prev + (v_next - v_prev) * (-f_prev) / (f_next - f_prev)
            return CROSS_OK, v, _value_at(v, vs, ps, i), False
        v_prev = v_next
        i = _advance(v_prev, vs, i)
        k = _advance(v_prev, vd, k)
        f_prev = _value_at(v_prev, vs, ps, i) - _value_at(v_prev, vd, pd, k)
        if f_prev > 0.0:
            # sign change across a vertical step (repeated volume knot)
            return CROSS_OK, v_prev, _value_at(v_prev, vd, pd, k), False


_CROSS_MESSAGES = {
    CROSS_NO_OVERLAP: "curves share no common volume range",
    CROSS_SUPPLY_ABOVE: "supply lies above demand over the whole common volume range",
    CROSS_DEMAND_ABOVE: "demand lies above supply over the whole common volume range",
    CROSS_EMPTY: "empty curve",
}


def intersect(supply: PriceCurve, demand: PriceCurve) -> Intersection:
    """Market clearing point of two curves; price rounded to two decimals."""
    status, v, p, degenerate = crossing(supply.volumes, supply.prices, demand.volumes, demand.prices)
    if status != CROSS_OK:
        raise NoCrossingError(_CROSS_MESSAGES[status])
    return Intersection(round(float(p), 2), float(v), bool(degenerate), float(p))


def clear(supply: VolumeSurface, demand: VolumeSurface) -> Intersection:
    return intersect(aggregate_curve(supply), aggregate_curve(demand))


def curve_from_points(side, points: Iterable[tuple[float, float]]) -> PriceCurve:
    """Curve from explicit ``(volume, price)`` knots."""
    pts = list(points)
    return PriceCurve(side, [v for v, _ in pts], [p for _, p in pts])
