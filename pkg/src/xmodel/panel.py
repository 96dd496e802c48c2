"""Day x hour panel of auction bid surfaces plus exogenous series."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Any, Mapping

import numpy as np

from .curves import VolumeSurface
from .errors import EmptyPanelError, ValidationError
from .grid import DEFAULT_GRID, PriceGrid, Side

HOURS = 24


@dataclass(frozen=True, eq=False)
class BidArrays:
    """All bids of one side in compressed row form, one row per auction.

    Auction ``a = day * 24 + hour`` owns ``ticks[offsets[a]:offsets[a + 1]]``
    (sorted ascending) and the matching ``volumes``.
    """

    ticks: np.ndarray
    volumes: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        for name, dtype in (("ticks", np.int64), ("volumes", np.float64), ("offsets", np.int64)):
            a = np.array(getattr(self, name), dtype=dtype)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_auctions(self) -> int:
        return self.offsets.size - 1

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def auction_index(self) -> np.ndarray:
        """Auction id of every stored bid."""
        return np.repeat(np.arange(self.n_auctions), self.counts())

    def row(self, a: int):
        s, e = self.offsets[a], self.offsets[a + 1]
        return self.ticks[s:e], self.volumes[s:e]

    def slice_auctions(self, start: int, stop: int) -> "BidArrays":
        s, e = self.offsets[start], self.offsets[stop]
        return BidArrays(self.ticks[s:e], self.volumes[s:e], self.offsets[start:stop + 1] - s)

    def totals(self) -> np.ndarray:
        return np.bincount(self.auction_index(), weights=self.volumes, minlength=self.n_auctions)

    @classmethod
    def from_rows(cls, rows) -> "BidArrays":
        """Build from an iterable of ``(ticks, volumes)`` pairs, one per auction."""
        ticks, vols, offsets = [], [], [0]
        for t, v in rows:
            ticks.append(np.asarray(t, dtype=np.int64))
            vols.append(np.asarray(v, dtype=float))
            offsets.append(offsets[-1] + len(ticks[-1]))
        if not ticks:
            return cls(np.zeros(0, np.int64), np.zeros(0), np.zeros(1, np.int64))
        return cls(np.concatenate(ticks), np.concatenate(vols), np.asarray(offsets))

    @classmethod
    def from_dense(cls, ticks: np.ndarray, volumes: np.ndarray) -> "BidArrays":
        """``volumes`` has shape (n_auctions, len(ticks)); zeros are dropped."""
        volumes = np.asarray(volumes, dtype=float)
        order = np.argsort(ticks)
        ticks = np.asarray(ticks, dtype=np.int64)[order]
        volumes = volumes[:, order]
        mask = volumes > 0
        counts = mask.sum(axis=1)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        flat_ticks = np.broadcast_to(ticks, volumes.shape)[mask]
        return cls(flat_ticks, volumes[mask], offsets)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Normalized panel: consecutive days with exactly 24 auctions each.

    ``exogenous`` maps a series name (price, volume, generation, wind, solar)
    to an array of shape ``(n_days, 24)``. ``dst_days`` records the days whose
    raw data had 23 or 25 auctions before normalization.
    """

    days: tuple
    supply: BidArrays
    demand: BidArrays
    exogenous: Mapping[str, np.ndarray] = field(default_factory=dict)
    grid: PriceGrid = DEFAULT_GRID
    dst_days: frozenset = frozenset()
    truth: Any = None

    def __post_init__(self):
        days = tuple(self.days)
        object.__setattr__(self, "days", days)
        n = len(days)
        for i in range(1, n):
            if days[i] - days[i - 1] != timedelta(days=1):
                raise ValidationError(f"days must be consecutive; gap after {days[i - 1]}")
        for side in (self.supply, self.demand):
            if side.n_auctions != n * HOURS:
                raise ValidationError("bid arrays do not cover 24 auctions per day")
        exo = {}
        for name, arr in dict(self.exogenous).items():
            a = np.array(arr, dtype=float)
            if a.shape != (n, HOURS):
                raise ValidationError(f"exogenous series {name!r} must have shape ({n}, 24)")
            a.setflags(write=False)
            exo[name] = a
        object.__setattr__(self, "exogenous", exo)
        object.__setattr__(self, "dst_days", frozenset(self.dst_days))

    @property
    def n_days(self) -> int:
        return len(self.days)

    def bids(self, side) -> BidArrays:
        return self.supply if Side(side) is Side.SUPPLY else self.demand

    def surface(self, day: int, hour: int, side) -> VolumeSurface:
        t, v = self.bids(side).row(day * HOURS + hour)
        return VolumeSurface(Side(side), t, v, self.grid)

    def weekday(self, day: int) -> int:
        """1 for Monday ... 7 for Sunday."""
        return self.days[day].isoweekday()

    def weekdays(self) -> np.ndarray:
        return np.array([d.isoweekday() for d in self.days], dtype=np.int64)

    def day_index(self, d: date) -> int:
        if not self.days:
            raise EmptyPanelError("panel has no days")
        i = (d - self.days[0]).days
        if not 0 <= i < self.n_days:
            raise KeyError(f"{d} not in panel")
        return i

    def series(self, name: str) -> np.ndarray:
        try:
            return self.exogenous[name]
        except KeyError:
            raise KeyError(f"panel has no exogenous series {name!r}") from None

    def total_volume(self, side) -> np.ndarray:
        return self.bids(side).totals().reshape(self.n_days, HOURS)

    def slice_days(self, start: int, stop: int) -> "PanelDataset":
        start, stop, _ = slice(start, stop).indices(self.n_days)
        a, b = start * HOURS, stop * HOURS
        return PanelDataset(
            self.days[start:stop],
            self.supply.slice_auctions(a, b),
            self.demand.slice_auctions(a, b),
            {k: v[start:stop] for k, v in self.exogenous.items()},
            self.grid,
            frozenset(d for d in self.dst_days if d in set(self.days[start:stop])),
            self.truth,
        )

    def with_exogenous(self, **series) -> "PanelDataset":
        exo = dict(self.exogenous)
        exo.update(series)
        return PanelDataset(self.days, self.supply, self.demand, exo, self.grid, self.dst_days, self.truth)


def clearing_series(panel: PanelDataset):
    """Clearing price and volume of every auction from the stored curves.

    Auctions whose curves do not cross get NaN.
    """
    from .curves import CROSS_OK, crossing

    price = np.full(panel.n_days * HOURS, np.nan)
    volume = np.full(panel.n_days * HOURS, np.nan)
    to_p = panel.grid.to_prices
    for a in range(panel.n_days * HOURS):
        ts, vs = panel.supply.row(a)
        td, vd = panel.demand.row(a)
        if ts.size == 0 or td.size == 0:
            continue
        status, v, p, _ = crossing(np.cumsum(vs), to_p(ts), np.cumsum(vd[::-1]), to_p(td[::-1]))
        if status == CROSS_OK:
            price[a] = round(p, 2)
            volume[a] = v
    return price.reshape(-1, HOURS), volume.reshape(-1, HOURS)
