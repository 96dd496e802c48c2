"""Mean bid surfaces, price-class partitions and class-volume series."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .curves import PriceCurve, VolumeSurface, aggregate_curve
from .errors import EmptyPanelError, PartitionError
from .grid import DEFAULT_GRID, PriceGrid, Side
from .panel import HOURS, PanelDataset


@dataclass(frozen=True, eq=False)
class MeanSurface:
    """Average bid volume per price over ``n_auctions`` auctions."""

    surface: VolumeSurface
    n_auctions: int

    @property
    def side(self) -> Side:
        return self.surface.side

    @property
    def ticks(self):
        return self.surface.ticks

    @property
    def volumes(self):
        return self.surface.volumes

    @property
    def grid(self) -> PriceGrid:
        return self.surface.grid

    def dense(self) -> np.ndarray:
        out = np.zeros(self.grid.n_points)
        out[self.ticks] = self.volumes
        return out


def _mean_side(panel: PanelDataset, side: Side) -> MeanSurface:
    bids = panel.bids(side)
    n = bids.n_auctions
    dense = np.bincount(bids.ticks, weights=bids.volumes, minlength=panel.grid.n_points) / n
    ticks = np.flatnonzero(dense > 0)
    return MeanSurface(VolumeSurface(side, ticks, dense[ticks], panel.grid), n)


def mean_surfaces(panel: PanelDataset):
    """Mean supply and demand surfaces over every auction of the panel."""
    if panel.n_days == 0:
        raise EmptyPanelError("cannot average an empty panel")
    return _mean_side(panel, Side.SUPPLY), _mean_side(panel, Side.DEMAND)


def mean_curve(mean: MeanSurface) -> PriceCurve:
    return aggregate_curve(mean.surface)


@dataclass(frozen=True, eq=False)
class ClassPartition:
    """Class bounds of one side as grid ticks.

    Supply bounds ascend from ``p_min`` to ``p_max`` and class ``c`` holds the
    prices in ``(bounds[c-1], bounds[c]]``. Demand bounds descend from ``p_max``
    to ``p_min`` and class ``c`` holds ``[bounds[c], bounds[c-1])``.
    """

    side: Side
    bounds: np.ndarray
    v_star: float
    grid: PriceGrid = DEFAULT_GRID

    def __post_init__(self):
        b = np.array(self.bounds, dtype=np.int64)
        b.setflags(write=False)
        side = Side(self.side)
        step = np.diff(b)
        if side is Side.SUPPLY:
            ok = b[0] == 0 and b[-1] == self.grid.max_tick and np.all(step > 0)
        else:
            ok = b[0] == self.grid.max_tick and b[-1] == 0 and np.all(step < 0)
        if not ok:
            raise PartitionError("bounds must be strictly monotone and span the whole grid")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "side", side)

    @property
    def n_classes(self) -> int:
        return int(self.bounds.size)

    @property
    def prices(self) -> np.ndarray:
        return self.grid.to_prices(self.bounds)

    def class_of(self, ticks) -> np.ndarray:
        """Class index of every tick."""
        t = np.asarray(ticks, dtype=np.int64)
        if self.side is Side.SUPPLY:
            return np.searchsorted(self.bounds, t, side="left")
        asc = self.bounds[::-1]
        return self.n_classes - 1 - (np.searchsorted(asc, t, side="right") - 1)

    def intervals(self):
        """Inclusive ``(lo_tick, hi_tick)`` of every class, in class order."""
        b = self.bounds
        out = []
        for c in range(self.n_classes):
            if self.side is Side.SUPPLY:
                out.append((0 if c == 0 else int(b[c - 1]) + 1, int(b[c])))
            else:
                out.append((int(b[c]), self.grid.max_tick if c == 0 else int(b[c - 1]) - 1))
        return out

    def labels(self):
        return [f"{self.side.value}{p:g}" for p in self.prices]


def build_partition(curve: PriceCurve, v_star: float, grid: PriceGrid = DEFAULT_GRID) -> ClassPartition:
    """Invert a mean curve on the volume grid ``v_star, 2 v_star, ...``.

    Each target volume is mapped to the first bid price (in accumulation order)
    whose cumulative mean volume reaches it; the grid ends are always bounds.
    """
    if not v_star > 0:
        raise PartitionError("V_star must be positive")
    cum = curve.volumes
    total = float(cum[-1])
    if v_star >= total:
        raise PartitionError(f"V_star {v_star} is not below the total mean volume {total}")
    ticks = grid.to_ticks(curve.prices)
    tol = 1e-12 * total
    n_steps = int(np.ceil(total / v_star))
    targets = v_star * np.arange(1, n_steps + 1)
    targets = targets[targets < total - tol]
    idx = np.searchsorted(cum, targets - tol, side="left")
    chosen = set(ticks[idx].tolist()) | {0, grid.max_tick}
    bounds = np.array(sorted(chosen), dtype=np.int64)
    if curve.side is Side.DEMAND:
        bounds = bounds[::-1]
    return ClassPartition(curve.side, bounds, float(v_star), grid)


def partition_panel(panel: PanelDataset, v_star: float):
    """Supply and demand partitions from the panel's mean curves."""
    ms, md = mean_surfaces(panel)
    return (
        build_partition(mean_curve(ms), v_star, panel.grid),
        build_partition(mean_curve(md), v_star, panel.grid),
    )


def class_volumes(panel: PanelDataset, partition: ClassPartition) -> np.ndarray:
    """Class volumes with shape ``(n_classes, n_days, 24)``."""
    bids = panel.bids(partition.side)
    m = partition.n_classes
    key = bids.auction_index() * m + partition.class_of(bids.ticks)
    flat = np.bincount(key, weights=bids.volumes, minlength=bids.n_auctions * m)
    return flat.reshape(panel.n_days, HOURS, m).transpose(2, 0, 1).copy()


def class_volume_series(panel: PanelDataset, supply: ClassPartition, demand: ClassPartition):
    """Stacked class volumes ``(M_S + M_D, n_days, 24)``, supply classes first."""
    return np.concatenate([class_volumes(panel, supply), class_volumes(panel, demand)])


def write_partition_csv(path, *partitions: ClassPartition):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["side", "index", "bound"])
        for part in partitions:
            for i, p in enumerate(part.prices.tolist()):
                w.writerow([part.side.value, i, f"{p:.1f}"])


def read_partition_csv(path, v_star: float = float("nan"), grid: PriceGrid = DEFAULT_GRID):
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for r in reader:
            rows.setdefault(Side.parse(r["side"]), []).append((int(r["index"]), float(r["bound"])))
    out = {}
    for side, items in rows.items():
        items.sort()
        out[side] = ClassPartition(side, grid.to_ticks([b for _, b in items]), v_star, grid)
    return out
