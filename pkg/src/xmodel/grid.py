"""Admissible bid prices and market sides."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError


class Side(str, Enum):
    SUPPLY = "S"
    DEMAND = "D"

    @classmethod
    def parse(cls, code: str) -> "Side":
        try:
            return cls(code.strip().upper())
        except ValueError:
            raise ValueError(f"unknown side code {code!r}, expected 'S' or 'D'") from None


@dataclass(frozen=True)
class PriceGrid:
    """Equidistant price grid ``p_min, p_min + tick, ..., p_max`` in EUR/MWh.

    Prices are handled internally as integer tick offsets from ``p_min`` so that
    membership tests on the 0.1 EUR/MWh grid never depend on float equality.
    """

    p_min: float = -500.0
    p_max: float = 3000.0
    tick: float = 0.1

    def __post_init__(self):
        if not self.p_min < self.p_max:
            raise ValueError("p_min must be below p_max")
        if not self.tick > 0:
            raise ValueError("tick must be positive")
        steps = (self.p_max - self.p_min) / self.tick
        if abs(steps - round(steps)) > 1e-6:
            raise ValueError("(p_max - p_min) / tick must be an integer")

    @property
    def n_points(self) -> int:
        return int(round((self.p_max - self.p_min) / self.tick)) + 1

    @property
    def max_tick(self) -> int:
        return self.n_points - 1

    @property
    def decimals(self) -> int:
        # enough digits to print any grid price exactly
        return max(0, -math.floor(math.log10(self.tick)) + 1)

    def to_ticks(self, prices) -> np.ndarray:
        p = np.asarray(prices, dtype=float)
        raw = (p - self.p_min) / self.tick
        ticks = np.rint(raw)
        bad = (np.abs(raw - ticks) > 1e-6) | (ticks < 0) | (ticks > self.max_tick) | ~np.isfinite(raw)
        if np.any(bad):
            offender = np.atleast_1d(p)[np.atleast_1d(bad)][0]
            raise ValidationError(f"price {offender!r} is not on the grid")
        return ticks.astype(np.int64)

    def to_tick(self, price: float) -> int:
        return int(self.to_ticks(price))

    def to_prices(self, ticks) -> np.ndarray:
        t = np.asarray(ticks, dtype=np.int64)
        return np.round(self.p_min + t * self.tick, self.decimals + 6)

    def to_price(self, tick: int) -> float:
        return float(self.to_prices(tick))

    def values(self) -> np.ndarray:
        return self.to_prices(np.arange(self.n_points))


DEFAULT_GRID = PriceGrid()
