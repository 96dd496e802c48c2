from datetime import date, timedelta

import numpy as np
import pytest

from xmodel.grid import DEFAULT_GRID, Side
from xmodel.panel import HOURS, BidArrays, PanelDataset, clearing_series
from xmodel.synthetic import SyntheticConfig, generate_synthetic

TOY_SUPPLY_A = {-500.0: 1000.0, -10.0: 20.0, 0.0: 50.0, 10.0: 200.0, 20.0: 50.0, 3000.0: 70.0}
TOY_SUPPLY_B = {-500.0: 1000.0, -10.0: 20.0, 0.0: 50.0, 9.9: 0.1, 10.0: 199.9, 20.0: 50.0, 3000.0: 70.0}
TOY_DEMAND = {3000.0: 1000.0, 22.0: 10.0, 10.0: 50.0, 0.0: 50.0, -10.0: 200.0, -500.0: 20.0}


def constant_panel(supply: dict, demand: dict, n_days: int, start=date(2015, 1, 5), grid=DEFAULT_GRID, exo_value=1.0):
    """Panel whose every auction carries the same bids."""
    def row(bids):
        p = sorted(bids)
        return grid.to_ticks(p), np.array([bids[x] for x in p])

    rows_s = [row(supply)] * (n_days * HOURS)
    rows_d = [row(demand)] * (n_days * HOURS)
    days = tuple(start + timedelta(days=i) for i in range(n_days))
    exo = {k: np.full((n_days, HOURS), exo_value) for k in ("generation", "wind", "solar")}
    panel = PanelDataset(days, BidArrays.from_rows(rows_s), BidArrays.from_rows(rows_d), exo, grid)
    price, volume = clearing_series(panel)
    return panel.with_exogenous(price=price, volume=volume)


@pytest.fixture(scope="session")
def small_synth():
    """110-day synthetic panel with 3 + 3 classes; fast to fit with short windows."""
    return generate_synthetic(SyntheticConfig(n_days=110, n_supply_classes=3, n_demand_classes=3), seed=11)


@pytest.fixture(scope="session")
def toy_panel():
    return constant_panel(TOY_SUPPLY_A, TOY_DEMAND, 80)


ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str):
    """Store one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE[criterion] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
