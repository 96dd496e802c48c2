import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from xmodel.classes import build_partition, class_volumes, mean_curve, mean_surfaces
from xmodel.errors import ConfigError
from xmodel.grid import Side
from xmodel.synthetic import SyntheticConfig, generate_synthetic


def test_same_seed_same_panel():
    cfg = SyntheticConfig(n_days=70, n_supply_classes=3, n_demand_classes=3)
    a, b = generate_synthetic(cfg, 5), generate_synthetic(cfg, 5)
    for side in (Side.SUPPLY, Side.DEMAND):
        assert_array_equal(a.bids(side).volumes, b.bids(side).volumes)
        assert_array_equal(a.bids(side).ticks, b.bids(side).ticks)
    assert_array_equal(a.series("price"), b.series("price"))
    c = generate_synthetic(cfg, 6)
    assert not np.array_equal(a.bids(Side.SUPPLY).volumes, c.bids(Side.SUPPLY).volumes)


def test_too_few_days():
    with pytest.raises(ConfigError):
        SyntheticConfig(n_days=59)


def test_zero_noise_follows_planted_level():
    cfg = SyntheticConfig(n_days=70, n_supply_classes=3, n_demand_classes=3, noise=0.0, wind_coupling=0.0)
    p = generate_synthetic(cfg, 1)
    tr = p.truth
    for st in (tr.supply, tr.demand):
        assert_array_equal(st.latent, 0.0)
        eff = np.asarray(cfg.weekday_effect) - np.mean(cfg.weekday_effect)
        wd = eff[p.weekdays() - 1]
        expect = st.mu[:, None, None] * (1 + cfg.daily_amplitude * tr.profile[None, None, :]) + wd[None, :, None]
        assert_allclose(st.volumes, expect, rtol=1e-12)


def test_latent_recursion():
    cfg = SyntheticConfig(n_days=70, n_supply_classes=3, n_demand_classes=3)
    tr = generate_synthetic(cfg, 2).truth
    y = tr.supply.latent
    pred = cfg.a1 * y[:, 6:-1] + cfg.a7 * y[:, :-7] + cfg.b_cross * np.roll(y[:, 6:-1], 1, axis=2)
    innov = y[:, 7:] - pred
    sd = cfg.noise * np.sqrt(tr.supply.mu * cfg.class_volume)
    assert_allclose(innov.std(axis=(1, 2)), sd, rtol=0.15)


def test_sunday_step():
    eff = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 500.0)
    cfg = SyntheticConfig(n_days=700, n_supply_classes=3, n_demand_classes=3, weekday_effect=eff)
    p = generate_synthetic(cfg, 3)
    vol = p.truth.supply.volumes[1]
    wd = p.weekdays()
    diff = vol[wd == 7].mean() - vol[wd == 1].mean()
    assert abs(diff - 500.0) < 60.0


def test_bids_reproduce_planted_class_volumes():
    cfg = SyntheticConfig(n_days=70, n_supply_classes=4, n_demand_classes=4)
    p = generate_synthetic(cfg, 4)
    for side in (Side.SUPPLY, Side.DEMAND):
        st = p.truth.side(side)
        total = p.total_volume(side)
        assert_allclose(total, st.volumes.sum(axis=0), rtol=1e-12)


def test_default_partition_matches_planted_classes():
    p = generate_synthetic(SyntheticConfig(n_days=120), 0)
    ms, md = mean_surfaces(p)
    for side, mean in ((Side.SUPPLY, ms), (Side.DEMAND, md)):
        st = p.truth.side(side)
        part = build_partition(mean_curve(mean), 1000.0)
        assert part.n_classes == st.mu.size
        x = class_volumes(p, part)
        assert_allclose(x, st.volumes, rtol=1e-9)
