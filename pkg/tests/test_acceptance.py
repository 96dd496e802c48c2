"""Acceptance criteria, one test per criterion; verdicts are printed in the terminal summary."""
import time
from datetime import date, timedelta

import numpy as np
import pytest
from numpy.testing import assert_allclose

from xmodel.benchmarks.ar import fit_ar
from xmodel.benchmarks.regime import fit_switching
from xmodel.classes import build_partition, class_volumes, mean_curve, mean_surfaces, write_partition_csv, ClassPartition
from xmodel.curves import VolumeSurface, clear
from xmodel.evaluation import (
    PersistentForecaster, XModelForecaster, rolling_study, score_table, study_days, write_score_table,
)
from xmodel.grid import DEFAULT_GRID, Side
from xmodel.lasso import lambda_grid, lambda_max, lasso_path, ols, standardize
from xmodel.model import FitSettings, bootstrap_forecast, point_forecast
from xmodel.panel import HOURS, BidArrays, PanelDataset
from xmodel.pipeline import XModelConfig, fit_window
from xmodel.reconstruction import ActivityProfile, SideLayout, redistribute
from xmodel.synthetic import SyntheticConfig, generate_synthetic

from conftest import TOY_DEMAND, TOY_SUPPLY_A, TOY_SUPPLY_B, record
from test_benchmarks import ar_series, switching_data
from test_lasso import kkt_gap

G = DEFAULT_GRID


def test_criterion_1_toy_example():
    s_a = VolumeSurface.from_bids(Side.SUPPLY, TOY_SUPPLY_A)
    s_b = VolumeSurface.from_bids(Side.SUPPLY, TOY_SUPPLY_B)
    d = VolumeSurface.from_bids(Side.DEMAND, TOY_DEMAND)
    a, b = clear(s_a, d), clear(s_b, d)
    reps = 2000
    t0 = time.perf_counter()
    for _ in range(reps):
        clear(s_a, d)
    per_call = (time.perf_counter() - t0) / reps
    ok = (a.price, round(a.volume, 1), b.price, round(b.volume, 1)) == (1.60, 1102.0, 7.98, 1070.1)
    ok = ok and round(b.price - a.price, 2) == 6.38 and per_call < 1e-3
    record(1, ok, f"A {a.price:.2f}/{a.volume:.1f}, B {b.price:.2f}/{b.volume:.1f}, "
                  f"diff {b.price - a.price:.2f}, {per_call * 1e6:.0f} us per clearing")
    assert ok


def test_criterion_2_lasso_oracle():
    rng = np.random.default_rng(2)
    n, p = 500, 50
    X = rng.normal(size=(n, p))
    y = X @ rng.normal(size=p) + rng.normal(size=n)
    t0 = time.perf_counter()
    lams = np.append(lambda_grid(lambda_max(X, y), 100), 0.0)
    path = lasso_path(X, y, lams, tol=1e-12)
    elapsed = time.perf_counter() - t0
    end_err = np.abs(path.coefs[path.n_computed - 1] - ols(X, y)).max()
    scale = np.abs(2 * X.T @ y).max()
    kkt = max(kkt_gap(X, y, path.coefs[i], lams[i]) for i in range(path.n_computed)) / scale
    ok = path.n_computed == lams.size and end_err < 1e-6 and kkt < 1e-6 and elapsed < 5
    record(2, ok, f"endpoint error {end_err:.1e}, max relative KKT gap {kkt:.1e}, {elapsed:.2f} s")
    assert ok


def test_criterion_3_support_recovery():
    t0 = time.perf_counter()
    hits = 0
    settings = FitSettings()
    for rep in range(100):
        rng = np.random.default_rng(1000 + rep)
        X = rng.normal(size=(500, 50))
        support = np.sort(rng.choice(50, 3, replace=False))
        beta = np.zeros(50)
        beta[support] = rng.uniform(0.5, 2.0, 3) * rng.choice([-1, 1], 3)
        y = X @ beta + 0.1 * rng.normal(size=500)
        s = standardize(X, y)
        lams = lambda_grid(lambda_max(s.X, s.y), settings.lambda_grid_size, settings.lambda_min_ratio)
        path = lasso_path(s.X, s.y, lams, patience=settings.patience, store_path=False)
        hits += np.array_equal(s.keep[np.flatnonzero(path.best_coef)], support)
    elapsed = time.perf_counter() - t0
    ok = hits >= 95 and elapsed < 60
    record(3, ok, f"exact support in {hits}/100 runs (target >= 95), {elapsed:.1f} s")
    assert ok


def random_panel(n_days, seed):
    rng = np.random.default_rng(seed)

    def rows(side):
        out = []
        for _ in range(n_days * HOURS):
            k = rng.integers(5, 200)
            ticks = np.sort(rng.choice(G.n_points, k, replace=False))
            out.append((ticks, rng.exponential(20.0, k)))
        return BidArrays.from_rows(out)

    days = tuple(date(2016, 1, 4) + timedelta(days=i) for i in range(n_days))
    return PanelDataset(days, rows("S"), rows("D"))


def test_criterion_4_conservation():
    t0 = time.perf_counter()
    panel = random_panel(42, 4)  # 1008 auctions
    rng = np.random.default_rng(5)
    worst_sum = worst_rec = 0.0
    for side, mean in zip((Side.SUPPLY, Side.DEMAND), mean_surfaces(panel)):
        curve = mean_curve(mean)
        part = build_partition(curve, curve.total_volume / 12)
        x = class_volumes(panel, part).reshape(part.n_classes, -1)
        total = panel.total_volume(side).ravel()
        worst_sum = max(worst_sum, np.abs(x.sum(axis=0) - total).max() / total.max())
        prof = ActivityProfile(side, mean.ticks, rng.uniform(0.05, 1.0, (HOURS, mean.ticks.size)))
        layout = SideLayout.build(part, mean, prof)
        for a in range(x.shape[1]):
            active = rng.random(layout.ticks.size) < layout.pi[a % HOURS]
            t, v = redistribute(layout, active, x[:, a])
            back = np.bincount(part.class_of(t), weights=v, minlength=part.n_classes)
            rel = np.abs(back - x[:, a]) / np.maximum(np.abs(x[:, a]), 1e-300)
            worst_rec = max(worst_rec, float(np.where(x[:, a] > 0, rel, back).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_sum < 1e-12 and worst_rec < 1e-9 and elapsed < 10
    record(4, ok, f"1008 auctions per side, class-sum error {worst_sum:.1e}, "
                  f"reconstruction error {worst_rec:.1e}, {elapsed:.1f} s")
    assert ok


@pytest.mark.slow
def test_criterion_5_full_pipeline_calibration():
    t0 = time.perf_counter()
    panel = generate_synthetic(SyntheticConfig(n_days=830, n_supply_classes=4, n_demand_classes=4), seed=2024)
    cfg = XModelConfig(window_days=730, B=1000, seed=7)
    days = study_days(panel, 730, 830)
    res = rolling_study(panel, [XModelForecaster(cfg), PersistentForecaster(730)], days)
    elapsed = time.perf_counter() - t0
    cov = res.central_coverage("xmodel", 0.9)
    ratio = res.scores["xmodel"].mae / res.scores["persistent"].mae
    n_missing = len(res.missing["xmodel"])
    ok = 0.85 <= cov <= 0.95 and ratio < 0.9 and elapsed < 1800 and n_missing == 0
    record(5, ok, f"{days.size} test days, 90% coverage {cov:.3f}, MAE ratio {ratio:.3f} "
                  f"(xmodel {res.scores['xmodel'].mae:.2f}, persistent {res.scores['persistent'].mae:.2f}), "
                  f"{n_missing} missing days, {elapsed / 60:.1f} min")
    assert ok


def test_criterion_6_bootstrap_coherence():
    panel = generate_synthetic(SyntheticConfig(n_days=300, n_supply_classes=4, n_demand_classes=4), seed=6)
    cfg = XModelConfig(window_days=290)
    wf = fit_window(panel, 299, cfg, threads=2)
    fm = wf.models
    point = point_forecast(fm, wf.centered, wf.target_weekday)
    B = 10_000
    s = bootstrap_forecast(fm, point, B, np.random.default_rng(0))
    resid = fm.residuals - fm.residuals.mean(axis=0, keepdims=True)
    block_err = np.abs((s.draws - point[None]) - resid[s.day_index].transpose(0, 2, 1)).max()
    sd = resid.std(axis=0).T
    z = np.abs(s.draws.mean(axis=0) - point) / np.where(sd > 0, sd / np.sqrt(B), np.inf)
    ok = block_err < 1e-9 and z.max() <= 3.0
    record(6, ok, f"{B} draws, day-block error {block_err:.1e}, max |mean - point| = {z.max():.2f} sigma/sqrt(B) "
                  f"over {z.size} class-hours")
    assert ok


def test_criterion_7_benchmark_sanity():
    monotone = all(np.all(np.diff(fit_switching(*switching_data(seed=s)[:2]).history) >= -1e-10) for s in range(50))
    y, X, st = switching_data(seed=11)
    fit = fit_switching(y, X)
    acc = float(np.mean((fit.smoothed[:, 1] > 0.5) == (st == 1)))
    ar = fit_ar(ar_series([0.6, -0.2], 5000, 3), 30)
    err = float(np.abs(ar.phi[:2] - [0.6, -0.2]).max())
    ok = monotone and acc > 0.9 and err < 0.05
    record(7, ok, f"EM monotone on 50 runs: {monotone}, regime accuracy {acc:.3f}, AR(2) max error {err:.3f}")
    assert ok


def test_criterion_8_export_formats(tmp_path):
    t = score_table({"persistent": np.full((2, 24), 8.0), "xmodel": np.full((2, 24), 4.0)})
    write_score_table(tmp_path / "scores.csv", t)
    scores = (tmp_path / "scores.csv").read_text()
    s = ClassPartition(Side.SUPPLY, G.to_ticks([-500.0, -103.9, 1.3, 3000.0]), 1000.0)
    d = ClassPartition(Side.DEMAND, G.to_ticks([3000.0, 52.6, -500.0]), 1000.0)
    write_partition_csv(tmp_path / "partition.csv", s, d)
    part = (tmp_path / "partition.csv").read_text()
    ok = scores == (
        "model,mae,mae_sd,mae_pct,rmse,rmse_sd,rmse_pct,n_obs\n"
        "persistent,8.0000,0.0000,100.0,8.0000,0.0000,100.0,48\n"
        "xmodel,4.0000,0.0000,50.0,4.0000,0.0000,50.0,48\n"
    ) and part == (
        "side,index,bound\nS,0,-500.0\nS,1,-103.9\nS,2,1.3\nS,3,3000.0\nD,0,3000.0\nD,1,52.6\nD,2,-500.0\n"
    )
    record(8, ok, "score-table and class-bound CSV exports match their golden text")
    assert ok
