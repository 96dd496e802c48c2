import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.linalg import toeplitz
from scipy.stats import norm

from xmodel.benchmarks import ar_hourly, ar_univariate, persistent, regime_switching
from xmodel.benchmarks.ar import autocovariance, fit_ar, levinson_durbin
from xmodel.benchmarks.base import BenchmarkForecast
from xmodel.benchmarks.regime import NIGHT_HOURS, fit_switching, regressors, single_regime
from xmodel.errors import DegenerateRegimeError, InsufficientHistoryError, NumericalError


def ar_series(phi, n, seed=0, burn=500):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n + burn)
    x = np.zeros(n + burn)
    for t in range(len(phi), n + burn):
        x[t] = np.dot(phi, x[t - len(phi):t][::-1]) + e[t]
    return x[burn:]


# -- persistent ---------------------------------------------------------------

def test_persistent_constant():
    fc = persistent(np.full((30, 24), 55.0), 30)
    assert_allclose(fc.point, 55.0)
    assert_allclose(fc.sds, 0.0)


def test_persistent_week_ago_value():
    p = np.random.default_rng(0).normal(50, 5, (20, 24))
    p[13, 6] = 42.0
    fc = persistent(p, 20)
    assert fc.point[6] == 42.0
    diff = p[7:20] - p[:13]
    assert_allclose(fc.sds[:, 0], np.sqrt((diff**2).mean(axis=0)))


def test_persistent_weekly_sawtooth_is_exact():
    d = np.arange(60)
    p = (d % 7)[:, None] * 10.0 + np.arange(24)[None, :]
    for t in range(7, 60):
        assert_allclose(persistent(p, t).point, p[t])


def test_persistent_needs_a_week():
    with pytest.raises(InsufficientHistoryError):
        persistent(np.zeros((6, 24)), 6)


# -- autoregressions ---------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 12))
def test_yule_walker_equations_hold(seed, order):
    x = ar_series([0.5, -0.3], 800, seed)
    g = autocovariance(x - x.mean(), order)
    phis, sigma2 = levinson_durbin(g, order)
    phi = phis[-1]
    assert_allclose(toeplitz(g[:order]) @ phi, g[1:order + 1], atol=1e-8 * g[0])
    assert sigma2[order] == pytest.approx(g[0] - phi @ g[1:order + 1], rel=1e-10)


def test_autocovariance_direct():
    x = np.random.default_rng(1).normal(size=300)
    g = autocovariance(x, 5)
    direct = [np.dot(x[: 300 - k], x[k:]) / 300 for k in range(6)]
    assert_allclose(g, direct, atol=1e-12)


def test_levinson_rejects_invalid_autocovariance():
    with pytest.raises(NumericalError):
        levinson_durbin(np.array([1.0, 1.5, 0.2]), 2)
    with pytest.raises(NumericalError):
        levinson_durbin(np.array([0.0, 0.0]), 1)


def test_white_noise_order_is_small():
    x = np.random.default_rng(2).normal(size=5000)
    assert fit_ar(x, 50).order <= 3


def test_planted_ar2_recovered():
    fit = fit_ar(ar_series([0.6, -0.2], 5000, 3), 30)
    assert fit.order >= 2
    assert_allclose(fit.phi[:2], [0.6, -0.2], atol=0.05)
    assert np.abs(fit.phi[2:]).max(initial=0.0) < 0.05


def test_aic_grid_starts_at_one():
    fit = fit_ar(ar_series([0.3], 500, 4), 10)
    assert fit.aic.size == 10 and fit.order >= 1


def test_short_series_rejected():
    with pytest.raises(InsufficientHistoryError):
        fit_ar(np.arange(10.0), 10)


def test_forecast_mean_and_variance():
    fit = fit_ar(ar_series([0.5], 3000, 5), 5)
    phi = fit.phi
    mean, sd = fit.forecast(np.array([fit.mean + 4.0] * 10), 3)
    if fit.order == 1:
        assert_allclose(mean - fit.mean, 4.0 * phi[0] ** np.arange(1, 4))
        assert_allclose(sd**2, fit.sigma2 * np.cumsum(phi[0] ** (2 * np.arange(3))))
    assert np.all(np.diff(sd) >= 0)


def test_ar_univariate_horizon():
    p = ar_series([0.9], 24 * 100, 6).reshape(100, 24) + 40.0
    fc = ar_univariate(p, 100, max_order=48)
    assert fc.point.shape == (24,) and np.all(np.diff(fc.sds[:, 0]) >= -1e-12)


def test_ar_hourly_constant_and_planted():
    assert_allclose(ar_hourly(np.full((60, 24), 30.0), 60).point, 30.0)
    p = np.column_stack([ar_series([0.8], 730, 100 + h) for h in range(24)])
    phis = [fit_ar(p[:, h], 50).phi[0] for h in range(24)]
    assert 0.75 <= np.median(phis) <= 0.85
    fit = fit_ar(p[:, 0], 50)
    assert 0.75 <= fit.phi[0] <= 0.85


# -- regime switching ---------------------------------------------------------------

def switching_data(n=600, seed=0, sig=(1.0, 10.0)):
    rng = np.random.default_rng(seed)
    P = np.array([[0.95, 0.05], [0.1, 0.9]])
    s = np.zeros(n, int)
    for t in range(1, n):
        s[t] = rng.random() < P[s[t - 1], 1]
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    beta = np.array([[1.0, 2.0], [3.0, -1.0]])
    y = (X * beta[s]).sum(axis=1) + rng.normal(size=n) * np.array(sig)[s]
    return y, X, s


def test_em_loglik_monotone_and_rows_stochastic():
    for seed in range(5):
        y, X, _ = switching_data(seed=seed)
        fit = fit_switching(y, X)
        assert np.all(np.diff(fit.history) >= -1e-10)
        assert_allclose(fit.P.sum(axis=1), 1.0)
        assert np.all(fit.P >= 0)
        assert_allclose(fit.smoothed.sum(axis=1), 1.0)


def test_regime_classification_accuracy():
    y, X, s = switching_data(seed=11)
    fit = fit_switching(y, X)
    acc = np.mean((fit.smoothed[:, 1] > 0.5) == (s == 1))
    assert acc > 0.9
    assert fit.sigma[1] / fit.sigma[0] == pytest.approx(10, rel=0.3)


def test_single_regime_data_gives_gaussian_forecast():
    rng = np.random.default_rng(3)
    n = 500
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = X @ np.array([2.0, 1.5]) + rng.normal(size=n)
    try:
        fit = fit_switching(y, X)
    except DegenerateRegimeError:
        fit = single_regime(y, X)
    x_next = np.array([1.0, 0.5])
    w, m, s = fit.predictive(x_next)
    mix = BenchmarkForecast("regime", np.array([w @ m]), w[None], m[None], s[None])
    q = mix.quantiles([0.05, 0.5, 0.95])[0]
    ref = norm.ppf([0.05, 0.5, 0.95], loc=2.0 + 0.75, scale=1.0)
    assert_allclose(q, ref, atol=0.25)


def test_regressor_row_and_night_hours():
    price = np.arange(10 * 24, dtype=float).reshape(10, 24)
    exo = {k: np.full((11, 24), v) for k, v in (("generation", 1.0), ("wind", 2.0), ("solar", 3.0))}
    row = regressors(price, exo, 8, 12)
    assert_allclose(row, [1.0, price[7, 12], price[1, 12], price[7].mean(), 1.0, 2.0, 3.0])
    for h in NIGHT_HOURS:
        assert regressors(price, exo, 8, h).size == 6


def panel_arrays(n=120, seed=0):
    rng = np.random.default_rng(seed)
    price = 40 + np.cumsum(rng.normal(size=(n, 24)), axis=0) * 0.3 + rng.normal(size=(n, 24))
    exo = {k: rng.normal(size=(n, 24)) for k in ("generation", "wind", "solar")}
    return price, exo


def perturb_after(price, exo, target):
    p2 = price.copy()
    p2[target:] += 1000.0
    e2 = {k: v.copy() for k, v in exo.items()}
    for v in e2.values():
        v[target + 1:] -= 500.0
    return p2, e2


def test_lag_audit_all_benchmarks():
    price, exo = panel_arrays()
    t = 100
    p2, e2 = perturb_after(price, exo, t)
    for run in (
        lambda p, e: persistent(p, t),
        lambda p, e: ar_univariate(p, t, max_order=30),
        lambda p, e: ar_hourly(p, t, max_order=10),
        lambda p, e: regime_switching(p, e, t, seed=1),
    ):
        a, b = run(price, exo), run(p2, e2)
        assert_allclose(a.point, b.point)
        assert_allclose(a.sds, b.sds)


def test_regime_forecast_uses_target_day_plan():
    price, exo = panel_arrays()
    a = regime_switching(price, exo, 100, seed=1)
    e2 = {k: v.copy() for k, v in exo.items()}
    e2["wind"][100] += 5.0
    b = regime_switching(price, e2, 100, seed=1)
    assert not np.allclose(a.point, b.point)
    assert_allclose(a.weights.sum(axis=1), 1.0)


def test_mixture_quantiles_invert_cdf():
    fc = BenchmarkForecast("m", np.zeros(24), np.tile([0.3, 0.7], (24, 1)),
                           np.tile([-2.0, 5.0], (24, 1)), np.tile([1.0, 3.0], (24, 1)))
    q = fc.quantiles([0.1, 0.5, 0.9])
    for i, lv in enumerate([0.1, 0.5, 0.9]):
        assert_allclose(fc.cdf(q[:, i]), lv, atol=1e-9)
    with pytest.raises(ValueError):
        BenchmarkForecast("m", np.zeros(24), np.full((24, 2), 0.6), np.zeros((24, 2)), np.ones((24, 2)))


def test_single_regime_fallback_in_benchmark():
    rng = np.random.default_rng(8)
    n = 150
    price = 50 + rng.normal(size=(n, 24))
    exo = {k: rng.normal(size=(n, 24)) for k in ("generation", "wind", "solar")}
    fc = regime_switching(price, exo, 140, seed=0)
    assert np.isfinite(fc.point).all()
    assert_allclose(fc.weights.sum(axis=1), 1.0)
    with pytest.raises(DegenerateRegimeError):
        X = np.column_stack([np.ones(300), rng.normal(size=300)])
        fit_switching(X @ [1.0, 2.0], X, max_restarts=2)  # exact fit: zero variance in both regimes
