import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predcoreset.forecasting import (
    ARForecaster,
    GaussianOracleForecaster,
    PersistenceForecaster,
    make_forecaster,
    nrmse,
)


def test_persistence_repeats_last():
    f = PersistenceForecaster(3, 2)
    with pytest.raises(RuntimeError):
        f.predict_window()
    for x in [(0, 0), (5, 5), (1, 2)]:
        f.observe(x)
    np.testing.assert_array_equal(f.predict_window(), [[1, 2]] * 3)


def test_persistence_constant_stream_has_zero_error():
    f = PersistenceForecaster(2, 1)
    for _ in range(20):
        f.observe([4.2])
    assert f.mse_estimate()[0] == 0.0


def test_persistence_ramp_error_is_slope():
    f = PersistenceForecaster(1, 2)
    for t in range(200):
        f.observe([0.5 * t, -2.0 * t])
    np.testing.assert_allclose(np.abs(f.last_error), [0.5, 2.0], rtol=1e-12)
    np.testing.assert_allclose(f.mse_estimate(), [0.25, 4.0], rtol=1e-12)


def test_ar1_recovers_coefficient():
    f = ARForecaster(1, 4, 1)
    x = 1.0
    for _ in range(60):
        f.observe([x])
        x *= 0.9
    coef = f.fit()
    assert coef[0, 0] == pytest.approx(0.9, abs=1e-6)
    last = f.history[-1][0]
    np.testing.assert_allclose(f.predict_window()[:, 0], last * 0.9 ** np.arange(1, 5), rtol=1e-5)


def test_ar_constant_series():
    f = ARForecaster(2, 3, 2)
    for _ in range(40):
        f.observe([3.0, -1.0])
    np.testing.assert_allclose(f.predict_window(), [[3.0, -1.0]] * 3, atol=1e-6)


def test_ar_white_noise_variance():
    rng = np.random.default_rng(0)
    f = ARForecaster(2, 1, 1)
    s = rng.normal(0, 1.7, size=1500)
    for v in s:
        f.observe([v])
    assert f.mse_estimate()[0] == pytest.approx(s.var(), rel=0.2)


def test_ar_needs_history():
    f = ARForecaster(3, 2, 1)
    for v in range(32):
        f.observe([float(v)])
    with pytest.raises(RuntimeError):
        f.predict_window()
    f.observe([32.0])
    f.predict_window()


def test_ar_beats_persistence_on_ar_data():
    rng = np.random.default_rng(1)
    x, series = 0.0, []
    for _ in range(800):
        x = -0.6 * x + rng.normal()
        series.append(x)
    ar = ARForecaster(1, 1, 1)
    for v in series:
        ar.observe([v])
    ar.fit()
    s = np.array(series)
    persistence_mse = float(np.mean((s[1:] - s[:-1]) ** 2))
    assert ar.mse_estimate()[0] <= persistence_mse


def test_oracle_zero_noise_is_exact():
    truth = np.arange(20.0).reshape(10, 2)
    f = GaussianOracleForecaster(truth, 3, 0.0)
    f.observe()
    np.testing.assert_array_equal(f.predict_window(), truth[1:4])


def test_oracle_repeat_calls_agree_and_seed_replays():
    truth = np.zeros((50, 2))
    a = GaussianOracleForecaster(truth, 5, 0.3, seed=4)
    b = GaussianOracleForecaster(truth, 5, 0.3, seed=4)
    np.testing.assert_array_equal(a.predict_window(), a.predict_window())
    np.testing.assert_array_equal(a.predict_window(), b.predict_window())
    a.skip(5)
    with pytest.raises(RuntimeError):
        GaussianOracleForecaster(truth[:3], 5, 0.3).predict_window()


def test_oracle_error_statistics():
    sigma2 = 0.37
    truth = np.zeros((100_001, 2))
    f = GaussianOracleForecaster(truth, 1, sigma2, seed=123)
    errs = np.empty((100_000, 2))
    for t in range(100_000):
        errs[t] = truth[t] - f.predict_window()[0]
        f.observe()
    var = errs.var(axis=0)
    assert np.all(np.abs(var - sigma2) <= 0.05 * sigma2)
    se = np.sqrt(sigma2 / len(errs))
    assert np.all(np.abs(errs.mean(axis=0)) <= 3 * se)
    for k in range(2):
        e = errs[:, k] - errs[:, k].mean()
        rho = float(e[1:] @ e[:-1] / (e @ e))
        assert abs(rho) < 0.02
    # independent normality check
    from scipy import stats

    assert stats.kstest(errs[:, 0] / np.sqrt(sigma2), "norm").pvalue > 1e-3


def test_nrmse_examples():
    assert nrmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert nrmse([2, 3, 4], [1, 2, 3]) == 0.5
    with pytest.raises(ValueError):
        nrmse([1, -1], [1, -1])
    with pytest.raises(ValueError):
        nrmse([1, 2], [1, 2, 3])


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["persistence", "ar", "oracle"]), st.integers(1, 6), st.integers(1, 4),
       st.integers(0, 2**32 - 1))
def test_forecasters_return_finite_windows(kind, n, d, seed):
    rng = np.random.default_rng(seed)
    truth = np.cumsum(rng.normal(size=(120, d)), axis=0)
    f = make_forecaster(kind, n, d, truth=truth, sigma2=0.1, seed=seed, order=2)
    for t in range(60):
        f.observe(truth[t])
    w = f.predict_window()
    assert w.shape == (n, d) and np.all(np.isfinite(w))
    m = f.mse_estimate()
    assert m.shape == (d,) and np.all(m >= 0)


def test_make_forecaster_errors():
    with pytest.raises(ValueError):
        make_forecaster("lstm", 2, 2)
    with pytest.raises(ValueError):
        make_forecaster("oracle", 2, 2)
