import numpy as np
import pytest
from scipy.optimize import check_grad

from fairdecide.logistic import LogisticModel, fit_logistic, loss_and_grad


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    y = (rng.random(200) < 0.4).astype(float)
    for l2 in (0.0, 0.3):
        err = check_grad(lambda t: loss_and_grad(t, X, y, l2)[0],
                         lambda t: loss_and_grad(t, X, y, l2)[1], rng.normal(size=4))
        assert err < 1e-6


def test_recovers_generating_parameters():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40_000, 2))
    z = X @ np.array([1.5, -0.7]) + 0.3
    y = (rng.random(40_000) < 1 / (1 + np.exp(-z))).astype(int)
    m = fit_logistic(X, y)
    np.testing.assert_allclose(m.w, [1.5, -0.7], atol=0.05)
    assert m.b == pytest.approx(0.3, abs=0.05)


def test_no_signal_gives_base_rate():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(20_000, 1))
    y = (rng.random(20_000) < 0.3).astype(int)
    m = fit_logistic(X, y)
    assert abs(m.w[0]) < 0.05
    assert m.predict_proba([[0.0]])[0] == pytest.approx(0.3, abs=0.01)


def test_separable_data_stays_finite():
    X = np.r_[np.linspace(-2, -0.1, 50), np.linspace(0.1, 2, 50)]
    y = (X > 0).astype(int)
    m = fit_logistic(X, y)
    assert np.all(np.isfinite(m.params()))
    assert np.all((m.predict_proba(X) > 0.5) == y)


def test_single_class_is_constant():
    m = fit_logistic(np.arange(5.0), np.ones(5))
    assert m.degenerate
    assert list(m.predict_proba(np.arange(3.0))) == [1.0, 1.0, 1.0]


def test_warm_start_reaches_same_optimum():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(500, 2))
    y = (rng.random(500) < 0.5).astype(int)
    cold = fit_logistic(X, y)
    warm = fit_logistic(X, y, init=LogisticModel(np.array([5.0, -5.0]), 2.0))
    np.testing.assert_allclose(cold.params(), warm.params(), atol=1e-4)


def test_misaligned_input():
    with pytest.raises(ValueError):
        fit_logistic(np.zeros((3, 1)), np.zeros(2))
