import numpy as np
import pytest

from pcreg.hetero import (
    IRLSDivergence, VarianceModel, fit_hetero, gamma_deviance, gamma_regression_log_link, neg_log_likelihood,
)
from pcreg.regress import design_matrix, fit_lr

from synth import HETERO_GAMMA, hetero_data


def _gamma_sample(seed, n=400, shape=3.0):
    rng = np.random.default_rng(seed)
    X = design_matrix(rng.standard_normal((n, 2)))
    beta = np.array([0.5, 0.8, -0.4])
    mu = np.exp(X @ beta)
    return rng.gamma(shape, mu / shape), X


def test_gamma_glm_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    y, X = _gamma_sample(1)
    ours = gamma_regression_log_link(y, X)
    ref = sm.GLM(y, X, family=sm.families.Gamma(sm.families.links.Log())).fit()
    assert np.allclose(ours.coef, ref.params, rtol=1e-8, atol=1e-10)
    assert np.allclose(ours.stderr, ref.bse, rtol=1e-6)
    assert np.isclose(ours.dispersion, ref.scale, rtol=1e-8)
    assert np.isclose(ours.deviance_trace[-1], ref.deviance, rtol=1e-8)


def test_gamma_glm_deviance_monotone_and_recovers():
    y, X = _gamma_sample(2, n=5000)
    vm = gamma_regression_log_link(y, X)
    assert vm.converged
    assert np.all(np.diff(vm.deviance_trace) <= 1e-12 * vm.deviance_trace[0])
    assert np.all(np.abs(vm.coef - [0.5, 0.8, -0.4]) < 4 * vm.stderr)


def test_gamma_glm_input_errors():
    X = design_matrix(np.arange(5.0)[:, None])
    with pytest.raises(ValueError):
        gamma_regression_log_link(np.array([1.0, 2.0, 0.0, 1.0, 1.0]), X)
    with pytest.raises(ValueError):
        gamma_regression_log_link(np.ones(4), X)
    with pytest.raises(IRLSDivergence):
        gamma_regression_log_link(np.exp(np.arange(5.0)) + 0.1, X, max_iter=1)


def test_gamma_deviance_zero_at_mean():
    y = np.array([1.0, 2.0, 3.0])
    assert gamma_deviance(y, y) == 0.0
    assert gamma_deviance(y, y * 1.1) > 0


def test_neg_log_likelihood():
    r = np.ones((2, 2, 3))
    assert np.isclose(neg_log_likelihood(r, np.ones(3)), 0.5 * 12)
    assert np.isclose(neg_log_likelihood(r, np.full(3, 2.0)), 0.5 * (12 * np.log(2) + 6))


def test_variance_model_roundtrip():
    vm = VarianceModel(np.array([-1.0, 0.2, 0.3]), np.array([0.1, 0.1, 0.1]), 0.5)
    back = VarianceModel.from_dict(vm.to_dict())
    assert np.array_equal(back.coef, vm.coef) and back.dispersion == 0.5
    assert np.allclose(vm.variance(np.array([[1.0, 0.0, 0.0]])), np.exp(-1.0))


def test_fit_hetero_recovers_table_magnitudes():
    Y, X = hetero_data(0)
    fit, vm = fit_hetero(Y, X)
    assert vm.converged
    assert np.all(np.abs(vm.coef - HETERO_GAMMA) < 3 * vm.stderr)
    nll = fit.diagnostics["nll_trace"]
    assert np.all(np.diff(nll) <= 1e-8 * np.abs(nll[:-1]))
    assert fit.offset.shape == Y.shape[:2]


def test_fit_hetero_homoscedastic_gamma_zero():
    Y, X = hetero_data(1, homoscedastic=True)
    _, vm = fit_hetero(Y, X)
    assert np.all(np.abs(vm.gamma) < 3 * vm.stderr[1:])


def test_fit_hetero_custom_estimator():
    from pcreg.regress import FitResult

    Y, X = hetero_data(2, n=200)
    _, a = fit_hetero(Y, X)
    _, b = fit_hetero(Y, X, estimator=lambda y, x: FitResult("lr", fit_lr(y, x)))
    assert np.allclose(a.coef, b.coef)
