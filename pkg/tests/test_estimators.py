import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from biutamp import BiUTAMPEstimator, UTAMPRegressor
from biutamp.estimators import make_prior
from biutamp.exceptions import DimensionError, DomainError
from biutamp.metrics import nmse
from biutamp.problems import Correlated, add_noise, gen_cs_mu, gen_matrix


def _sparse_problem(seed=0):
    rng = np.random.default_rng(seed)
    X = gen_matrix(Correlated(0.5), 120, 200, rng)
    w = rng.standard_normal(200) * (rng.random(200) < 0.1)
    y, _ = add_noise(X @ w, 40, rng)
    return X, y, w


def test_regressor_recovers_sparse_weights():
    X, y, w = _sparse_problem()
    est = UTAMPRegressor(sparsity=0.1).fit(X, y)
    assert nmse(est.coef_, w) < 1e-2
    assert est.n_features_in_ == 200 and est.n_iter_ >= 1 and est.noise_precision_ > 0
    assert est.predict(X).shape == (120,)
    assert est.score(X, y) > 0.99


@pytest.mark.parametrize("solver", ["utamp_v1", "utamp_v2"])
def test_regressor_solvers(solver):
    X, y, w = _sparse_problem(1)
    est = UTAMPRegressor(solver=solver, sparsity=0.1).fit(X, y)
    assert nmse(est.coef_, w) < 1e-2


def test_plain_amp_needs_known_noise():
    X, y, _ = _sparse_problem(2)
    with pytest.raises(DomainError):
        UTAMPRegressor(solver="amp").fit(X, y)


def test_regressor_params_round_trip():
    est = UTAMPRegressor(prior="gaussian", max_iter=7)
    c = clone(est)
    assert c.get_params() == est.get_params()
    assert c.set_params(tol=1e-3).tol == 1e-3


def test_regressor_validation():
    X, y, _ = _sparse_problem(3)
    with pytest.raises(NotFittedError):
        UTAMPRegressor().predict(X)
    with pytest.raises(ValueError):
        UTAMPRegressor().fit(np.full((3, 2), np.nan), np.ones(3))
    with pytest.raises(DimensionError):
        UTAMPRegressor().fit(X, y[:-1])
    with pytest.raises(DomainError):
        UTAMPRegressor(max_iter=0).fit(X, y)
    with pytest.raises(DomainError):
        UTAMPRegressor(solver="nope").fit(X, y)
    est = UTAMPRegressor(max_iter=5).fit(X, y)
    with pytest.raises(DomainError):
        est.predict(X[:, :10])


def test_make_prior():
    assert make_prior("bernoulli_gaussian", 0.2).rate == 0.2
    with pytest.raises(DomainError):
        make_prior("laplace")


def test_bilinear_estimator_fit_predict():
    inst = gen_cs_mu(4, 80, 60, 4, 40, Correlated(0.3), seed=1)
    est = BiUTAMPEstimator(sparsity=4 / 80, pin_first=True, damping=0.8, n_restarts=6, b_warmup=(0, 3, 3),
                           tol=1e-8, random_state=0)
    est.fit(inst.blocks, inst.y)
    assert est.b_[0] == 1.0
    assert nmse(est.C_, inst.c) < 1e-2
    assert 0 <= est.restart_ < 6
    np.testing.assert_allclose(est.predict(), est.dictionary_ @ est.C_)
    np.testing.assert_allclose(est.predict(np.asarray(inst.blocks)), est.predict())
    with pytest.raises(DomainError):
        est.predict(np.asarray(inst.blocks)[:2])


def test_bilinear_estimator_deterministic_and_clonable():
    inst = gen_cs_mu(3, 40, 30, 3, 30, seed=2)
    est = BiUTAMPEstimator(pin_first=True, n_restarts=2, random_state=5, max_iter=30)
    a = est.fit(inst.blocks, inst.y).C_.copy()
    b = clone(est).fit(inst.blocks, inst.y).C_
    np.testing.assert_array_equal(a, b)


def test_bilinear_estimator_validation():
    with pytest.raises(NotFittedError):
        BiUTAMPEstimator().predict()
    with pytest.raises(DimensionError):
        BiUTAMPEstimator().fit([np.ones((3, 2)), np.ones((2, 2))], np.ones(3))
    with pytest.raises(DimensionError):
        BiUTAMPEstimator().fit([np.ones((3, 2))], np.ones(4))
    with pytest.raises(DomainError):
        BiUTAMPEstimator(damping=0.0).fit([np.eye(2)], np.ones(2))
    with pytest.raises(DomainError):
        BiUTAMPEstimator(n_restarts=1.5).fit([np.eye(2)], np.ones(2))
