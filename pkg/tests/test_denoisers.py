import numpy as np
import pytest
from hypothesis import given, strategies as st

from biutamp import (BernoulliGaussianPrior, GaussianPrior, NonInformativePrior, PinnedPrior, denoise,
                     denoise_derivative, denoiser_mse)
from biutamp.denoisers import expected_mse
from biutamp.exceptions import DomainError


def test_gaussian_closed_form():
    m, v = denoise(GaussianPrior(0, 1), np.array([2.0]), 1.0)
    assert m[0] == 1.0 and v[0] == 0.5


def test_bg_symmetry_at_zero():
    for rate in (0.05, 0.5, 0.9):
        m, _ = denoise(BernoulliGaussianPrior(rate, 0.0, 2.0), np.array([0.0]), 0.3)
        assert m[0] == 0.0


def test_bg_against_frozen_quadrature(frozen):
    ref = frozen["bg_posterior_q1.5_tau0.2_rate0.1"]
    m, v = denoise(BernoulliGaussianPrior(0.1), np.array([1.5]), 0.2)
    assert abs(m[0] - ref["mean"]) < 1e-8
    assert abs(v[0] - ref["variance"]) < 1e-8


def test_derivatives():
    g = denoise_derivative(GaussianPrior(0, 1), np.linspace(-3, 3, 7), 1.0)
    np.testing.assert_allclose(g, 0.5)
    g = denoise_derivative(NonInformativePrior(), np.array([0.3, -2.0]), 0.7)
    np.testing.assert_allclose(g, 1.0)
    p, q, tau, h = BernoulliGaussianPrior(0.1), 1.5, 0.2, 1e-5
    fd = (denoise(p, np.array([q + h]), tau).mean - denoise(p, np.array([q - h]), tau).mean) / (2 * h)
    assert abs(denoise_derivative(p, np.array([q]), tau)[0] - fd[0]) < 1e-4


def test_mse_gaussian_and_noiseless():
    n = 200_000
    est = denoiser_mse(GaussianPrior(0, 1), 1.0, n_samples=n, seed=0)
    # the estimator averages posterior variances, which are constant here
    assert abs(est - 0.5) < 3 * 0.5 / np.sqrt(n) + 1e-12
    for prior in (GaussianPrior(), BernoulliGaussianPrior(0.1)):
        assert denoiser_mse(prior, 1e-8, n_samples=10_000, seed=1) < 1e-6


def test_mse_against_frozen_quadrature(frozen):
    ref = frozen["bg_mse_tau0.135_rate0.1"]
    est = denoiser_mse(BernoulliGaussianPrior(0.1), 0.135, n_samples=1_000_000, seed=0)
    assert abs(est - ref) / ref < 5e-3
    assert abs(expected_mse(BernoulliGaussianPrior(0.1), 0.135) - ref) / ref < 1e-6


def test_mse_deterministic_given_seed():
    p = BernoulliGaussianPrior(0.2)
    assert denoiser_mse(p, 0.1, 5000, seed=3) == denoiser_mse(p, 0.1, 5000, seed=3)


def test_errors():
    with pytest.raises(DomainError):
        denoise(GaussianPrior(), np.ones(2), 0.0)
    with pytest.raises(DomainError):
        BernoulliGaussianPrior(1.5)
    with pytest.raises(DomainError):
        BernoulliGaussianPrior(-0.1)
    with pytest.raises(DomainError):
        GaussianPrior(0.0, 0.0)


def test_pinned_ignores_tau():
    m, v = denoise(PinnedPrior(1.0), np.array([5.0, -3.0]), 123.0)
    np.testing.assert_array_equal(m, 1.0)
    np.testing.assert_array_equal(v, 0.0)


def test_mse_monotone_in_tau():
    p = BernoulliGaussianPrior(0.1)
    taus = np.logspace(-4, 1, 12)
    vals = [denoiser_mse(p, t, 100_000, seed=0) for t in taus]
    assert all(b >= a * 0.98 for a, b in zip(vals, vals[1:]))


finite = st.floats(-50, 50, allow_nan=False)
taus = st.floats(1e-6, 1e3, allow_nan=False)


@given(finite, taus, st.floats(0.0, 1.0), st.floats(-2, 2), st.floats(0.05, 10))
def test_bg_moments_valid(q, tau, rate, mean, var):
    p = BernoulliGaussianPrior(rate, mean, var)
    m, v = denoise(p, np.array([q]), tau)
    assert np.isfinite(m[0]) and np.isfinite(v[0]) and v[0] >= 0
    g = denoise_derivative(p, np.array([q]), tau)
    assert abs(g[0] * tau - v[0]) <= 1e-12 * max(1.0, v[0])


@given(finite, taus, st.floats(-2, 2), st.floats(0.05, 10))
def test_bg_limits(q, tau, mean, var):
    qa = np.array([q])
    full = denoise(BernoulliGaussianPrior(1.0, mean, var), qa, tau)
    gauss = denoise(GaussianPrior(mean, var), qa, tau)
    np.testing.assert_allclose(full.mean, gauss.mean, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(full.variance, gauss.variance, rtol=1e-12, atol=1e-15)
    empty = denoise(BernoulliGaussianPrior(0.0, mean, var), qa, tau)
    assert empty.mean[0] == 0 and empty.variance[0] == 0


@given(finite, taus, st.floats(0.05, 10))
def test_gaussian_variance_below_tau(q, tau, var):
    _, v = denoise(GaussianPrior(0, var), np.array([q]), tau)
    assert v[0] <= tau
