"""scikit-learn style wrappers around the UTAMP and Bi-UTAMP solvers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_blocks, check_matrix, check_observations, check_scalar
from .amp import AmpConfig, run_amp, run_utamp_v1, run_utamp_v2, transform_linear
from .bilinear import BiUtampConfig, run_biutamp
from .denoisers import BernoulliGaussianPrior, GaussianPrior, NonInformativePrior
from .exceptions import DomainError
from .model_transform import build_lifted, unitary_transform

__all__ = ["UTAMPRegressor", "BiUTAMPEstimator", "make_prior"]


def make_prior(name, sparsity=0.1, variance=1.0):
    """Build a prior from a short name: ``gaussian``, ``bernoulli_gaussian``
    or ``noninformative``."""
    if name == "gaussian":
        return GaussianPrior(0.0, variance)
    if name == "bernoulli_gaussian":
        return BernoulliGaussianPrior(sparsity, 0.0, variance)
    if name == "noninformative":
        return NonInformativePrior()
    raise DomainError(f"unknown prior {name!r}")


class UTAMPRegressor(RegressorMixin, BaseEstimator):
    """Sparse linear regression ``y = X w + noise`` solved by (UT)AMP.

    Parameters
    ----------
    prior : {"bernoulli_gaussian", "gaussian", "noninformative"}
    sparsity : float
        Non-zero rate of the Bernoulli-Gaussian prior.
    variance : float
        Variance of the (active) Gaussian component.
    noise_precision : float or "estimate"
    solver : {"utamp_v2", "utamp_v1", "amp"}
    max_iter : int
    tol : float

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    coef_var_ : float or ndarray
        Posterior variance of the coefficients.
    noise_precision_ : float
    n_iter_ : int
    """

    def __init__(self, prior="bernoulli_gaussian", sparsity=0.1, variance=1.0,
                 noise_precision="estimate", solver="utamp_v2", max_iter=200, tol=1e-8):
        self.prior = prior
        self.sparsity = sparsity
        self.variance = variance
        self.noise_precision = noise_precision
        self.solver = solver
        self.max_iter = max_iter
        self.tol = tol

    def _config(self):
        check_scalar(self.max_iter, "max_iter", lo=1, integer=True)
        check_scalar(self.tol, "tol", lo=0.0)
        if self.solver not in ("utamp_v2", "utamp_v1", "amp"):
            raise DomainError(f"unknown solver {self.solver!r}")
        return AmpConfig(prior=make_prior(self.prior, self.sparsity, self.variance),
                         beta=self.noise_precision, max_iterations=self.max_iter, tol=self.tol)

    def fit(self, X, y):
        X = check_matrix(X, "X")
        y = check_observations(y, X.shape[0])
        if y.ndim != 1:
            raise DomainError("y must be a vector")
        cfg = self._config()
        if self.solver == "amp":
            res = run_amp(X, y, cfg)
        else:
            tm = transform_linear(X, y)
            res = (run_utamp_v2 if self.solver == "utamp_v2" else run_utamp_v1)(tm, cfg)
        self.coef_ = res.x_hat
        self.coef_var_ = res.tau_x
        self.noise_precision_ = res.beta
        self.n_iter_ = res.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise DomainError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_


class BiUTAMPEstimator(BaseEstimator):
    """Bilinear recovery of ``Y = (sum_k b_k A_k) C + W`` with Bi-UTAMP.

    ``fit(blocks, Y)`` takes the ``K`` known matrices ``A_k`` (an array of
    shape ``(K, M, N)`` or a list) and the observations (a vector or an
    ``M x L`` matrix).

    Attributes
    ----------
    b_ : ndarray of shape (K,)
    C_ : ndarray of shape (N,) or (N, L)
    noise_precision_ : float
    n_iter_ : int
    restart_ : int
        Index of the selected restart.
    dictionary_ : ndarray of shape (M, N)
        ``sum_k b_k A_k``.
    """

    def __init__(self, prior_c="bernoulli_gaussian", sparsity=0.1, prior_b="gaussian",
                 pin_first=False, damping=1.0, max_iter=200, n_restarts=1, tol=1e-6,
                 thinning=1, b_warmup=0, noise_precision=None, random_state=None):
        self.prior_c = prior_c
        self.sparsity = sparsity
        self.prior_b = prior_b
        self.pin_first = pin_first
        self.damping = damping
        self.max_iter = max_iter
        self.n_restarts = n_restarts
        self.tol = tol
        self.thinning = thinning
        self.b_warmup = b_warmup
        self.noise_precision = noise_precision
        self.random_state = random_state

    def _config(self):
        check_scalar(self.damping, "damping", lo=0.0, hi=1.0, lo_open=True)
        check_scalar(self.max_iter, "max_iter", lo=1, integer=True)
        check_scalar(self.n_restarts, "n_restarts", lo=1, integer=True)
        check_scalar(self.thinning, "thinning", lo=1, integer=True)
        return BiUtampConfig(
            prior_b=make_prior(self.prior_b), prior_c=make_prior(self.prior_c, self.sparsity),
            pin_first=self.pin_first, damping=self.damping, max_iterations=self.max_iter,
            n_restarts=self.n_restarts, tol=self.tol, thinning=self.thinning,
            b_warmup=self.b_warmup, beta=self.noise_precision, seed=self.random_state,
        )

    def fit(self, blocks, Y):
        blocks = check_blocks(blocks)
        Y = check_observations(Y, blocks.shape[1])
        cfg = self._config()
        tm = unitary_transform(build_lifted(list(blocks)), Y)
        res = run_biutamp(tm, cfg)
        self.b_ = res.b_hat
        self.C_ = res.c_hat
        self.noise_precision_ = res.beta
        self.n_iter_ = res.iterations_used
        self.restart_ = res.restart_index_selected
        self.dictionary_ = np.tensordot(self.b_, blocks, axes=1)
        self.n_blocks_in_ = blocks.shape[0]
        return self

    def predict(self, blocks=None):
        """Reconstruct ``(sum_k b_k A_k) C``; ``blocks`` defaults to the fitted ones."""
        check_is_fitted(self, "b_")
        D = self.dictionary_
        if blocks is not None:
            blocks = check_blocks(blocks)
            if blocks.shape[0] != self.n_blocks_in_:
                raise DomainError(f"expected {self.n_blocks_in_} blocks, got {blocks.shape[0]}")
            D = np.tensordot(self.b_, blocks, axes=1)
        return D @ self.C_
