"""Scalar MMSE denoisers for the pseudo-observation model ``q = x + N(0, tau)``.

Every prior exposes ``posterior(q, tau)`` returning per-element posterior
moments.  The module-level helpers (:func:`denoise`,
:func:`denoise_derivative`, :func:`denoiser_mse`, :func:`expected_mse`)
validate their inputs and dispatch to the prior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy import integrate
from scipy.special import expit

from .exceptions import DomainError

__all__ = [
    "PosteriorMoments",
    "Prior",
    "GaussianPrior",
    "BernoulliGaussianPrior",
    "NonInformativePrior",
    "PinnedPrior",
    "denoise",
    "denoise_derivative",
    "denoiser_mse",
    "expected_mse",
]


class PosteriorMoments(NamedTuple):
    mean: np.ndarray
    variance: np.ndarray


class Prior:
    """Base class for element-wise priors."""

    #: posterior variance does not depend on the pseudo-noise level
    ignores_tau = False

    def posterior(self, q, tau):  # pragma: no cover - abstract
        raise NotImplementedError

    def sample(self, rng, size):
        raise DomainError(f"{type(self).__name__} cannot be sampled")

    @property
    def second_moment(self):
        """E|x|^2 under the prior."""
        raise DomainError(f"{type(self).__name__} has no finite second moment")


@dataclass(frozen=True)
class GaussianPrior(Prior):
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError(f"Gaussian prior variance must be > 0, got {self.variance}")

    def posterior(self, q, tau):
        v0 = self.variance
        mean = (v0 * q + tau * self.mean) / (v0 + tau)
        var = v0 * tau / (v0 + tau)
        return PosteriorMoments(mean, np.broadcast_to(var, np.shape(q)).astype(float))

    def sample(self, rng, size):
        return self.mean + np.sqrt(self.variance) * rng.standard_normal(size)

    @property
    def second_moment(self):
        return self.mean**2 + self.variance


@dataclass(frozen=True)
class BernoulliGaussianPrior(Prior):
    """``(1 - rate) * delta(x) + rate * N(x; active_mean, active_variance)``.

    Real-valued only.
    """

    rate: float
    active_mean: float = 0.0
    active_variance: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise DomainError(f"Bernoulli rate must lie in [0, 1], got {self.rate}")
        if not self.active_variance > 0:
            raise DomainError(
                f"active variance must be > 0, got {self.active_variance}"
            )

    def activation(self, q, tau):
        """Posterior probability that each element is drawn from the slab."""
        v, m = self.active_variance, self.active_mean
        with np.errstate(divide="ignore"):
            log_odds = (
                np.log(self.rate)
                - np.log1p(-self.rate)
                + 0.5 * np.log(tau / (v + tau))
                - 0.5 * (q - m) ** 2 / (v + tau)
                + 0.5 * q**2 / tau
            )
        return expit(log_odds)

    def posterior(self, q, tau):
        v, m = self.active_variance, self.active_mean
        pi = self.activation(q, tau)
        slab_mean = (v * q + tau * m) / (v + tau)
        slab_var = v * tau / (v + tau)
        mean = pi * slab_mean
        var = pi * slab_var + pi * (1.0 - pi) * slab_mean**2
        return PosteriorMoments(mean, var)

    def sample(self, rng, size):
        active = rng.random(size) < self.rate
        slab = self.active_mean + np.sqrt(self.active_variance) * rng.standard_normal(size)
        return np.where(active, slab, 0.0)

    @property
    def second_moment(self):
        return self.rate * (self.active_mean**2 + self.active_variance)


@dataclass(frozen=True)
class NonInformativePrior(Prior):
    """Flat prior: the posterior is the pseudo-observation itself."""

    def posterior(self, q, tau):
        q = np.asarray(q)
        return PosteriorMoments(q.copy(), np.broadcast_to(tau, q.shape).astype(float))


@dataclass(frozen=True)
class PinnedPrior(Prior):
    """Point mass at ``value`` (scalar or array broadcast against ``q``)."""

    value: Union[float, tuple] = 1.0
    ignores_tau = True

    def posterior(self, q, tau):
        shape = np.shape(q)
        mean = np.broadcast_to(np.asarray(self.value), shape).astype(np.result_type(q, float))
        return PosteriorMoments(mean.copy(), np.zeros(shape))

    def sample(self, rng, size):
        return np.broadcast_to(np.asarray(self.value, dtype=float), size).copy()

    @property
    def second_moment(self):
        return float(np.mean(np.abs(np.asarray(self.value, dtype=float)) ** 2))


def _check_tau(prior, tau):
    tau = np.asarray(tau, dtype=float)
    if not prior.ignores_tau and not np.all(tau > 0):
        raise DomainError("pseudo-noise variance tau_q must be > 0")
    return tau


def denoise(prior, q, tau_q):
    """Posterior mean and variance of ``x`` given ``q = x + N(0, tau_q)``.

    Parameters
    ----------
    prior : Prior
    q : array_like
        Pseudo-observations.
    tau_q : float or array_like
        Pseudo-noise variance, scalar or one entry per element of ``q``.

    Returns
    -------
    PosteriorMoments
    """
    tau = _check_tau(prior, tau_q)
    mean, var = prior.posterior(np.asarray(q), tau)
    return PosteriorMoments(np.asarray(mean), np.asarray(var, dtype=float))


def denoise_derivative(prior, q, tau_q):
    """Derivative of the posterior mean with respect to ``q``.

    Uses the identity ``tau_q * g'(q) = Var[x | q]``.
    """
    tau = _check_tau(prior, tau_q)
    _, var = prior.posterior(np.asarray(q), tau)
    if prior.ignores_tau:
        return np.zeros(np.shape(q))
    return np.asarray(var, dtype=float) / tau


def denoiser_mse(prior, tau, n_samples=100_000, seed=None):
    """Monte-Carlo estimate of ``E|g(x + sqrt(tau) z, tau) - x|^2``.

    ``x`` is drawn from ``prior`` and ``z`` from N(0, 1).  Because the
    denoiser is the posterior mean, the squared error is replaced by its
    conditional expectation given ``q`` (the posterior variance), which has
    the same expectation and a much smaller Monte-Carlo spread.
    """
    tau = float(tau)
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    x = prior.sample(rng, n_samples)
    q = x + np.sqrt(tau) * rng.standard_normal(n_samples)
    _, var = prior.posterior(q, tau)
    return float(np.mean(var))


def expected_mse(prior, tau):
    """Deterministic counterpart of :func:`denoiser_mse`.

    Closed form for Gaussian, flat and pinned priors; one-dimensional
    quadrature over the marginal of ``q`` for Bernoulli-Gaussian.
    """
    tau = float(tau)
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    if isinstance(prior, GaussianPrior):
        return prior.variance * tau / (prior.variance + tau)
    if isinstance(prior, NonInformativePrior):
        return tau
    if isinstance(prior, PinnedPrior):
        return 0.0
    if isinstance(prior, BernoulliGaussianPrior):
        total = 0.0
        components = [
            (1.0 - prior.rate, 0.0, tau),
            (prior.rate, prior.active_mean, prior.active_variance + tau),
        ]
        for weight, center, var in components:
            if weight == 0.0:
                continue
            sd = np.sqrt(var)

            def integrand(u, center=center, sd=sd):
                q = center + sd * u
                return prior.posterior(q, tau).variance * np.exp(-0.5 * u * u)

            # the spike/slab switch sits within a few sqrt(tau) of q = 0
            edges = (np.sqrt(tau) * np.array([-8, -4, -2, -1, 0, 1, 2, 4, 8]) - center) / sd
            edges = np.unique(edges[np.abs(edges) < 12.0])
            val, _ = integrate.quad(integrand, -12.0, 12.0, points=edges, limit=400,
                                    epsabs=1e-13 * tau, epsrel=1e-10)
            total += weight * val / np.sqrt(2.0 * np.pi)
        return float(total)
    raise DomainError(f"no deterministic MSE for {type(prior).__name__}")
