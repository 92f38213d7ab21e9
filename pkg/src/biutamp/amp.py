"""Vector-stepsize AMP and AMP with unitary transformation (UTAMP).

Three solvers share one configuration object:

* :func:`run_amp` -- vector stepsize AMP on the original model ``y = A x + w``;
* :func:`run_utamp_v1` -- the same recursion on the transformed model
  ``r = Phi x + omega``;
* :func:`run_utamp_v2` -- the variant with scalar variances, which needs only
  two matrix-vector products per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from .denoisers import GaussianPrior, Prior
from .exceptions import DegenerateModelError, DimensionError, DivergenceError, DomainError
from .model_transform import TransformedModel, transform_matrix

__all__ = [
    "AmpConfig",
    "AmpState",
    "AmpResult",
    "run_amp",
    "run_utamp_v1",
    "run_utamp_v2",
    "estimate_beta",
    "transform_linear",
]

ESTIMATE = "estimate"


@dataclass
class AmpConfig:
    """Solver settings.

    ``beta`` is the noise precision; pass ``"estimate"`` to learn it with the
    variational update (starting from ``beta_init``).  Plain AMP requires a
    known precision.
    """

    prior: Prior = field(default_factory=GaussianPrior)
    beta: Union[float, str] = 1.0
    max_iterations: int = 200
    tol: float = 1e-8
    tau_x0: float = 1.0
    x0: Optional[np.ndarray] = None
    beta_init: float = 1.0
    divergence_factor: float = 1e12

    def __post_init__(self):
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        if self.tol < 0:
            raise DomainError("tol must be >= 0")
        if not self.tau_x0 > 0:
            raise DomainError("tau_x0 must be > 0")
        if self.beta != ESTIMATE and not float(self.beta) > 0:
            raise DomainError(f"beta must be > 0 or 'estimate', got {self.beta!r}")

    @property
    def estimates_beta(self):
        return isinstance(self.beta, str) and self.beta == ESTIMATE


@dataclass
class AmpState:
    x_hat: np.ndarray
    tau_x: Union[np.ndarray, float]
    s: np.ndarray
    beta: float
    iteration: int = 0


@dataclass
class AmpResult:
    x_hat: np.ndarray
    tau_x: Union[np.ndarray, float]
    trace: dict
    n_iter: int
    beta: float
    converged: bool

    def __iter__(self):
        # allows ``x_hat, tau_x, trace = run_utamp_v2(...)``
        return iter((self.x_hat, self.tau_x, self.trace))


def estimate_beta(r, z_hat, nu_z):
    """Variational noise-precision update ``M L / sum(|r - z|^2 + nu_z)``.

    Works column-wise pooled for matrices (multiple measurement vectors).
    """
    r = np.asarray(r)
    z_hat = np.asarray(z_hat)
    nu_z = np.broadcast_to(np.asarray(nu_z, dtype=float), r.shape)
    if r.shape != z_hat.shape:
        raise DimensionError(f"r {r.shape} and z_hat {z_hat.shape} differ in shape")
    denom = float(np.sum(np.abs(r - z_hat) ** 2) + np.sum(nu_z))
    if not denom > 0:
        raise DegenerateModelError("zero residual energy: noise precision is unbounded")
    return r.size / denom


def _z_posterior(r, p, tau_p, beta):
    """Lines 3-4 of the bilinear algorithm, in the form that tolerates tau_p = 0."""
    denom = 1.0 + beta * tau_p
    nu_z = tau_p / denom
    z_hat = (beta * tau_p * r + p) / denom
    return z_hat, nu_z


def _rel_change(new, old):
    den = np.sum(np.abs(old) ** 2)
    if den == 0:
        # first step away from a zero start counts as a full change
        return 0.0 if not np.any(new) else 1.0
    return np.sum(np.abs(new - old) ** 2) / den


def _check_finite(state, y_norm, config, last, iteration):
    x_norm = np.linalg.norm(state.x_hat)
    finite = (
        np.all(np.isfinite(state.x_hat))
        and np.all(np.isfinite(state.tau_x))
        and np.all(np.isfinite(state.s))
        and np.isfinite(state.beta)
    )
    if not finite or x_norm > config.divergence_factor * max(y_norm, 1e-300):
        raise DivergenceError(
            f"iterates diverged at iteration {iteration}", iteration=iteration, last_state=last
        )


def _init(config, n, dtype):
    x = np.zeros(n, dtype=dtype) if config.x0 is None else np.array(config.x0, dtype=dtype)
    if x.shape != (n,):
        raise DimensionError(f"x0 has shape {x.shape}, expected ({n},)")
    beta = config.beta_init if config.estimates_beta else float(config.beta)
    return x, beta


def _vector_amp(B, y, config, average, x_true, callback):
    """Shared body of Algorithms 1 and 2 (``B`` is ``A`` or ``Phi``)."""
    B = np.asarray(B)
    y = np.asarray(y)
    if B.ndim != 2 or y.shape != (B.shape[0],):
        raise DimensionError(f"matrix {B.shape} and observation {y.shape} are incompatible")
    M, n = B.shape
    dtype = np.result_type(B, y, float)
    B2 = np.abs(B) ** 2
    x, beta = _init(config, n, dtype)
    tau_x = np.full(n, float(config.tau_x0))
    s = np.zeros(M, dtype=dtype)
    y_norm = np.linalg.norm(y)
    trace = _new_trace(x_true is not None)
    state = AmpState(x.copy(), tau_x.copy(), s.copy(), beta, 0)
    converged = False
    for t in range(config.max_iterations):
        tau_p = B2 @ tau_x
        p = B @ x - tau_p * s
        if config.estimates_beta:
            z_hat, nu_z = _z_posterior(y, p, tau_p, beta)
            beta = estimate_beta(y, z_hat, nu_z)
        tau_s = 1.0 / (tau_p + 1.0 / beta)
        s = tau_s * (y - p)
        inv_tau_q = B2.T @ tau_s
        if average:
            inv_tau_q = np.full(n, np.mean(inv_tau_q))
        tau_q = 1.0 / inv_tau_q
        q = x + tau_q * (B.conj().T @ s)
        mean, var = config.prior.posterior(q, tau_q)
        x_new = np.asarray(mean, dtype=dtype)
        tau_x = np.asarray(var, dtype=float)
        if average:
            tau_x = np.full(n, np.mean(tau_x))
        new_state = AmpState(x_new, tau_x, s, beta, t + 1)
        _check_finite(new_state, y_norm, config, state, t + 1)
        change = _rel_change(x_new, x)
        x = x_new
        state = AmpState(x.copy(), tau_x.copy(), s.copy(), beta, t + 1)
        _record(trace, state, x_true, change)
        if callback is not None:
            callback(state)
        if change < config.tol:
            converged = True
            break
    return AmpResult(x, tau_x, trace, state.iteration, beta, converged)


def _new_trace(with_truth):
    trace = {"tau_x": [], "beta": [], "change": []}
    if with_truth:
        trace["mse"] = []
        trace["nmse"] = []
    return trace


def _record(trace, state, x_true, change):
    trace["tau_x"].append(float(np.mean(state.tau_x)))
    trace["beta"].append(float(state.beta))
    trace["change"].append(float(change))
    if x_true is not None:
        err = np.sum(np.abs(state.x_hat - x_true) ** 2)
        trace["mse"].append(float(err / x_true.size))
        nrm = np.sum(np.abs(x_true) ** 2)
        trace["nmse"].append(float(err / nrm) if nrm > 0 else np.nan)


def run_amp(A, y, config: AmpConfig, x_true=None, callback: Optional[Callable] = None):
    """Vector stepsize AMP on ``y = A x + w`` with known noise precision.

    Parameters
    ----------
    A : ndarray, shape (M, N)
    y : ndarray, shape (M,)
    config : AmpConfig
    x_true : ndarray, optional
        When given, per-iteration MSE/NMSE are recorded in the trace.
    callback : callable, optional
        Called with the :class:`AmpState` after every iteration.

    Raises
    ------
    DivergenceError
        When the iterates become non-finite or explode; ``last_state`` holds
        the last finite state.
    """
    if config.estimates_beta:
        raise DomainError("plain AMP needs a known noise precision")
    return _vector_amp(A, y, config, False, x_true, callback)


def transform_linear(A, y, beta_true=None) -> TransformedModel:
    """Transform a plain linear model ``y = A x + w`` (a single block)."""
    A = np.asarray(A)
    y = np.asarray(y)
    if y.shape[0] != A.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows but y has {y.shape[0]}")
    U, Phi, lam = transform_matrix(A)
    r = U.conj().T @ y
    return TransformedModel(r, Phi, U, lam, lam[None, :].copy(), A.shape[0], A.shape[1], 1, beta_true)


def run_utamp_v1(tmodel: TransformedModel, config: AmpConfig, x_true=None, callback=None,
                 average_variances=False):
    """UTAMP version 1: vector stepsize AMP applied to ``r = Phi x + omega``.

    With ``average_variances=True`` the two variance vectors are replaced by
    their averages each iteration, which must reproduce version 2 (a
    diagnostic mode).
    """
    return _vector_amp(tmodel.Phi, tmodel.r, config, average_variances, x_true, callback)


def run_utamp_v2(tmodel: TransformedModel, config: AmpConfig, x_true=None, callback=None):
    """UTAMP version 2 with scalar variance ``tau_x``."""
    Phi, r, lam = tmodel.Phi, np.asarray(tmodel.r), tmodel.lam
    if r.ndim != 1:
        raise DimensionError("UTAMP expects a single measurement vector")
    M, n = Phi.shape
    if not np.any(lam > 0):
        raise DegenerateModelError("all singular values are zero")
    dtype = np.result_type(Phi, r, float)
    x, beta = _init(config, n, dtype)
    tau_x = float(config.tau_x0)
    s = np.zeros(M, dtype=dtype)
    y_norm = np.linalg.norm(r)
    trace = _new_trace(x_true is not None)
    state = AmpState(x.copy(), tau_x, s.copy(), beta, 0)
    converged = False
    for t in range(config.max_iterations):
        tau_p = tau_x * lam
        p = Phi @ x - tau_p * s
        if config.estimates_beta:
            z_hat, nu_z = _z_posterior(r, p, tau_p, beta)
            beta = estimate_beta(r, z_hat, nu_z)
        tau_s = 1.0 / (tau_p + 1.0 / beta)
        s = tau_s * (r - p)
        tau_q = n / (lam @ tau_s)
        q = x + tau_q * (Phi.conj().T @ s)
        mean, var = config.prior.posterior(q, tau_q)
        x_new = np.asarray(mean, dtype=dtype)
        tau_x = float(np.mean(var))
        new_state = AmpState(x_new, tau_x, s, beta, t + 1)
        _check_finite(new_state, y_norm, config, state, t + 1)
        change = _rel_change(x_new, x)
        x = x_new
        state = AmpState(x.copy(), tau_x, s.copy(), beta, t + 1)
        _record(trace, state, x_true, change)
        if callback is not None:
            callback(state)
        if change < config.tol:
            converged = True
            break
    return AmpResult(x, tau_x, trace, state.iteration, beta, converged)
