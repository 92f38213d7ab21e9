"""Error metrics, oracle bounds and per-trial reports."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .exceptions import DimensionError, DomainError

__all__ = [
    "nmse",
    "nmse_ambiguous",
    "to_db",
    "oracle_bound_b",
    "oracle_bound_c",
    "oracle_estimate_b",
    "oracle_estimate_c",
    "oracle_support_mse",
    "TrialReport",
    "mean_db",
]


def _pair(est, truth):
    est = np.asarray(est)
    truth = np.asarray(truth)
    if est.shape != truth.shape:
        raise DimensionError(f"estimate {est.shape} and truth {truth.shape} differ in shape")
    return est, truth


def nmse(est, truth):
    """``||est - truth||^2 / ||truth||^2``."""
    est, truth = _pair(est, truth)
    den = np.sum(np.abs(truth) ** 2)
    if not den > 0:
        raise DomainError("truth has zero norm")
    return float(np.sum(np.abs(est - truth) ** 2) / den)


def nmse_ambiguous(est, truth):
    """NMSE after the best scalar rescaling of ``est``.

    Returns ``(nmse, d)`` with ``d = <est, truth> / ||est||^2`` minimizing
    ``||truth - d est||^2``.  A zero estimate gives ``(1.0, 0.0)``.
    """
    est, truth = _pair(est, truth)
    den = np.sum(np.abs(truth) ** 2)
    if not den > 0:
        raise DomainError("truth has zero norm")
    e2 = np.sum(np.abs(est) ** 2)
    if e2 == 0:
        return 1.0, 0.0
    d = np.vdot(est, truth) / e2
    if np.isrealobj(est) and np.isrealobj(truth):
        d = float(np.real(d))
    err = np.sum(np.abs(truth - d * est) ** 2)
    # exact multiples leave rounding residue of order eps
    if err <= 1e-28 * den:
        err = 0.0
    return float(min(err / den, 1.0)), d


def to_db(x):
    """``10 log10(x)``; works elementwise on arrays."""
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(x)
    return float(out) if np.ndim(out) == 0 else out


def mean_db(values: Iterable[float]):
    """Arithmetic mean of linear NMSE values, then dB."""
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        raise DomainError("no values to aggregate")
    return to_db(np.mean(vals))


def _ridge_solve(G, rhs):
    try:
        return np.linalg.solve(G, rhs), 0.0
    except np.linalg.LinAlgError:
        ridge = 1e-12 * max(np.trace(G).real / G.shape[0], 1.0)
        return np.linalg.solve(G + ridge * np.eye(G.shape[0]), rhs), ridge


def _beta(instance):
    return instance.beta


def oracle_estimate_b(instance, pin_first=True):
    """Gaussian MMSE estimate of ``b`` given the true ``c`` (and ``b_1`` if pinned).

    Returns ``(b_hat, ridge)``; ``ridge`` is nonzero only if the normal
    equations were singular and had to be regularized.
    """
    blocks = np.asarray(instance.blocks)
    c = np.asarray(instance.c if hasattr(instance, "c") else instance.C)
    y = np.asarray(instance.y if hasattr(instance, "y") else instance.Y)
    H = np.stack([Ak @ c for Ak in blocks], axis=-1)  # (M, [L,] K)
    H = H.reshape(-1, blocks.shape[0])
    y = y.reshape(-1)
    K = blocks.shape[0]
    b_hat = np.zeros(K)
    free = np.arange(1, K) if pin_first else np.arange(K)
    if pin_first:
        b_hat[0] = 1.0
        y = y - H[:, 0]
    Hf = H[:, free]
    beta = _beta(instance)
    if np.isinf(beta):
        sol, ridge = _ridge_solve(Hf.T @ Hf, Hf.T @ y)
    else:
        sol, ridge = _ridge_solve(Hf.T @ Hf + np.eye(free.size) / beta, Hf.T @ y)
    b_hat[free] = sol
    return b_hat, ridge


def oracle_bound_b(instance, pin_first=True):
    """NMSE of the oracle ``b`` estimate (over the free entries when pinned)."""
    b_hat, _ = oracle_estimate_b(instance, pin_first)
    sel = slice(1, None) if pin_first else slice(None)
    return nmse(b_hat[sel], np.asarray(instance.b)[sel])


def oracle_estimate_c(instance):
    """Gaussian MMSE estimate of ``c`` given the true ``b`` and support
    (N(0, 1) prior on the non-zeros).  Returns ``(c_hat, ridge)``."""
    c = np.asarray(instance.c)
    supp = np.flatnonzero(c)
    Ab = instance.A_b[:, supp]
    beta = _beta(instance)
    c_hat = np.zeros_like(c, dtype=float)
    if supp.size == 0:
        return c_hat, 0.0
    G = Ab.T @ Ab
    if not np.isinf(beta):
        G = G + np.eye(supp.size) / beta
    sol, ridge = _ridge_solve(G, Ab.T @ instance.y)
    c_hat[supp] = sol
    return c_hat, ridge


def oracle_bound_c(instance):
    c_hat, _ = oracle_estimate_c(instance)
    return nmse(c_hat, instance.c)


def oracle_support_mse(A, y, x, beta, prior_variance=1.0):
    """MSE of the Gaussian MMSE estimate of ``x`` in ``y = A x + w`` when the
    support of ``x`` is known (per-entry MSE over all of ``x``)."""
    A = np.asarray(A)
    x = np.asarray(x)
    supp = np.flatnonzero(x)
    x_hat = np.zeros_like(x, dtype=float)
    if supp.size:
        As = A[:, supp]
        G = As.T @ As
        if not np.isinf(beta):
            G = G + np.eye(supp.size) / (beta * prior_variance)
        x_hat[supp] = _ridge_solve(G, As.T @ y)[0]
    return float(np.mean(np.abs(x_hat - x) ** 2))


@dataclass
class TrialReport:
    """Outcome of one solver run on one instance (NMSEs stored in dB)."""

    nmse_b: float
    nmse_c: float
    runtime: float
    converged: bool
    iterations_used: int
    clamp_count: int = 0
    diverged: bool = False

    def to_dict(self):
        return asdict(self)
