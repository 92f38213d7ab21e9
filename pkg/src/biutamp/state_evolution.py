"""State evolution (SE) for UTAMP and a table-driven SE prediction for Bi-UTAMP.

For UTAMP the scalar recursion alternates

    tau   = N / sum_m lambda_m / (v_x lambda_m + 1/beta)
    v_x   = E |g(x + sqrt(tau) z, tau) - x|^2

For Bi-UTAMP the denoiser (the EP blocks for ``b`` and ``c``) has no closed
form, so its input/output MSE relation is tabulated once by simulation and
the same recursion is iterated with the table in place of the scalar MSE.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .denoisers import GaussianPrior, Prior, denoiser_mse, expected_mse
from .exceptions import DegenerateModelError, DimensionError, DomainError

__all__ = [
    "SeState",
    "SeTrajectory",
    "MseTable",
    "se_step",
    "run_se",
    "build_mse_table",
    "default_tau_grid",
    "predict_biutamp",
    "BiUtampPrediction",
    "ExtrapolationWarning",
]


class ExtrapolationWarning(UserWarning):
    """Raised (as a warning) when the SE visits a tau outside the table."""


@dataclass
class SeState:
    tau: float
    v_x: float
    iteration: int


@dataclass
class SeTrajectory:
    tau: np.ndarray
    v_x: np.ndarray

    def __len__(self):
        return len(self.tau)

    def states(self):
        return [SeState(float(t), float(v), i + 1) for i, (t, v) in enumerate(zip(self.tau, self.v_x))]


def se_step(v_x, lam, beta_inv, N):
    """One evaluation of ``tau = N / sum(lam / (v_x lam + beta_inv))``.

    Entries with ``lam = 0`` contribute nothing to the sum (their term is 0
    whenever ``beta_inv > 0``).
    """
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1:
        raise DimensionError("lambda must be a vector")
    if np.any(lam < 0):
        raise DomainError("lambda must be nonnegative")
    if not np.any(lam > 0):
        raise DegenerateModelError("all squared singular values are zero")
    if v_x < 0:
        raise DomainError("v_x must be >= 0")
    if beta_inv < 0 or (beta_inv == 0 and v_x == 0):
        raise DomainError("need beta_inv > 0, or beta_inv = 0 with v_x > 0")
    pos = lam[lam > 0]
    return float(N / np.sum(pos / (v_x * pos + beta_inv)))


def run_se(prior: Prior, lam, beta_inv, N, iterations, n_mc=None, seed=None, v0=None):
    """Iterate the UTAMP state evolution.

    Parameters
    ----------
    prior : Prior
        Prior of the entries of ``x``.
    lam : array_like
        Squared singular values (zero padded is fine).
    beta_inv : float
        Noise variance.
    N : int
        Signal length.
    iterations : int
    n_mc : int, optional
        Monte-Carlo samples per MSE evaluation.  ``None`` uses the
        deterministic :func:`expected_mse` instead.
    seed : int, optional
        Seeds the Monte-Carlo evaluations (one child stream per iteration).
    v0 : float, optional
        Initial ``v_x``; defaults to the prior second moment (``x_hat = 0``).

    Returns
    -------
    SeTrajectory
        ``tau[t]`` and ``v_x[t]`` for ``t = 1..iterations``.
    """
    if iterations < 1:
        raise DomainError("iterations must be >= 1")
    v = prior.second_moment if v0 is None else float(v0)
    seeds = np.random.SeedSequence(seed).spawn(iterations) if n_mc is not None else None
    taus, vs = [], []
    for t in range(iterations):
        tau = se_step(v, lam, beta_inv, N)
        if n_mc is None:
            v = expected_mse(prior, tau)
        else:
            v = denoiser_mse(prior, tau, n_samples=n_mc, seed=seeds[t])
        taus.append(tau)
        vs.append(v)
    return SeTrajectory(np.array(taus), np.array(vs))


@dataclass
class MseTable:
    """Tabulated denoiser response: output MSE of ``x`` (and byproduct NMSEs
    of ``b`` and ``c``) as a function of the input variance ``tau``.

    Values between grid points are interpolated linearly in log-log space.
    """

    tau: np.ndarray
    mse_x: np.ndarray
    nmse_b: np.ndarray
    nmse_c: np.ndarray
    columns = ("tau", "mse_x", "nmse_b", "nmse_c")

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.mse_x = np.asarray(self.mse_x, dtype=float)
        self.nmse_b = np.asarray(self.nmse_b, dtype=float)
        self.nmse_c = np.asarray(self.nmse_c, dtype=float)
        n = self.tau.shape[0]
        if n == 0:
            raise DimensionError("empty table")
        for name in self.columns[1:]:
            if getattr(self, name).shape != (n,):
                raise DimensionError(f"column {name} has the wrong length")
            if np.any(getattr(self, name) < 0):
                raise DomainError(f"column {name} must be nonnegative")
        if np.any(self.tau <= 0) or np.any(np.diff(self.tau) <= 0):
            raise DomainError("tau grid must be positive and strictly increasing")

    def covers(self, tau):
        return self.tau[0] <= tau <= self.tau[-1]

    def _interp(self, col, tau):
        tau = float(tau)
        y = getattr(self, col)
        # exact hit returns the tabulated value unchanged
        hit = np.flatnonzero(self.tau == tau)
        if hit.size:
            return float(y[hit[0]])
        floor = np.finfo(float).tiny
        ly = np.log(np.maximum(y, floor))
        val = np.interp(np.log(tau), np.log(self.tau), ly)
        if not self.covers(tau) and self.tau.size > 1:
            # linear extrapolation of the log-log end segment
            i = (0, 1) if tau < self.tau[0] else (-2, -1)
            lt = np.log(self.tau[list(i)])
            slope = (ly[i[1]] - ly[i[0]]) / (lt[1] - lt[0])
            val = ly[i[0]] + slope * (np.log(tau) - lt[0])
        return float(np.exp(val))

    def mse(self, tau):
        return self._interp("mse_x", tau)

    def nmse_b_at(self, tau):
        return self._interp("nmse_b", tau)

    def nmse_c_at(self, tau):
        return self._interp("nmse_c", tau)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in zip(self.tau, self.mse_x, self.nmse_b, self.nmse_c):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != cls.columns:
                raise DomainError(f"expected header {','.join(cls.columns)}, got {header}")
            rows = [[float(v) for v in row] for row in reader if row]
        if not rows:
            raise DomainError("table has no rows")
        cols = np.array(rows).T
        return cls(*cols)


def default_tau_grid(prior_variance, n_points=40):
    """40 log-spaced points over ``[1e-8, 1e2] * prior_variance``."""
    return np.logspace(-8, 2, n_points) * prior_variance


def _spectral_b(q, pin_first):
    """Leading left singular vector of the ``K x NL`` matrix of ``q``.

    ``q_k`` is a noisy ``b_k c``, so this recovers ``b`` up to scale; it is
    scaled to ``b_1 = 1`` when pinned and to norm ``sqrt(K)`` otherwise.
    """
    K = q.shape[0]
    u = np.linalg.svd(q.reshape(K, -1), full_matrices=False)[0][:, 0]
    if pin_first and u[0] != 0:
        return u / u[0]
    return u * np.sqrt(K)


def _denoiser_block_mse(prior_b, prior_c, K, N, L, tau, n_mc, seed, pin_first, n_iter):
    """Simulate the b/c denoiser block on ``q_k = b_k c + N(0, tau)``.

    Fresh draws of ``(b, c)`` per call; the block (EP for ``c`` then ``b``,
    then recombination) is iterated to a fixed point with ``q`` fixed.
    """
    from .bilinear import BiUtampConfig, _denoiser_block

    rng = np.random.default_rng(seed)
    n_draws = max(1, int(np.ceil(n_mc / (K * N * L))))
    sq_x = sq_b = sq_c = 0.0
    den_x = den_b = den_c = 0.0
    for _ in range(n_draws):
        b = prior_b.sample(rng, K)
        if pin_first:
            b[0] = 1.0
        C = prior_c.sample(rng, (N, L))
        X = b[:, None, None] * C[None]
        q = X + np.sqrt(tau) * rng.standard_normal(X.shape)
        nu_q = np.full((K, L), tau)
        cfg = BiUtampConfig(prior_b=prior_b, prior_c=prior_c, pin_first=pin_first)
        x_hat, b_hat, c_hat = _denoiser_block(q, nu_q, cfg, n_iter,
                                              b_init=_spectral_b(q, pin_first), tol=1e-12)
        sq_x += np.sum(np.abs(x_hat - X) ** 2)
        den_x += X.size
        sel = slice(1, None) if pin_first else slice(None)
        sq_b += np.sum(np.abs(b_hat[sel] - b[sel]) ** 2)
        den_b += np.sum(np.abs(b[sel]) ** 2)
        sq_c += np.sum(np.abs(c_hat - C) ** 2)
        den_c += np.sum(np.abs(C) ** 2)
    nmse_b = sq_b / den_b if den_b > 0 else 0.0
    nmse_c = sq_c / den_c if den_c > 0 else 0.0
    return sq_x / den_x, nmse_b, nmse_c


def build_mse_table(prior_b: Prior, prior_c: Prior, K, N, L=1, tau_grid=None, n_mc=100_000,
                    seed=None, pin_first=False, n_iter=300, threads=1) -> MseTable:
    """Tabulate the Bi-UTAMP denoiser block response.

    For every ``tau`` in the grid, true ``(b, c)`` are drawn from the priors,
    ``q_k = b_k c + N(0, tau)`` is formed and the EP/recombination part of
    one Bi-UTAMP iteration is run from a spectral estimate of ``b``,
    repeated with ``q`` fixed until ``b_hat`` settles (at most ``n_iter``
    passes, starting fresh for each grid point).  At least ``n_mc`` lifted
    entries are simulated per grid point.
    """
    if tau_grid is None:
        v = prior_b.second_moment * prior_c.second_moment
        tau_grid = default_tau_grid(v)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.size == 0 or np.any(np.diff(tau_grid) <= 0):
        raise DomainError("tau_grid must be nonempty and strictly increasing")
    seeds = np.random.SeedSequence(seed).spawn(tau_grid.size)

    def one(i):
        return _denoiser_block_mse(prior_b, prior_c, K, N, L, tau_grid[i], n_mc, seeds[i],
                                   pin_first, n_iter)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, range(tau_grid.size)))
    else:
        rows = [one(i) for i in range(tau_grid.size)]
    rows = np.array(rows)
    return MseTable(tau_grid, rows[:, 0], rows[:, 1], rows[:, 2])


@dataclass
class BiUtampPrediction:
    tau: np.ndarray
    mse_x: np.ndarray
    nmse_b: np.ndarray
    nmse_c: np.ndarray
    extrapolated: List[int] = field(default_factory=list)


def predict_biutamp(table: MseTable, lam, beta_inv, N, iterations, v0=None):
    """Heuristic SE prediction for Bi-UTAMP on the lifted model.

    ``N`` is the lifted width ``N K``.  Iterations that visit a ``tau``
    outside the table are listed in ``extrapolated`` and trigger an
    :class:`ExtrapolationWarning`.
    """
    if iterations < 1:
        raise DomainError("iterations must be >= 1")
    v = table.mse_x[-1] if v0 is None else float(v0)
    out = {"tau": [], "mse_x": [], "nmse_b": [], "nmse_c": []}
    extrapolated = []
    for t in range(iterations):
        tau = se_step(v, lam, beta_inv, N)
        if not table.covers(tau):
            extrapolated.append(t)
        v = table.mse(tau)
        out["tau"].append(tau)
        out["mse_x"].append(v)
        out["nmse_b"].append(table.nmse_b_at(tau))
        out["nmse_c"].append(table.nmse_c_at(tau))
    if extrapolated:
        warnings.warn(f"SE left the tabulated tau range at {len(extrapolated)} iteration(s)",
                      ExtrapolationWarning, stacklevel=2)
    return BiUtampPrediction(*(np.array(out[k]) for k in ("tau", "mse_x", "nmse_b", "nmse_c")),
                             extrapolated=extrapolated)
