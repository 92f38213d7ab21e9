"""Bi-UTAMP: bilinear recovery of ``Y = sum_k b_k A_k C + W``.

The lifted variable ``x_l = b (x) c_l`` is handled by a UTAMP module on the
transformed model; the bilinear constraint is handled by Gaussian message
passing with moment matching for ``b`` and ``c``.  A single measurement
vector is the ``L = 1`` case: every array carries a trailing column axis.

Array layout (``K`` blocks, ``N`` entries per block, ``L`` columns)::

    x_hat, q, backward messages ... (K, N, L)
    nu_x, nu_q                      (K, L)   one variance per block/column
    p, nu_p, z_hat, nu_z, s, nu_s   (M, L)
    c_hat                           (N, L);  nu_c (L,)
    b_hat, nu_b                     (K,)
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from .amp import estimate_beta
from .denoisers import BernoulliGaussianPrior, GaussianPrior, PinnedPrior, Prior
from .exceptions import DegenerateModelError, DimensionError, DivergenceError, DomainError
from .model_transform import TransformedModel

__all__ = [
    "BiUtampConfig",
    "BiUtampState",
    "BiUtampResult",
    "init_state",
    "biutamp_iteration",
    "biutamp_smv_iteration",
    "biutamp_mmv_iteration",
    "run_biutamp",
    "run_biutamp_smv",
    "run_biutamp_mmv",
    "lifted_residual",
]


@dataclass
class BiUtampConfig:
    """Settings for the Bi-UTAMP solvers.

    Parameters
    ----------
    prior_b, prior_c : Prior
        Element-wise priors of ``b`` and ``c`` (or ``C``).
    pin_first : bool
        Treat ``b_1 = 1`` as known.
    damping : float
        ``alpha`` in ``s = (1 - alpha) s + alpha nu_s (r - p)``; 1 disables damping.
    max_iterations, n_restarts : int
    tol : float
        Stop when the normalized change of ``b_hat`` (and of ``c_hat``) drops
        below ``tol``.
    thinning : int
        Update the posterior of ``b`` only every ``thinning`` iterations.
    b_warmup : int or sequence of int
        Number of initial iterations during which ``b_hat`` is held at its
        initial value.  A sequence is cycled over restarts, e.g. ``(0, 3)``
        alternates the plain schedule with a 3-iteration hold.  0 follows the
        plain schedule.
    beta : float or None
        Known noise precision; ``None`` estimates it.
    b_init : array_like, optional
        Initial ``b_hat`` for the first restart; later restarts draw N(0, 1).
    seed : int, optional
        Seed for the restart draws.
    """

    prior_b: Prior = field(default_factory=GaussianPrior)
    prior_c: Prior = field(default_factory=lambda: BernoulliGaussianPrior(0.1))
    pin_first: bool = False
    damping: float = 1.0
    max_iterations: int = 200
    n_restarts: int = 1
    tol: float = 1e-6
    thinning: int = 1
    b_warmup: Union[int, Sequence[int]] = 0
    invalid_extrinsic: str = "posterior"
    beta: Optional[float] = None
    beta_init: float = 1.0
    b_init: Optional[np.ndarray] = None
    seed: Optional[int] = None
    nu_min: float = 1e-12
    nu_max: float = 1e12
    beta_min: float = 1e-12
    beta_max: float = 1e12

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise DomainError(f"damping must lie in (0, 1], got {self.damping}")
        if self.tol < 0:
            raise DomainError("tol must be >= 0")
        if self.thinning < 1:
            raise DomainError("thinning must be >= 1")
        if self.invalid_extrinsic not in ("posterior", "uninformative"):
            raise DomainError("invalid_extrinsic must be 'posterior' or 'uninformative'")
        warm = self.warmup_schedule
        if len(warm) == 0 or min(warm) < 0:
            raise DomainError("b_warmup entries must be >= 0")
        if self.max_iterations < 1 or self.n_restarts < 1:
            raise DomainError("max_iterations and n_restarts must be >= 1")
        if self.beta is not None and not self.beta > 0:
            raise DomainError("beta must be > 0 when given")

    @property
    def warmup_schedule(self):
        w = self.b_warmup
        return (int(w),) if np.ndim(w) == 0 else tuple(int(v) for v in w)

    def warmup_for(self, restart):
        sched = self.warmup_schedule
        return sched[restart % len(sched)]


@dataclass
class BiUtampState:
    x_hat: np.ndarray
    nu_x: np.ndarray
    s: np.ndarray
    b_hat: np.ndarray
    nu_b: np.ndarray
    beta: float
    iteration: int = 0
    p: Optional[np.ndarray] = None
    nu_p: Optional[np.ndarray] = None
    z_hat: Optional[np.ndarray] = None
    nu_z: Optional[np.ndarray] = None
    nu_s: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    nu_q: Optional[np.ndarray] = None
    c_fwd: Optional[np.ndarray] = None
    nu_c_fwd: Optional[np.ndarray] = None
    c_hat: Optional[np.ndarray] = None
    nu_c: Optional[np.ndarray] = None
    b_fwd: Optional[np.ndarray] = None
    nu_b_fwd: Optional[np.ndarray] = None
    b_bwd: Optional[np.ndarray] = None
    nu_b_bwd: Optional[np.ndarray] = None
    c_bwd: Optional[np.ndarray] = None
    nu_c_bwd: Optional[np.ndarray] = None
    clamp_count: int = 0

    def copy(self):
        return replace(self, **{
            k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in vars(self).items()
        })

    def finite(self):
        for v in (self.x_hat, self.nu_x, self.s, self.b_hat, self.nu_b, self.c_hat):
            if v is not None and not np.all(np.isfinite(v)):
                return False
        return bool(np.isfinite(self.beta))


@dataclass
class BiUtampResult:
    b_hat: np.ndarray
    c_hat: np.ndarray
    beta: float
    iterations_used: int
    restart_index_selected: int
    trace: dict
    converged: bool
    clamp_count: int
    residual: float
    restart_status: List[str]
    runtime: float = 0.0
    state: Optional[BiUtampState] = None


def _as_columns(r):
    r = np.asarray(r)
    return r[:, None] if r.ndim == 1 else r


def _pin(config, b_hat, nu_b):
    if config.pin_first:
        b_hat[0] = 1.0
        nu_b[0] = 0.0
    return b_hat, nu_b


def init_state(tmodel: TransformedModel, config: BiUtampConfig, b_init=None) -> BiUtampState:
    """Header initialization: ``nu_b = nu_x = 1``, ``x_hat = 0``, ``s = 0``, ``beta = 1``."""
    r = _as_columns(tmodel.r)
    K, N, L, M = tmodel.K, tmodel.N, r.shape[1], tmodel.M
    dtype = np.result_type(tmodel.Phi, r, float)
    if isinstance(config.prior_b, PinnedPrior):
        b_hat, nu_b = config.prior_b.posterior(np.zeros(K), 1.0)
        b_hat, nu_b = np.array(b_hat, dtype=dtype), np.array(nu_b, dtype=float)
    else:
        b_hat = np.ones(K, dtype=dtype) if b_init is None else np.array(b_init, dtype=dtype)
        nu_b = np.ones(K)
    if b_hat.shape != (K,):
        raise DimensionError(f"b_init has shape {b_hat.shape}, expected ({K},)")
    b_hat, nu_b = _pin(config, b_hat, nu_b)
    beta = config.beta_init if config.beta is None else float(config.beta)
    return BiUtampState(
        x_hat=np.zeros((K, N, L), dtype=dtype),
        nu_x=np.ones((K, L)),
        s=np.zeros((M, L), dtype=dtype),
        b_hat=b_hat,
        nu_b=nu_b,
        beta=beta,
    )


def _extrinsic_variance(post_var, fwd_var, config):
    """Variance of the EP division ``posterior / forward``.

    Uses ``nu = v f / (f - v)`` so that an exact posterior (``v = 0``) passes
    through unchanged.  Where the extrinsic precision is not positive the
    entry is flagged and replaced according to ``config.invalid_extrinsic``:
    the posterior variance itself (``"posterior"``) or ``nu_max``
    (``"uninformative"``).  Remaining variances are clipped to
    ``[nu_min, nu_max]``.  Returns ``(var, bad, n_clamped)``.
    """
    post_var = np.broadcast_to(post_var, fwd_var.shape)
    exact = post_var == 0
    d = fwd_var - post_var
    with np.errstate(divide="ignore", invalid="ignore"):
        var = post_var * fwd_var / d
    var = np.where(exact, 0.0, var)
    bad = ~exact & ~((d > 0) & np.isfinite(var))
    fallback = post_var if config.invalid_extrinsic == "posterior" else config.nu_max
    var = np.where(bad, fallback, var)
    keep = ~exact
    clipped = np.clip(var, config.nu_min, config.nu_max)
    n_clip = int(np.count_nonzero(keep & ~bad & (clipped != var)))
    var = np.where(keep, clipped, var)
    return var, bad, int(np.count_nonzero(bad)) + n_clip


def _extrinsic(post_mean, post_var, fwd_mean, fwd_var, config):
    """Mean and variance of the EP division; invalid entries take the posterior mean."""
    var, bad, n = _extrinsic_variance(post_var, fwd_var, config)
    post_var = np.broadcast_to(post_var, fwd_var.shape)
    post_mean = np.broadcast_to(post_mean, fwd_mean.shape)
    d = fwd_var - post_var
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = (post_mean * fwd_var - post_var * fwd_mean) / d
    use_post = bad | (post_var == 0) | ~np.isfinite(mean)
    return np.where(use_post, post_mean, mean), var, n


def _updates_b(config, t, warmup=None):
    w = config.warmup_for(0) if warmup is None else warmup
    return t >= w and (t - w) % config.thinning == 0


def _bc_block(q, nu_q, b_hat, nu_b, b_fwd, nu_b_fwd, config, update_b):
    """EP updates of ``c`` and ``b``, backward messages and recombination of
    ``x`` from the UTAMP output ``(q, nu_q)``."""
    K, N, L = q.shape
    b_dtype = b_hat.dtype
    # forward messages to c and its posterior
    gain = np.abs(b_hat) ** 2 + nu_b
    with np.errstate(divide="ignore", invalid="ignore"):
        nu_c_fwd_k = nu_q / gain[:, None]
        c_fwd_k = np.where(gain[:, None, None] > 0,
                           q * (b_hat.conj() / gain)[:, None, None], 0.0)
    prec_c = gain[:, None] / nu_q
    nu_c_fwd = 1.0 / np.sum(prec_c, axis=0)
    c_fwd = nu_c_fwd * np.sum(q * b_hat.conj()[:, None, None] / nu_q[:, None, :], axis=0)
    c_hat, var_c = config.prior_c.posterior(c_fwd, nu_c_fwd[None, :])
    c_hat = np.asarray(c_hat)
    nu_c = np.mean(np.asarray(var_c, dtype=float), axis=0)

    # forward messages to b and its posterior
    den_n = np.abs(c_hat) ** 2 + nu_c[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        nu_b_fwd_nk = nu_q[:, None, :] / den_n[None]
        b_fwd_nk = q * c_hat.conj()[None] / den_n[None]
    if update_b:
        prec_b = np.sum(den_n[None] / nu_q[:, None, :], axis=(1, 2))
        nu_b_fwd = 1.0 / prec_b
        b_fwd = nu_b_fwd * np.sum(q * c_hat.conj()[None] / nu_q[:, None, :], axis=(1, 2))
        b_hat, nu_b = config.prior_b.posterior(b_fwd, nu_b_fwd)
        b_hat = np.array(b_hat, dtype=b_dtype)
        nu_b = np.array(nu_b, dtype=float)
        b_hat, nu_b = _pin(config, b_hat, nu_b)

    # backward messages
    b_bwd, nu_b_bwd, n1 = _extrinsic(b_hat[:, None, None], nu_b[:, None, None],
                                     b_fwd_nk, nu_b_fwd_nk, config)
    nu_c_bwd, bad_c, n2 = _extrinsic_variance(nu_c[None, :], nu_c_fwd_k, config)
    # mean from the unclipped division, so clipping the variance cannot rescale it
    d_c = (nu_c_fwd_k - nu_c[None, :])[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        c_bwd_k = (c_hat[None] * nu_c_fwd_k[:, None, :] - nu_c[None, None, :] * c_fwd_k) / d_c
    c_bwd_k = np.where(np.isfinite(c_bwd_k) & ~bad_c[:, None, :], c_bwd_k, c_hat[None])
    nu_c_bwd_full = np.broadcast_to(nu_c_bwd[:, None, :], (K, N, L))
    x_bwd = b_bwd * c_bwd_k
    nu_x_bwd = (np.abs(b_bwd) ** 2 * nu_c_bwd_full + nu_b_bwd * np.abs(c_bwd_k) ** 2
                + nu_b_bwd * nu_c_bwd_full)

    # combine with the UTAMP output
    nq = nu_q[:, None, :]
    tot = nq + nu_x_bwd
    nu_x_vec = nq * nu_x_bwd / tot
    x_hat = (q * nu_x_bwd + x_bwd * nq) / tot
    nu_x = np.mean(nu_x_vec, axis=1)

    return (c_fwd, nu_c_fwd, c_hat, nu_c, b_hat, nu_b, b_fwd, nu_b_fwd, b_bwd, nu_b_bwd,
            c_bwd_k, nu_c_bwd, x_hat, nu_x, n1 + n2)


def _denoiser_block(q, nu_q, config, n_iter=1, b_init=None, tol=0.0):
    """Iterate the ``b``/``c`` block on a fixed ``(q, nu_q)``.

    Runs at most ``n_iter`` passes, stopping early once the normalized change
    of ``b_hat`` drops below ``tol``.  Returns ``(x_hat, b_hat, c_hat)``;
    ``b`` starts from ``b_init`` (ones by default) with unit variance.
    """
    K = q.shape[0]
    b_hat = np.ones(K, dtype=q.dtype) if b_init is None else np.array(b_init, dtype=q.dtype)
    nu_b = np.ones(K)
    b_hat, nu_b = _pin(config, b_hat, nu_b)
    b_fwd = nu_b_fwd = None
    for _ in range(n_iter):
        out = _bc_block(q, nu_q, b_hat, nu_b, b_fwd, nu_b_fwd, config, True)
        b_prev = b_hat
        c_hat, b_hat, nu_b, b_fwd, nu_b_fwd, x_hat = out[2], out[4], out[5], out[6], out[7], out[12]
        nb = np.sum(np.abs(b_hat) ** 2)
        if nb > 0 and np.sum(np.abs(b_hat - b_prev) ** 2) / nb < tol:
            break
    return x_hat, b_hat, c_hat


def biutamp_iteration(state: BiUtampState, tmodel: TransformedModel, config: BiUtampConfig,
                      update_b: Optional[bool] = None) -> BiUtampState:
    """One pass of lines 1-31 (forward UTAMP block, EP for ``c`` and ``b``,
    backward messages, recombination of ``x``).  Returns a new state."""
    Phi, phi = tmodel.Phi, tmodel.phi
    r = _as_columns(tmodel.r)
    K, N = tmodel.K, tmodel.N
    M, L = r.shape
    st = state
    if update_b is None:
        update_b = _updates_b(config, state.iteration)

    # UTAMP module
    nu_p = phi.T @ st.nu_x
    p = Phi @ st.x_hat.reshape(K * N, L) - nu_p * st.s
    beta = st.beta
    denom = 1.0 + beta * nu_p
    nu_z = nu_p / denom
    z_hat = (beta * nu_p * r + p) / denom
    if not (np.all(np.isfinite(z_hat)) and np.all(np.isfinite(nu_z))):
        raise DivergenceError(f"non-finite state at iteration {state.iteration + 1}",
                              iteration=state.iteration + 1, last_state=state)
    if config.beta is None:
        try:
            beta = float(np.clip(estimate_beta(r, z_hat, nu_z), config.beta_min, config.beta_max))
        except DegenerateModelError:
            # exact fit: the precision saturates at its cap
            beta = config.beta_max
    nu_s = 1.0 / (nu_p + 1.0 / beta)
    s_new = nu_s * (r - p)
    if config.damping < 1.0:
        s_new = (1.0 - config.damping) * st.s + config.damping * s_new
    nu_q = N / (phi @ nu_s)
    q = st.x_hat + nu_q[:, None, :] * (Phi.conj().T @ s_new).reshape(K, N, L)

    (c_fwd, nu_c_fwd, c_hat, nu_c, b_hat, nu_b, b_fwd, nu_b_fwd, b_bwd, nu_b_bwd,
     c_bwd_k, nu_c_bwd, x_hat, nu_x, n_clamp) = _bc_block(
        q, nu_q, st.b_hat, st.nu_b, st.b_fwd, st.nu_b_fwd, config, update_b)

    new = BiUtampState(
        x_hat=x_hat, nu_x=nu_x, s=s_new, b_hat=b_hat, nu_b=nu_b, beta=beta,
        iteration=state.iteration + 1, p=p, nu_p=nu_p, z_hat=z_hat, nu_z=nu_z, nu_s=nu_s,
        q=q, nu_q=nu_q, c_fwd=c_fwd, nu_c_fwd=nu_c_fwd, c_hat=c_hat, nu_c=nu_c,
        b_fwd=b_fwd, nu_b_fwd=nu_b_fwd, b_bwd=b_bwd, nu_b_bwd=nu_b_bwd,
        c_bwd=c_bwd_k, nu_c_bwd=nu_c_bwd, clamp_count=state.clamp_count + n_clamp,
    )
    if not new.finite():
        raise DivergenceError(f"non-finite state at iteration {new.iteration}",
                              iteration=new.iteration, last_state=state)
    return new


def biutamp_smv_iteration(state, tmodel, config):
    """Single-measurement-vector iteration (``tmodel.r`` is a vector)."""
    if np.ndim(tmodel.r) != 1:
        raise DimensionError("SMV iteration expects a vector of observations")
    return biutamp_iteration(state, tmodel, config)


def biutamp_mmv_iteration(state, tmodel, config):
    """Multiple-measurement-vector iteration: shared ``b`` and noise precision."""
    return biutamp_iteration(state, tmodel, config)


def lifted_residual(tmodel, b_hat, c_hat):
    """``||r - Phi (b (x) c)||^2`` summed over columns."""
    r = _as_columns(tmodel.r)
    C = c_hat[:, None] if c_hat.ndim == 1 else c_hat
    x = b_hat[:, None, None] * C[None]
    return float(np.sum(np.abs(r - tmodel.Phi @ x.reshape(-1, C.shape[1])) ** 2))


def _restart_init(config, K, i):
    if i == 0 and config.b_init is not None:
        return np.asarray(config.b_init)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(i,)))
    return rng.standard_normal(K)


def _truth_metrics(trace, state, truth, squeeze):
    b_true, c_true = truth
    c_hat = state.c_hat[:, 0] if squeeze else state.c_hat
    for name, est, ref in (("nmse_b", state.b_hat, b_true), ("nmse_c", c_hat, c_true)):
        ref = np.asarray(ref)
        nrm = np.sum(np.abs(ref) ** 2)
        trace.setdefault(name, []).append(
            float(np.sum(np.abs(est - ref) ** 2) / nrm) if nrm > 0 else np.nan)


def run_biutamp(tmodel: TransformedModel, config: BiUtampConfig, truth=None) -> BiUtampResult:
    """Run Bi-UTAMP with restarts and pick the restart with the smallest
    residual ``||r - Phi (b_hat (x) c_hat)||^2``.

    Parameters
    ----------
    tmodel : TransformedModel
    config : BiUtampConfig
    truth : tuple (b, c), optional
        Enables per-iteration NMSE entries in the trace.

    Raises
    ------
    DivergenceError
        If every restart diverged; ``details`` lists per-restart status and
        ``last_state`` is the best last finite state.
    """
    t0 = time.perf_counter()
    squeeze = np.ndim(tmodel.r) == 1
    runs = []
    status = []
    for i in range(config.n_restarts):
        state = init_state(tmodel, config, _restart_init(config, tmodel.K, i))
        trace = {"residual": [], "beta": [], "clamp_count": []}
        converged = False
        last_b = state.b_hat.copy()
        last_c = None
        try:
            for t in range(config.max_iterations):
                updated_b = _updates_b(config, t, config.warmup_for(i))
                state = biutamp_iteration(state, tmodel, config, update_b=updated_b)
                trace["residual"].append(lifted_residual(tmodel, state.b_hat, state.c_hat))
                trace["beta"].append(state.beta)
                trace["clamp_count"].append(state.clamp_count)
                if truth is not None:
                    _truth_metrics(trace, state, truth, squeeze)
                if last_c is not None and updated_b:
                    nb = np.sum(np.abs(state.b_hat) ** 2)
                    nc = np.sum(np.abs(state.c_hat) ** 2)
                    db = np.sum(np.abs(state.b_hat - last_b) ** 2) / nb if nb > 0 else np.inf
                    dc = np.sum(np.abs(state.c_hat - last_c) ** 2) / nc if nc > 0 else np.inf
                    if max(db, dc) < config.tol:
                        converged = True
                if updated_b:
                    last_b = state.b_hat.copy()
                    last_c = state.c_hat.copy()
                if converged:
                    break
            status.append("converged" if converged else "max_iterations")
            runs.append((trace["residual"][-1], i, state, trace, converged))
        except DivergenceError as err:
            status.append("diverged")
            last = err.last_state
            if last is not None and last.c_hat is not None:
                runs.append((np.inf, i, last, trace, False))
    finite = [run for run in runs if np.isfinite(run[0])]
    if not finite:
        best = runs[0][2] if runs else None
        raise DivergenceError("all restarts diverged", iteration=None, last_state=best, details=status)
    residual, idx, state, trace, converged = min(finite, key=lambda run: (run[0], run[1]))
    c_hat = state.c_hat[:, 0] if squeeze else state.c_hat
    return BiUtampResult(
        b_hat=state.b_hat.copy(), c_hat=c_hat.copy(), beta=state.beta,
        iterations_used=state.iteration, restart_index_selected=idx, trace=trace,
        converged=converged, clamp_count=state.clamp_count, residual=residual,
        restart_status=status, runtime=time.perf_counter() - t0, state=state,
    )


def run_biutamp_smv(tmodel, config, truth=None):
    if np.ndim(tmodel.r) != 1:
        raise DimensionError("SMV solver expects a vector of observations")
    return run_biutamp(tmodel, config, truth)


def run_biutamp_mmv(tmodel, config, truth=None):
    return run_biutamp(tmodel, config, truth)
