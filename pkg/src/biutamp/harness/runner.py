"""Monte-Carlo sweeps: instance generation, solver runs, aggregation and CSV output."""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional

import numpy as np

from ..amp import AmpConfig, run_utamp_v2, transform_linear
from ..bilinear import BiUtampConfig, run_biutamp
from ..denoisers import BernoulliGaussianPrior, GaussianPrior, NonInformativePrior
from ..exceptions import DivergenceError
from ..metrics import nmse, nmse_ambiguous, oracle_bound_b, oracle_bound_c, oracle_support_mse, to_db
from ..model_transform import build_lifted, unitary_transform
from ..problems import (Correlated, IllConditioned, NonZeroMean, add_noise, family_from_dict, gen_cs_mu,
                        gen_dl, gen_matrix)
from ..state_evolution import MseTable, build_mse_table, predict_biutamp, run_se
from .config import ExperimentSpec

CSV_COLUMNS = ("experiment", "axis", "axis_value", "solver", "metric", "value_db", "runtime_s",
               "n_trials", "divergence_rate", "seed")

# spawn key reserved for the SE table, outside the (axis, trial) key space
_TABLE_KEY = (2**31 - 1,)


def trial_seed(master, axis_index, trial):
    """Seed of trial ``trial`` at sweep point ``axis_index``.

    Counter based: it depends only on the three integers, so a trial draws
    the same numbers whatever the execution order or worker count.
    """
    return np.random.SeedSequence(master, spawn_key=(axis_index, trial))


def _split(ss):
    inst_ss, solver_ss = ss.spawn(2)
    return np.random.default_rng(inst_ss), int(solver_ss.generate_state(1)[0])


def _family(spec: ExperimentSpec, value):
    base = family_from_dict(spec.family) if spec.family else Correlated(0.0)
    if spec.axis == "rho":
        return Correlated(float(value))
    if spec.axis == "kappa":
        return IllConditioned(float(value))
    if spec.axis == "mu":
        return NonZeroMean(float(value), 1.0)
    return base


def _snr(spec: ExperimentSpec, value):
    return float(value) if spec.axis == "snr" else float(spec.snr_db)


def _sparsity(spec: ExperimentSpec):
    if spec.sparsity is not None:
        return spec.sparsity
    return spec.dims["S"] / spec.dims["N"]


def _prior_b(spec):
    return NonInformativePrior() if spec.solver["prior_b"] == "noninformative" else GaussianPrior()


def _biutamp_config(spec, seed, beta, pin_first):
    s = spec.solver
    warm = s["b_warmup"]
    return BiUtampConfig(
        prior_b=_prior_b(spec), prior_c=BernoulliGaussianPrior(_sparsity(spec)),
        pin_first=pin_first, damping=s["damping"], max_iterations=s["max_iterations"],
        n_restarts=s["n_restarts"], tol=s["tol"], thinning=s["thinning"],
        b_warmup=tuple(warm) if isinstance(warm, list) else warm,
        beta=beta if s["known_noise"] else None, seed=seed,
    )


def _outcome(metrics, runtime, diverged=False, clamps=0):
    return {"metrics": metrics, "runtime": runtime, "diverged": diverged, "clamps": clamps}


def _capped(value, diverged):
    if not np.isfinite(value):
        return 1.0
    return min(value, 1.0) if diverged else value


def _run_bilinear(tm, cfg):
    """Returns ``(b_hat, c_hat, diverged, clamp_count)``; a run whose restarts
    all diverged falls back to the last finite iterate."""
    try:
        res = run_biutamp(tm, cfg)
        return res.b_hat, res.c_hat, False, res.clamp_count
    except DivergenceError as err:
        st = err.last_state
        if st is None or st.c_hat is None:
            return None, None, True, 0
        c = st.c_hat[:, 0] if np.ndim(tm.r) == 1 else st.c_hat
        return st.b_hat, c, True, st.clamp_count


def smv_trial(spec: ExperimentSpec, axis_index, trial, table: Optional[MseTable] = None):
    value = spec.values[axis_index]
    rng, seed = _split(trial_seed(spec.seed, axis_index, trial))
    d = spec.dims
    inst = gen_cs_mu(d["K"], d["N"], d["M"], d["S"], _snr(spec, value), _family(spec, value), rng)
    pin = spec.solver["pin_first"]
    out = {}
    tm = None
    if "biutamp" in spec.solvers or "se_prediction" in spec.solvers:
        t0 = time.perf_counter()
        tm = unitary_transform(build_lifted(inst.blocks), inst.y)
    if "biutamp" in spec.solvers:
        cfg = _biutamp_config(spec, seed, inst.beta, pin)
        b_hat, c_hat, div, clamps = _run_bilinear(tm, cfg)
        runtime = time.perf_counter() - t0
        if b_hat is None:
            nb = nc = 1.0
        else:
            sel = slice(1, None) if pin else slice(None)
            if pin:
                nb = nmse(b_hat[sel], inst.b[sel])
                nc = nmse(c_hat, inst.c)
            else:
                nb = nmse_ambiguous(b_hat, inst.b)[0]
                nc = nmse_ambiguous(c_hat, inst.c)[0]
        out["biutamp"] = _outcome({"nmse_b": _capped(nb, div), "nmse_c": _capped(nc, div)},
                                  runtime, div, clamps)
    if "utamp_mismatch" in spec.solvers:
        t0 = time.perf_counter()
        s = spec.solver
        cfg = AmpConfig(prior=BernoulliGaussianPrior(_sparsity(spec)),
                        beta=inst.beta if s["known_noise"] else "estimate",
                        max_iterations=s["max_iterations"], tol=s["tol"])
        div = False
        try:
            x_hat = run_utamp_v2(transform_linear(inst.blocks[0], inst.y), cfg).x_hat
        except DivergenceError as err:
            div = True
            x_hat = err.last_state.x_hat if err.last_state is not None else np.zeros_like(inst.c)
        runtime = time.perf_counter() - t0
        out["utamp_mismatch"] = _outcome({"nmse_c": _capped(nmse(x_hat, inst.c), div)}, runtime, div)
    if "oracle" in spec.solvers:
        metrics = {"nmse_c": oracle_bound_c(inst)}
        if inst.b.size > (1 if pin else 0):
            metrics["nmse_b"] = oracle_bound_b(inst, pin_first=pin)
        out["oracle"] = _outcome(metrics, 0.0)
    if "se_prediction" in spec.solvers and table is not None:
        iters = int(spec.se.get("iterations", 100))
        pred = predict_biutamp(table, tm.lam, 1.0 / inst.beta, d["N"] * d["K"], iters)
        out["se_prediction"] = _outcome({"nmse_b": float(pred.nmse_b[-1]),
                                         "nmse_c": float(pred.nmse_c[-1])}, 0.0)
    return out


def dl_trial(spec: ExperimentSpec, axis_index, trial, table=None):
    value = spec.values[axis_index]
    rng, seed = _split(trial_seed(spec.seed, axis_index, trial))
    d = spec.dims
    inst = gen_dl(d["M"], d["N"], d["K"], d["L"], d["S"], _snr(spec, value), _family(spec, value), rng)
    t0 = time.perf_counter()
    tm = unitary_transform(build_lifted(inst.blocks), inst.Y)
    cfg = _biutamp_config(spec, seed, inst.beta, spec.solver["pin_first"])
    b_hat, C_hat, div, clamps = _run_bilinear(tm, cfg)
    runtime = time.perf_counter() - t0
    if b_hat is None:
        na = nc = 1.0
    else:
        na = nmse_ambiguous(np.tensordot(b_hat, np.asarray(inst.blocks), axes=1), inst.A_b)[0]
        nc = nmse_ambiguous(C_hat, inst.C)[0]
    return {"biutamp": _outcome({"nmse_A": _capped(na, div), "nmse_C": _capped(nc, div)},
                                runtime, div, clamps)}


def family_labels(spec: ExperimentSpec):
    fams = spec.families or ([spec.family] if spec.family else [{"family": "iid"}])
    labels = []
    for f in fams:
        name = f["family"]
        labels.append(name if name not in labels else f"{name}{len(labels)}")
    return fams, labels


def se_check_trial(spec: ExperimentSpec, axis_index, trial, table=None):
    """One Monte-Carlo draw for every family; returns per-iteration MSE curves.

    ``axis_index`` is unused (all iterations come from one run); the trial
    seed uses sweep index 0.
    """
    fams, labels = family_labels(spec)
    T = spec.max_iteration
    M, N = spec.dims["M"], spec.dims["N"]
    prior = BernoulliGaussianPrior(spec.sparsity if spec.sparsity is not None else 0.1)
    snr = float(spec.snr_db)
    out = {}
    for j, (fd, label) in enumerate(zip(fams, labels)):
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(0, trial, j)))
        A = gen_matrix(family_from_dict(fd), M, N, rng)
        x = prior.sample(rng, N)
        y, beta = add_noise(A @ x, snr, rng)
        t0 = time.perf_counter()
        tm = transform_linear(A, y)
        cfg = AmpConfig(prior=prior, beta=beta if spec.solver["known_noise"] else "estimate",
                        max_iterations=T, tol=0.0, tau_x0=prior.second_moment)
        div = False
        try:
            mse = list(run_utamp_v2(tm, cfg, x_true=x).trace["mse"])
        except DivergenceError as err:
            div = True
            mse = []
            if err.last_state is not None:
                mse = [float(np.mean((err.last_state.x_hat - x) ** 2))]
        runtime = time.perf_counter() - t0
        x2 = float(np.mean(x**2)) if np.any(x) else prior.second_moment
        fill = min(mse[-1], x2) if (mse and np.isfinite(mse[-1])) else x2
        mse = (mse + [fill] * T)[:T]
        if "utamp_v2" in spec.solvers:
            out[f"utamp_v2[{label}]"] = _outcome({"mse_x": np.array(mse)}, runtime, div)
        if "se" in spec.solvers:
            n_mc = spec.se.get("n_mc")
            traj = run_se(prior, tm.lam, 1.0 / beta, N, T, n_mc=n_mc,
                          seed=None if n_mc is None else int(rng.integers(2**32)))
            out[f"se[{label}]"] = _outcome({"mse_x": traj.v_x}, 0.0)
        if "oracle" in spec.solvers:
            out[f"oracle[{label}]"] = _outcome({"mse_x": oracle_support_mse(A, y, x, beta)}, 0.0)
    return out


_TRIALS = {"smv_cs_mu": smv_trial, "mmv_dl": dl_trial, "utamp_se_check": se_check_trial}


def _task(args):
    spec, axis_index, trial, table = args
    return _TRIALS[spec.experiment](spec, axis_index, trial, table)


def _threads(threads):
    if threads is None:
        env = os.environ.get("BIUTAMP_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def build_table(spec: ExperimentSpec, threads=1):
    if spec.experiment != "smv_cs_mu" or "se_prediction" not in spec.solvers:
        return None
    d = spec.dims
    ss = np.random.SeedSequence(spec.seed, spawn_key=_TABLE_KEY)
    return build_mse_table(_prior_b(spec), BernoulliGaussianPrior(_sparsity(spec)), d["K"], d["N"],
                           n_mc=int(spec.se.get("n_mc", 100_000)), seed=ss,
                           pin_first=spec.solver["pin_first"], threads=threads)


def run_trials(spec: ExperimentSpec, threads=None):
    """Run every (axis point, trial) pair; results come back in task order."""
    threads = _threads(threads)
    table = build_table(spec, threads)
    points = [0] if spec.experiment == "utamp_se_check" else range(len(spec.values))
    tasks = [(spec, a, t, table) for a in points for t in range(spec.trials)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        results = [_task(t) for t in tasks]
    grouped: Dict[int, List[dict]] = {}
    for (_, a, _, _), res in zip(tasks, results):
        grouped.setdefault(a, []).append(res)
    return grouped


def _fmt(x):
    return f"{x:.6f}"


def _fmt_axis(v):
    return repr(int(v)) if float(v) == int(v) else repr(float(v))


def aggregate(spec: ExperimentSpec, grouped) -> List[dict]:
    """Average linear metrics over trials (then dB) into CSV rows."""
    rows = []

    def emit(axis_value, solver, metric, values, runtimes, diverged):
        rows.append({
            "experiment": spec.experiment,
            "axis": spec.axis,
            "axis_value": _fmt_axis(axis_value),
            "solver": solver,
            "metric": metric,
            "value_db": _fmt(to_db(float(np.mean(values)))),
            "runtime_s": _fmt(float(np.mean(runtimes))) if spec.record_runtime else "",
            "n_trials": str(len(values)),
            "divergence_rate": _fmt(float(np.mean(diverged))),
            "seed": str(spec.seed),
        })

    if spec.experiment == "utamp_se_check":
        trials = grouped[0]
        solvers = list(trials[0].keys())
        for it in spec.values:
            t = int(it) - 1
            for s in solvers:
                vals = [np.atleast_1d(tr[s]["metrics"]["mse_x"]) for tr in trials]
                vals = [v[t] if v.size > 1 else v[0] for v in vals]
                emit(it, s, "mse_x", vals, [tr[s]["runtime"] for tr in trials],
                     [tr[s]["diverged"] for tr in trials])
        return rows

    for a, value in enumerate(spec.values):
        trials = grouped[a]
        for s in spec.solvers:
            present = [tr[s] for tr in trials if s in tr]
            if not present:
                continue
            for metric in present[0]["metrics"]:
                emit(value, s, metric, [p["metrics"][metric] for p in present],
                     [p["runtime"] for p in present], [p["diverged"] for p in present])
    return rows


def clamp_counts(grouped):
    """Total EP clamp events per solver (accounting for the safeguard)."""
    totals: Dict[str, int] = {}
    for trials in grouped.values():
        for tr in trials:
            for s, o in tr.items():
                totals[s] = totals.get(s, 0) + int(o.get("clamps", 0))
    return totals


def write_csv(rows, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def run_experiment(spec: ExperimentSpec, threads=None, out_dir=None):
    """Run a sweep and write ``<out>/<experiment>.csv``.  Returns ``(rows, path)``."""
    grouped = run_trials(spec, threads)
    rows = aggregate(spec, grouped)
    out_dir = out_dir or spec.out
    path = os.path.join(out_dir, f"{spec.experiment}.csv")
    write_csv(rows, path)
    return rows, path
