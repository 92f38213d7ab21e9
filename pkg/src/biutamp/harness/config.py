"""Experiment specifications: schema, presets and loading."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import jsonschema
import yaml

from ..exceptions import DomainError

EXPERIMENTS = ("smv_cs_mu", "mmv_dl", "utamp_se_check")
AXES = ("snr", "rho", "kappa", "mu", "iteration")
SOLVERS = {
    "smv_cs_mu": ("biutamp", "utamp_mismatch", "oracle", "se_prediction"),
    "mmv_dl": ("biutamp",),
    "utamp_se_check": ("utamp_v2", "se", "oracle"),
}

_family = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["iid", "correlated", "ill_conditioned", "low_rank", "nonzero_mean"]},
        "mean": {"type": "number"},
        "variance": {"type": "number", "exclusiveMinimum": 0},
        "rho": {"type": "number", "minimum": 0, "maximum": 1},
        "kappa": {"type": "number", "minimum": 1},
        "rank": {"type": "integer", "minimum": 1},
        "mu": {"type": "number"},
    },
    "additionalProperties": False,
}

SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "biutamp experiment",
    "type": "object",
    "required": ["experiment", "axis", "values", "trials", "dims"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "axis": {"enum": list(AXES)},
        "values": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "snr_db": {"type": "number"},
        "dims": {
            "type": "object",
            "required": ["M", "N"],
            "properties": {k: {"type": "integer", "minimum": 1} for k in ("M", "N", "K", "L", "S")},
            "additionalProperties": False,
        },
        "family": _family,
        "families": {"type": "array", "minItems": 1, "items": _family},
        "sparsity": {"type": "number", "minimum": 0, "maximum": 1},
        "solvers": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "solver": {
            "type": "object",
            "properties": {
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "max_iterations": {"type": "integer", "minimum": 1},
                "n_restarts": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "minimum": 0},
                "thinning": {"type": "integer", "minimum": 1},
                "b_warmup": {"oneOf": [
                    {"type": "integer", "minimum": 0},
                    {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
                ]},
                "prior_b": {"enum": ["gaussian", "noninformative"]},
                "pin_first": {"type": "boolean"},
                "known_noise": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "se": {
            "type": "object",
            "properties": {
                "n_mc": {"type": "integer", "minimum": 1},
                "iterations": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "record_runtime": {"type": "boolean"},
        "out": {"type": "string"},
    },
    "additionalProperties": False,
}

_SOLVER_DEFAULTS = {
    "damping": 1.0,
    "max_iterations": 200,
    "n_restarts": 1,
    "tol": 1e-6,
    "thinning": 1,
    "b_warmup": 0,
    "prior_b": "gaussian",
    "pin_first": True,
    "known_noise": False,
}

_SMV_SOLVER = {"damping": 0.8, "max_iterations": 200, "n_restarts": 24, "tol": 1e-8,
               "b_warmup": [0, 3, 3], "pin_first": True}

PRESETS: Dict[str, Dict[str, Any]] = {
    "paper-smv": {
        "experiment": "smv_cs_mu",
        "axis": "snr",
        "values": [10, 20, 30, 40, 50],
        "trials": 50,
        "seed": 0,
        "dims": {"M": 150, "N": 256, "K": 11, "S": 10},
        "family": {"family": "correlated", "rho": 0.3},
        "solvers": ["biutamp", "utamp_mismatch", "oracle"],
        "solver": dict(_SMV_SOLVER),
    },
    "quick": {
        "experiment": "smv_cs_mu",
        "axis": "snr",
        "values": [20, 40],
        "trials": 10,
        "seed": 0,
        "dims": {"M": 60, "N": 100, "K": 5, "S": 5},
        "family": {"family": "correlated", "rho": 0.3},
        "solvers": ["biutamp", "utamp_mismatch", "oracle"],
        "solver": dict(_SMV_SOLVER, n_restarts=10),
    },
    "paper-dl": {
        "experiment": "mmv_dl",
        "axis": "rho",
        "values": [0.0, 0.1],
        "trials": 20,
        "seed": 0,
        "snr_db": 40,
        "dims": {"M": 100, "N": 100, "K": 100, "L": 5, "S": 20},
        "solvers": ["biutamp"],
        "solver": {"damping": 0.55, "max_iterations": 100, "n_restarts": 10, "tol": 1e-8,
                   "thinning": 2, "pin_first": False},
    },
    "fig1": {
        "experiment": "utamp_se_check",
        "axis": "iteration",
        "values": list(range(1, 31)),
        "trials": 50,
        "seed": 0,
        "snr_db": 50,
        "sparsity": 0.1,
        "dims": {"M": 800, "N": 1000},
        "families": [{"family": "low_rank", "rank": 500},
                     {"family": "nonzero_mean", "mu": 10.0, "variance": 1.0}],
        "solvers": ["utamp_v2", "se", "oracle"],
        "solver": {"known_noise": True},
    },
}


@dataclass
class ExperimentSpec:
    experiment: str
    axis: str
    values: List[float]
    trials: int
    dims: Dict[str, int]
    seed: int = 0
    snr_db: float = 40.0
    family: Optional[Dict[str, Any]] = None
    families: Optional[List[Dict[str, Any]]] = None
    sparsity: Optional[float] = None
    solvers: List[str] = field(default_factory=list)
    solver: Dict[str, Any] = field(default_factory=dict)
    se: Dict[str, Any] = field(default_factory=dict)
    record_runtime: bool = False
    out: str = "results"

    def __post_init__(self):
        allowed = SOLVERS[self.experiment]
        if not self.solvers:
            self.solvers = list(allowed[:1]) if self.experiment != "utamp_se_check" else list(allowed)
        bad = [s for s in self.solvers if s not in allowed]
        if bad:
            raise DomainError(f"solvers {bad} not available for {self.experiment}; choose from {allowed}")
        if self.experiment == "utamp_se_check" and self.axis != "iteration":
            raise DomainError("utamp_se_check sweeps the iteration axis")
        if self.experiment != "utamp_se_check" and self.axis == "iteration":
            raise DomainError("the iteration axis is only used by utamp_se_check")
        if self.experiment == "utamp_se_check":
            if any(v != int(v) or v < 1 for v in self.values):
                raise DomainError("iteration values must be positive integers")
        elif "K" not in self.dims or "S" not in self.dims:
            raise DomainError("dims must define K and S")
        self.solver = {**_SOLVER_DEFAULTS, **self.solver}
        if self.experiment == "mmv_dl" and "L" not in self.dims:
            raise DomainError("mmv_dl needs dims.L")

    @property
    def max_iteration(self):
        return int(max(self.values))

    def to_dict(self):
        return {
            "experiment": self.experiment, "axis": self.axis, "values": list(self.values),
            "trials": self.trials, "dims": dict(self.dims), "seed": self.seed,
            "snr_db": self.snr_db, "family": self.family, "families": self.families,
            "sparsity": self.sparsity, "solvers": list(self.solvers), "solver": dict(self.solver),
            "se": dict(self.se), "record_runtime": self.record_runtime, "out": self.out,
        }


def schema_text():
    return json.dumps(SCHEMA, indent=2, sort_keys=True)


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw: Dict[str, Any]):
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise DomainError(f"invalid experiment config at {where}: {err.message}") from None


def load_spec(path=None, preset=None, overrides=None) -> ExperimentSpec:
    """Build a spec from a preset, then a YAML/JSON file, then explicit overrides."""
    raw: Dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise DomainError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        raw = copy.deepcopy(PRESETS[preset])
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise DomainError(f"{path}: top level must be a mapping")
        raw = _merge(raw, loaded)
    if overrides:
        raw = _merge(raw, {k: v for k, v in overrides.items() if v is not None})
    if not raw:
        raise DomainError("no configuration given (use --config or --preset)")
    validate(raw)
    return ExperimentSpec(**raw)
