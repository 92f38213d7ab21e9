"""Synthetic problem generators: matrix families, CS with matrix uncertainty
and structured dictionary learning, with per-instance SNR calibration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import toeplitz

from .exceptions import DimensionError, DomainError

__all__ = [
    "MatrixFamily",
    "IidGaussian",
    "Correlated",
    "IllConditioned",
    "LowRank",
    "NonZeroMean",
    "family_from_dict",
    "gen_matrix",
    "CsMuInstance",
    "DlInstance",
    "gen_cs_mu",
    "gen_dl",
    "add_noise",
    "save_instance",
    "load_instance",
]


class MatrixFamily:
    name = "base"

    def to_dict(self):
        return {"family": self.name, **asdict(self)}


@dataclass(frozen=True)
class IidGaussian(MatrixFamily):
    mean: float = 0.0
    variance: float = 1.0
    name = "iid"

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError("variance must be > 0")


@dataclass(frozen=True)
class Correlated(MatrixFamily):
    rho: float = 0.0
    name = "correlated"

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must lie in [0, 1], got {self.rho}")


@dataclass(frozen=True)
class IllConditioned(MatrixFamily):
    kappa: float = 1.0
    name = "ill_conditioned"

    def __post_init__(self):
        if not self.kappa >= 1.0:
            raise DomainError(f"kappa must be >= 1, got {self.kappa}")


@dataclass(frozen=True)
class LowRank(MatrixFamily):
    rank: int = 1
    name = "low_rank"

    def __post_init__(self):
        if self.rank < 1:
            raise DomainError("rank must be >= 1")


@dataclass(frozen=True)
class NonZeroMean(MatrixFamily):
    mu: float = 0.0
    variance: float = 1.0
    name = "nonzero_mean"

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError("variance must be > 0")


_FAMILIES = {cls.name: cls for cls in (IidGaussian, Correlated, IllConditioned, LowRank, NonZeroMean)}


def family_from_dict(d):
    d = dict(d)
    name = d.pop("family")
    try:
        return _FAMILIES[name](**d)
    except KeyError:
        raise DomainError(f"unknown matrix family {name!r}") from None


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _haar_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def gen_matrix(family: MatrixFamily, M: int, N: int, seed=None) -> np.ndarray:
    """Draw an ``M x N`` matrix from ``family``."""
    rng = _rng(seed)
    if isinstance(family, IidGaussian):
        return family.mean + np.sqrt(family.variance) * rng.standard_normal((M, N))
    if isinstance(family, NonZeroMean):
        return family.mu + np.sqrt(family.variance) * rng.standard_normal((M, N))
    if isinstance(family, Correlated):
        G = rng.standard_normal((M, N))
        if family.rho == 0.0:
            return G
        CL = toeplitz(family.rho ** np.arange(M))
        CR = toeplitz(family.rho ** np.arange(N))
        return CL @ G @ CR
    if isinstance(family, IllConditioned):
        r = min(M, N)
        U = _haar_orthogonal(rng, M)[:, :r]
        V = _haar_orthogonal(rng, N)[:r, :]
        if r > 1:
            sv = family.kappa ** (-np.arange(r) / (r - 1))
        else:
            sv = np.ones(1)
        sv = sv / np.sqrt(np.mean(sv**2))
        return (U * sv) @ V
    if isinstance(family, LowRank):
        if family.rank > min(M, N):
            raise DomainError(f"rank {family.rank} exceeds min(M, N) = {min(M, N)}")
        return rng.standard_normal((M, family.rank)) @ rng.standard_normal((family.rank, N))
    raise DomainError(f"unsupported family {family!r}")


def add_noise(signal, snr_db, rng):
    """Add white Gaussian noise scaled so the realized SNR equals ``snr_db``.

    Returns ``(y, beta)``; ``snr_db = inf`` or a zero signal gives ``w = 0``
    and ``beta = inf``.
    """
    signal = np.asarray(signal, dtype=float)
    if np.isinf(snr_db) or not np.any(signal):
        return signal.copy(), np.inf
    w = rng.standard_normal(signal.shape)
    p_sig = np.sum(signal**2)
    target = p_sig / 10.0 ** (snr_db / 10.0)
    w *= np.sqrt(target / np.sum(w**2))
    sigma2 = target / signal.size
    return signal + w, 1.0 / sigma2


@dataclass
class CsMuInstance:
    blocks: List[np.ndarray]
    b: np.ndarray
    c: np.ndarray
    y: np.ndarray
    beta: float
    snr_db: float
    family: Optional[MatrixFamily] = None
    seed: Optional[int] = None

    @property
    def A_b(self):
        return np.tensordot(self.b, np.asarray(self.blocks), axes=1)

    @property
    def support(self):
        return np.flatnonzero(self.c)


@dataclass
class DlInstance:
    blocks: List[np.ndarray]
    b: np.ndarray
    C: np.ndarray
    Y: np.ndarray
    beta: float
    snr_db: float
    family: Optional[MatrixFamily] = None
    seed: Optional[int] = None

    @property
    def A_b(self):
        return np.tensordot(self.b, np.asarray(self.blocks), axes=1)


def _sparse_vector(rng, N, S):
    c = np.zeros(N)
    idx = rng.choice(N, size=S, replace=False)
    c[idx] = rng.standard_normal(S)
    return c


def _draw_blocks(rng, family, M, N, K, first_variance=None):
    blocks = []
    for k in range(K):
        fam = family
        if k == 0 and first_variance is not None and isinstance(family, NonZeroMean):
            fam = NonZeroMean(family.mu, first_variance)
        blocks.append(gen_matrix(fam, M, N, rng))
    return blocks


def gen_cs_mu(K, N, M, S, snr_db, family: MatrixFamily = Correlated(0.0), seed=None) -> CsMuInstance:
    """Compressive sensing with matrix uncertainty.

    ``b_1 = 1`` and ``b_2..b_K ~ N(0, 1)``; ``c`` has ``S`` N(0, 1) non-zeros on
    a uniformly drawn support.  For the non-zero-mean family ``A_1`` uses
    variance 20.
    """
    if K < 1:
        raise DomainError("K must be >= 1")
    if not 0 <= S <= N:
        raise DomainError(f"S must lie in [0, N], got {S}")
    rng = _rng(seed)
    blocks = _draw_blocks(rng, family, M, N, K, first_variance=20.0)
    b = np.concatenate([[1.0], rng.standard_normal(K - 1)])
    c = _sparse_vector(rng, N, S)
    signal = np.tensordot(b, np.asarray(blocks), axes=1) @ c
    y, beta = add_noise(signal, snr_db, rng)
    return CsMuInstance(blocks, b, c, y, beta, snr_db, family, seed if isinstance(seed, int) else None)


def gen_dl(M, N, K, L, S, snr_db, family: MatrixFamily = Correlated(0.0), seed=None) -> DlInstance:
    """Structured dictionary learning: ``Y = (sum_k b_k A_k) C + W``.

    All of ``b`` is drawn from N(0, 1); each column of ``C`` has ``S``
    non-zeros, columns drawn independently.
    """
    if K < 1 or L < 1:
        raise DomainError("K and L must be >= 1")
    if not 0 <= S <= N:
        raise DomainError(f"S must lie in [0, N], got {S}")
    rng = _rng(seed)
    blocks = _draw_blocks(rng, family, M, N, K)
    b = rng.standard_normal(K)
    C = np.stack([_sparse_vector(rng, N, S) for _ in range(L)], axis=1)
    signal = np.tensordot(b, np.asarray(blocks), axes=1) @ C
    Y, beta = add_noise(signal, snr_db, rng)
    return DlInstance(blocks, b, C, Y, beta, snr_db, family, seed if isinstance(seed, int) else None)


def save_instance(path, inst):
    """Write an instance to a ``.npz`` bundle.

    Arrays are stored row-major (C order) under their field names; the
    ``header`` entry is a JSON string with ``kind``, dimensions, SNR, seed and
    the matrix family.
    """
    kind = "cs_mu" if isinstance(inst, CsMuInstance) else "dl"
    blocks = np.ascontiguousarray(np.asarray(inst.blocks))
    K, M, N = blocks.shape
    header = {
        "kind": kind,
        "M": M,
        "N": N,
        "K": K,
        "snr_db": inst.snr_db,
        "beta": inst.beta,
        "seed": inst.seed,
        "family": inst.family.to_dict() if inst.family is not None else None,
    }
    arrays = {"blocks": blocks, "b": inst.b}
    if kind == "cs_mu":
        arrays.update(c=inst.c, y=inst.y)
    else:
        arrays.update(C=inst.C, Y=inst.Y)
    np.savez(path, header=np.array(json.dumps(header)), **arrays)


def load_instance(path):
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        blocks = list(data["blocks"])
        fam = family_from_dict(header["family"]) if header["family"] else None
        if header["kind"] == "cs_mu":
            return CsMuInstance(blocks, data["b"], data["c"], data["y"], header["beta"],
                                header["snr_db"], fam, header["seed"])
        if header["kind"] == "dl":
            return DlInstance(blocks, data["b"], data["C"], data["Y"], header["beta"],
                              header["snr_db"], fam, header["seed"])
    raise DimensionError(f"unknown instance kind {header['kind']!r}")
