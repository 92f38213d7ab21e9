"""Lifting of the bilinear model and SVD-based unitary transformation.

``y = sum_k b_k A_k c + w`` is rewritten as ``y = A x + w`` with
``A = [A_1, ..., A_K]`` and ``x = b (x) c``.  With the SVD ``A = U S V``,
the transformed model reads ``r = U^H y = Phi x + omega`` where
``Phi = S V`` has mutually orthogonal rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .exceptions import DimensionError, NumericError

__all__ = ["LiftedModel", "TransformedModel", "build_lifted", "unitary_transform", "transform_matrix"]


@dataclass(frozen=True)
class LiftedModel:
    A: np.ndarray
    blocks: List[np.ndarray]
    M: int
    N: int
    K: int


@dataclass(frozen=True)
class TransformedModel:
    """Unitarily transformed (and partitioned) linear model.

    Attributes
    ----------
    r : ndarray, shape (M,) or (M, L)
        Transformed observations ``U^H y``.
    Phi : ndarray, shape (M, N*K)
        ``S V``; rows beyond ``min(M, N*K)`` are zero.
    U : ndarray, shape (M, M)
        Left singular vectors (unitary).
    lam : ndarray, shape (M,)
        Squared singular values, zero padded to length ``M``.
    phi : ndarray, shape (K, M)
        ``phi[k, m] = sum_n |Phi_k[m, n]|^2``.
    """

    r: np.ndarray
    Phi: np.ndarray
    U: np.ndarray
    lam: np.ndarray
    phi: np.ndarray
    M: int
    N: int
    K: int
    beta_true: Optional[float] = None

    @property
    def Phi_blocks(self):
        return [self.Phi[:, k * self.N:(k + 1) * self.N] for k in range(self.K)]

    @property
    def L(self):
        return 1 if self.r.ndim == 1 else self.r.shape[1]

    def with_observations(self, y, beta_true=None):
        """Same transform applied to a new observation vector/matrix."""
        y = np.asarray(y)
        if y.shape[0] != self.M:
            raise DimensionError(f"y has {y.shape[0]} rows, expected {self.M}")
        r = _apply_adjoint(self.U, y)
        return TransformedModel(r, self.Phi, self.U, self.lam, self.phi,
                                self.M, self.N, self.K, beta_true)


def build_lifted(blocks) -> LiftedModel:
    """Concatenate ``K`` equally shaped ``M x N`` blocks horizontally."""
    blocks = [np.asarray(b) for b in blocks]
    if len(blocks) == 0:
        raise DimensionError("at least one block is required")
    shape = blocks[0].shape
    if len(shape) != 2:
        raise DimensionError(f"blocks must be 2-D, got shape {shape}")
    for k, b in enumerate(blocks):
        if b.shape != shape:
            raise DimensionError(f"block {k} has shape {b.shape}, expected {shape}")
    M, N = shape
    return LiftedModel(np.concatenate(blocks, axis=1), blocks, M, N, len(blocks))


def _apply_adjoint(U, y):
    return U.conj().T @ y


def transform_matrix(A):
    """SVD preprocessing of a single ``M x N'`` matrix.

    Returns ``(U, Phi, lam)`` with ``U`` square unitary, ``Phi = U^H A`` built
    as ``S V`` (zero rows appended when ``M > N'``) and ``lam`` the squared
    singular values padded with zeros to length ``M``.
    """
    A = np.asarray(A)
    if A.ndim != 2:
        raise DimensionError(f"A must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericError("A contains non-finite entries")
    M, Ntot = A.shape
    # full U only when A is tall, so that U^H stays unitary on R^M
    U, s, Vh = np.linalg.svd(A, full_matrices=M > Ntot)
    rank = s.shape[0]
    Phi = np.zeros((M, Ntot), dtype=np.result_type(A, float))
    Phi[:rank] = s[:, None] * Vh[:rank]
    lam = np.zeros(M)
    lam[:rank] = s**2
    return U, Phi, lam


def unitary_transform(model, y, beta_true=None) -> TransformedModel:
    """Apply the SVD-based unitary transform to a lifted model.

    Parameters
    ----------
    model : LiftedModel
    y : ndarray, shape (M,) or (M, L)
    beta_true : float, optional
        Known noise precision, carried along for convenience.
    """
    y = np.asarray(y)
    if y.ndim not in (1, 2) or y.shape[0] != model.M:
        raise DimensionError(f"y has shape {y.shape}, expected ({model.M},) or ({model.M}, L)")
    if not np.all(np.isfinite(y)):
        raise NumericError("y contains non-finite entries")
    U, Phi, lam = transform_matrix(model.A)
    r = _apply_adjoint(U, y)
    phi = np.stack([
        np.sum(np.abs(Phi[:, k * model.N:(k + 1) * model.N]) ** 2, axis=1)
        for k in range(model.K)
    ])
    return TransformedModel(r, Phi, U, lam, phi, model.M, model.N, model.K, beta_true)
