"""Input checks shared by the estimator wrappers and the harness."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionError, DomainError


def check_matrix(A, name="A"):
    return check_array(A, dtype=[np.float64, np.complex128], ensure_2d=True,
                       ensure_all_finite=True, input_name=name)


def check_blocks(blocks):
    """Stack ``K`` equally shaped 2-D blocks into a ``(K, M, N)`` array."""
    if isinstance(blocks, np.ndarray) and blocks.ndim == 3:
        arr = blocks
    else:
        blocks = list(blocks)
        if not blocks:
            raise DimensionError("at least one block is required")
        shapes = {np.shape(b) for b in blocks}
        if len(shapes) != 1:
            raise DimensionError(f"blocks differ in shape: {sorted(shapes)}")
        arr = np.stack([np.asarray(b) for b in blocks])
    if arr.ndim != 3:
        raise DimensionError(f"expected K blocks of shape (M, N), got array of shape {arr.shape}")
    arr = check_array(arr, dtype=[np.float64, np.complex128], allow_nd=True,
                      ensure_all_finite=True, input_name="blocks")
    return arr


def check_observations(y, M):
    y = check_array(y, dtype=[np.float64, np.complex128], ensure_2d=False,
                    ensure_all_finite=True, input_name="y")
    if y.ndim not in (1, 2) or y.shape[0] != M:
        raise DimensionError(f"observations have shape {y.shape}, expected ({M},) or ({M}, L)")
    return y


def check_scalar(x, name, lo=None, hi=None, lo_open=False, integer=False):
    kind = numbers.Integral if integer else numbers.Real
    if not isinstance(x, kind) or isinstance(x, bool):
        raise DomainError(f"{name} must be {'an integer' if integer else 'a real number'}, got {x!r}")
    if lo is not None and (x < lo or (lo_open and x == lo)):
        raise DomainError(f"{name} must be {'>' if lo_open else '>='} {lo}, got {x}")
    if hi is not None and x > hi:
        raise DomainError(f"{name} must be <= {hi}, got {x}")
    return x
