"""Dense 3-way tensors: unfoldings, mode products, truncated singular bases.

Tensors are plain ``(I, J, K)`` float64 ndarrays. The reference element
layout (used for serialization) is mode-1 fastest, i.e. Fortran order.
Unfolding columns enumerate the remaining indices with the lower-numbered
mode varying fastest, so ``unfold(t, 1)`` is ``I x (J*K)`` with column
``j + J*k``.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def as_tensor3(t) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValidationError(f"expected a non-empty 3-way tensor, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("tensor contains non-finite values")
    return arr


def _check_mode(mode):
    if mode not in (1, 2, 3):
        raise ValidationError(f"mode must be 1, 2 or 3, got {mode!r}")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    _check_mode(mode)
    t = np.asarray(t)
    return np.moveaxis(t, mode - 1, 0).reshape(t.shape[mode - 1], -1, order="F")


def fold(m: np.ndarray, mode: int, shape) -> np.ndarray:
    _check_mode(mode)
    shape = tuple(shape)
    moved = (shape[mode - 1],) + tuple(s for i, s in enumerate(shape) if i != mode - 1)
    return np.moveaxis(np.asarray(m).reshape(moved, order="F"), 0, mode - 1)


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """``t x_mode m``: multiply every mode-``mode`` fiber of ``t`` by ``m``."""
    _check_mode(mode)
    t = np.asarray(t, dtype=np.float64)
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.shape[1] != t.shape[mode - 1]:
        raise ValidationError(
            f"mode-{mode} product: matrix has {m.shape[1]} columns, tensor extent is {t.shape[mode - 1]}"
        )
    shape = list(t.shape)
    shape[mode - 1] = m.shape[0]
    return fold(m @ unfold(t, mode), mode, shape)


def apply_sign_convention(basis: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is non-negative."""
    basis = np.array(basis, dtype=np.float64)
    if basis.size == 0:
        return basis
    lead = np.argmax(np.abs(basis), axis=0)  # first index on ties
    signs = np.where(basis[lead, np.arange(basis.shape[1])] < 0, -1.0, 1.0)
    return basis * signs


def truncated_left_basis(m: np.ndarray, r: int, complete: bool = False) -> np.ndarray:
    """Top-``r`` left singular vectors of ``m``, ordered by singular value.

    With ``complete=True`` ``r`` may go up to the row count; columns past the
    numerical rank are an orthonormal completion (singular value zero).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValidationError(f"expected a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix contains non-finite values")
    limit = m.shape[0] if complete else min(m.shape)
    if not (isinstance(r, (int, np.integer)) and 1 <= r <= limit):
        raise ValidationError(f"rank {r!r} outside [1, {limit}] for a {m.shape[0]}x{m.shape[1]} matrix")
    if r <= min(m.shape) and m.shape[1] > 2 * m.shape[0]:
        # m = R^T Q^T with Q orthonormal, so m and R^T share left singular vectors
        rt = np.linalg.qr(m.T, mode="r").T
        u, _, _ = np.linalg.svd(rt)
    else:
        u, _, _ = np.linalg.svd(m, full_matrices=r > min(m.shape))
    return apply_sign_convention(u[:, :r])
