"""Per-segment orthogonal Tucker3 models with an uncompressed scan mode."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .range_image import GridSpec
from .tensor_core import as_tensor3, mode_product, truncated_left_basis, unfold


@dataclass(frozen=True, eq=False)
class TuckerModel:
    """Factors ``U`` (I x r1), ``V`` (J x r2) and core ``r1 x r2 x k``.

    The scan-mode factor is the identity and is never stored, so frontal
    slice ``m`` of the core is ``U.T @ X_m @ V``.
    """

    U: np.ndarray
    V: np.ndarray
    core: np.ndarray
    grid: GridSpec | None = None

    def __post_init__(self):
        # one canonical layout so fitted and deserialized models compute identically
        for name in ("U", "V", "core"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        r1, r2 = self.U.shape[1], self.V.shape[1]
        if self.core.ndim != 3 or self.core.shape[:2] != (r1, r2):
            raise ValidationError(f"core shape {self.core.shape} does not match ranks ({r1}, {r2})")
        if r1 > self.U.shape[0] or r2 > self.V.shape[0]:
            raise ValidationError("factor ranks exceed their row counts")
        if self.grid is not None and self.grid.shape != (self.U.shape[0], self.V.shape[0]):
            raise ValidationError(f"factors do not match grid shape {self.grid.shape}")

    @property
    def ranks(self) -> tuple[int, int]:
        return self.U.shape[1], self.V.shape[1]

    @property
    def length(self) -> int:
        return self.core.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.U.shape[0], self.V.shape[0], self.core.shape[2]


def _check_ranks(shape, r1, r2):
    I, J, _ = shape
    if not (1 <= r1 <= I):
        raise ValidationError(f"r1={r1} outside [1, {I}]")
    if not (1 <= r2 <= J):
        raise ValidationError(f"r2={r2} outside [1, {J}]")


def project_core(x: np.ndarray, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``x x_1 U^T x_2 V^T``, computed slice by slice."""
    return np.einsum("ir,ijk,js->rsk", U, x, V, optimize=True)


def fit_segment(x, r1: int, r2: int, grid: GridSpec | None = None) -> TuckerModel:
    """Single-pass truncated HO-SVD of one segment tensor, leaving mode 3 intact."""
    x = as_tensor3(x)
    _check_ranks(x.shape, r1, r2)
    U = truncated_left_basis(unfold(x, 1), r1, complete=True)
    V = truncated_left_basis(unfold(x, 2), r2, complete=True)
    return TuckerModel(U, V, project_core(x, U, V), grid)


def reconstruct(model: TuckerModel) -> np.ndarray:
    return mode_product(mode_product(model.core, model.U, 1), model.V, 2)


def relative_error(x, model: TuckerModel) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.shape:
        raise ValidationError(f"tensor shape {x.shape} != model shape {model.shape}")
    norm = np.linalg.norm(x)
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(x - reconstruct(model)) / norm)


def fit_full_hosvd(x, r1: int, r2: int) -> tuple[TuckerModel, np.ndarray]:
    """HO-SVD with the scan-mode factor ``W`` computed too (core is ``r1 x r2 x k``)."""
    x = as_tensor3(x)
    _check_ranks(x.shape, r1, r2)
    U = truncated_left_basis(unfold(x, 1), r1, complete=True)
    V = truncated_left_basis(unfold(x, 2), r2, complete=True)
    W = truncated_left_basis(unfold(x, 3), x.shape[2], complete=True)
    core = mode_product(project_core(x, U, V), W.T, 3)
    return TuckerModel(U, V, core), W


def slice_gram(core: np.ndarray) -> np.ndarray:
    """Frobenius inner products between all pairs of frontal slices."""
    flat = unfold(core, 3)
    return flat @ flat.T


def slice_coherence(core: np.ndarray) -> float:
    """Largest off-diagonal slice inner product over the largest squared slice norm.

    Zero for an all-orthogonal core. Reported as a diagnostic for W = I models,
    where pairwise orthogonality is not guaranteed.
    """
    gram = slice_gram(core)
    scale = float(np.max(np.diag(gram)))
    if gram.shape[0] < 2 or scale == 0:
        return 0.0
    off = np.abs(gram - np.diag(np.diag(gram)))
    return float(off.max() / scale)
