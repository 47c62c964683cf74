"""Nearest core-slice search over a TensorMap."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .map_builder import TensorMap
from .range_image import ScanMatrix


@dataclass(frozen=True)
class LocalizationResult:
    segment_index: int
    scan_index_in_segment: int
    global_scan_index: int
    distance: float
    runner_up_distance: float
    margin: float

    def as_dict(self) -> dict:
        out = asdict(self)
        for key in ("runner_up_distance", "margin"):
            if math.isinf(out[key]):
                out[key] = None
        return out


def _values(tmap: TensorMap, s) -> np.ndarray:
    if isinstance(s, ScanMatrix):
        if s.grid != tmap.grid:
            raise ValidationError(f"scan {s.scan_id} grid {s.grid} does not match map grid {tmap.grid}")
        return s.values
    vals = np.asarray(s, dtype=np.float64)
    if vals.shape != tmap.grid.shape:
        raise ValidationError(f"scan shape {vals.shape} does not match map grid {tmap.grid.shape}")
    return vals


def signature(tmap: TensorMap, segment: int, s) -> np.ndarray:
    """``U_l^T S V_l``: the query as seen through segment ``segment``'s bases."""
    if not (0 <= segment < tmap.n_segments):
        raise ValidationError(f"segment {segment} out of range [0, {tmap.n_segments})")
    model = tmap.segments[segment]
    return model.U.T @ _values(tmap, s) @ model.V


def slice_distances(tmap: TensorMap, s) -> list[np.ndarray]:
    """Per segment, Frobenius distance from the query signature to every core slice.

    A signature is only ever compared against its own segment's core.
    """
    vals = _values(tmap, s)
    out = []
    for l, model in enumerate(tmap.segments):
        sig = signature(tmap, l, vals)
        diff = model.core - sig[:, :, None]
        out.append(np.sqrt(np.einsum("rsk,rsk->k", diff, diff)))
    return out


def localize(tmap: TensorMap, s) -> LocalizationResult:
    dists = np.concatenate(slice_distances(tmap, s))
    order = np.argsort(dists, kind="stable")  # ties -> lowest (segment, scan)
    best = int(order[0])
    runner_up = float(dists[order[1]]) if dists.size > 1 else math.inf
    l = int(np.searchsorted(np.cumsum(tmap.lengths), best, side="right"))
    m = best - sum(tmap.lengths[:l])
    d = float(dists[best])
    return LocalizationResult(l, m, tmap.offsets[l] + m, d, runner_up, runner_up - d)


def localize_batch(tmap: TensorMap, scans) -> list[LocalizationResult]:
    return [localize(tmap, s) for s in scans]
