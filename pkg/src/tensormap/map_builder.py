"""Segment-wise map construction, storage accounting and the TMAP file format.

TMAP layout (little-endian)::

    "TMAP"  u32 version  u32 I  u32 J  u32 r1  u32 r2  u32 L
    L x { u32 k_l  u64 offset  U (I*r1 f64, row-major)  V (J*r2 f64, row-major)
          core (r1*r2*k_l f64, mode-1 fastest) }
    6 x f64: theta_min theta_max phi_min phi_max resolution nominal_k
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .range_image import GridSpec
from .tensor_core import as_tensor3
from .tucker import TuckerModel, fit_segment

MAGIC = b"TMAP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4s6I")
_SEGMENT = struct.Struct("<IQ")
_TRAILER = struct.Struct("<6d")


@dataclass(frozen=True, eq=False)
class TensorMap:
    segments: list[TuckerModel]
    k: int
    grid: GridSpec
    offsets: list[int] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if not self.segments:
            raise ValidationError("a map needs at least one segment")
        if self.k < 1:
            raise ValidationError(f"segment length must be positive, got {self.k}")
        if not self.offsets:
            object.__setattr__(self, "offsets", list(np.cumsum([0] + self.lengths[:-1]).tolist()))
        if len(self.offsets) != len(self.segments):
            raise ValidationError("one offset per segment required")
        ranks = self.segments[0].ranks
        for l, seg in enumerate(self.segments):
            if seg.ranks != ranks:
                raise ValidationError(f"segment {l} has ranks {seg.ranks}, expected {ranks}")
            if seg.U.shape[0] != self.grid.rows or seg.V.shape[0] != self.grid.cols:
                raise ValidationError(f"segment {l} does not match grid shape {self.grid.shape}")
        for l in range(len(self.offsets) - 1):
            if self.offsets[l + 1] - self.offsets[l] != self.segments[l].length:
                raise ValidationError(f"offset of segment {l + 1} inconsistent with segment lengths")

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def ranks(self) -> tuple[int, int]:
        return self.segments[0].ranks

    @property
    def lengths(self) -> list[int]:
        return [s.length for s in self.segments]

    @property
    def n_scans(self) -> int:
        return sum(self.lengths)

    def locate(self, global_index: int) -> tuple[int, int]:
        """(segment, index within segment) of a global scan index."""
        if not (0 <= global_index < self.offsets[-1] + self.segments[-1].length):
            raise ValidationError(f"scan index {global_index} outside the map")
        l = int(np.searchsorted(self.offsets, global_index, side="right")) - 1
        return l, global_index - self.offsets[l]


def segment_bounds(K: int, k: int) -> list[tuple[int, int]]:
    """Contiguous ``[start, stop)`` ranges of length k; the last may be shorter."""
    if k < 1:
        raise ValidationError(f"segment length must be positive, got {k}")
    if K < 1:
        raise ValidationError("need at least one scan")
    if k > K:
        raise ValidationError(f"segment length {k} exceeds scan count {K}")
    return [(s, min(s + k, K)) for s in range(0, K, k)]


def partition(x, k: int) -> list[np.ndarray]:
    x = np.asarray(x)
    return [x[:, :, a:b] for a, b in segment_bounds(x.shape[2], k)]


def assemble_map(segments, k: int, r1: int, r2: int, grid: GridSpec) -> TensorMap:
    """Fit one model per given segment tensor (segments may differ in length)."""
    models = [fit_segment(seg, r1, r2, grid) for seg in segments]
    return TensorMap(models, k, grid)


def build_map(x, k: int, r1: int, r2: int, grid: GridSpec) -> TensorMap:
    x = as_tensor3(x)
    if x.shape[:2] != grid.shape:
        raise ValidationError(f"tensor shape {x.shape[:2]} does not match grid {grid.shape}")
    return assemble_map(partition(x, k), k, r1, r2, grid)


@dataclass(frozen=True)
class MemoryReport:
    map_units: int
    full_tensor_units: int
    raw_cloud_units: int | None

    @property
    def full_ratio(self) -> float:
        return self.full_tensor_units / self.map_units

    @property
    def raw_ratio(self) -> float | None:
        if self.raw_cloud_units is None:
            return None
        return self.raw_cloud_units / self.map_units

    def as_dict(self) -> dict:
        return {
            "map_units": self.map_units,
            "full_tensor_units": self.full_tensor_units,
            "raw_cloud_units": self.raw_cloud_units,
            "full_ratio": self.full_ratio,
            "raw_ratio": self.raw_ratio,
        }


def map_units(I: int, J: int, K: int, r1: int, r2: int, L: int) -> int:
    """Stored reals for L equal-length segments: ``L(I r1 + J r2) + K r1 r2``."""
    return L * (I * r1 + J * r2) + K * r1 * r2


def memory_report(tmap: TensorMap, raw_return_count: int | None = None) -> MemoryReport:
    I, J = tmap.grid.shape
    r1, r2 = tmap.ranks
    units = sum(I * r1 + J * r2 + r1 * r2 * kl for kl in tmap.lengths)
    raw = None if raw_return_count is None else 3 * int(raw_return_count)
    return MemoryReport(units, I * J * tmap.n_scans, raw)


def map_to_bytes(tmap: TensorMap) -> bytes:
    I, J = tmap.grid.shape
    r1, r2 = tmap.ranks
    parts = [_HEADER.pack(MAGIC, tmap.format_version, I, J, r1, r2, tmap.n_segments)]
    for off, seg in zip(tmap.offsets, tmap.segments):
        parts.append(_SEGMENT.pack(seg.length, off))
        parts.append(seg.U.astype("<f8").tobytes(order="C"))
        parts.append(seg.V.astype("<f8").tobytes(order="C"))
        parts.append(seg.core.astype("<f8").tobytes(order="F"))
    parts.append(_TRAILER.pack(*tmap.grid.as_tuple(), float(tmap.k)))
    return b"".join(parts)


def save_map(tmap: TensorMap, path) -> None:
    Path(path).write_bytes(map_to_bytes(tmap))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated file while reading {what}", offset=self.pos)
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def array(self, shape, order: str, what: str) -> np.ndarray:
        n = int(np.prod(shape))
        raw = self.take(8 * n, what)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape, order=order)


def map_from_bytes(buf: bytes) -> TensorMap:
    rd = _Reader(buf)
    magic, version, I, J, r1, r2, L = _HEADER.unpack(rd.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)
    if L < 1 or not (1 <= r1 <= I) or not (1 <= r2 <= J):
        raise FormatError(f"inconsistent header I={I} J={J} r1={r1} r2={r2} L={L}", offset=8)
    raw_segments = []
    for l in range(L):
        start = rd.pos
        kl, off = _SEGMENT.unpack(rd.take(_SEGMENT.size, f"segment {l} header"))
        if kl < 1:
            raise FormatError(f"segment {l} has zero length", offset=start)
        U = rd.array((I, r1), "C", f"segment {l} U")
        V = rd.array((J, r2), "C", f"segment {l} V")
        core = rd.array((r1, r2, kl), "F", f"segment {l} core")
        raw_segments.append((off, U, V, core))
    trailer_at = rd.pos
    *grid_vals, nominal_k = _TRAILER.unpack(rd.take(_TRAILER.size, "grid trailer"))
    if rd.pos != len(buf):
        raise FormatError(f"{len(buf) - rd.pos} unexpected trailing bytes", offset=rd.pos)
    try:
        grid = GridSpec(*grid_vals)
        if grid.shape != (I, J) or nominal_k != int(nominal_k):
            raise ValidationError("grid trailer disagrees with header")
        models = [TuckerModel(U, V, core, grid) for _, U, V, core in raw_segments]
        return TensorMap(models, int(nominal_k), grid, [s[0] for s in raw_segments], version)
    except ValidationError as exc:
        raise FormatError(str(exc), offset=trailer_at) from None


def load_map(path) -> TensorMap:
    return map_from_bytes(Path(path).read_bytes())
