"""Point clouds to (elevation x azimuth) range images on a whole-degree grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .scan_io import CartesianReturn, PointCloud


class PolarReturn(NamedTuple):
    rho: float
    theta: float
    phi: float


@dataclass(frozen=True)
class GridSpec:
    """Angular bin layout. Defaults match a 64-beam Velodyne (30 x 361 cells)."""

    theta_min: float = -25.0
    theta_max: float = 4.0
    phi_min: float = -180.0
    phi_max: float = 180.0
    resolution: float = 1.0

    def __post_init__(self):
        vals = (self.theta_min, self.theta_max, self.phi_min, self.phi_max, self.resolution)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("grid parameters must be finite")
        if self.resolution <= 0:
            raise ValidationError(f"resolution must be positive, got {self.resolution}")
        if not (self.theta_min < self.theta_max and self.phi_min < self.phi_max):
            raise ValidationError("grid bounds must satisfy min < max")
        for v in vals[:4]:
            q = v / self.resolution
            if abs(q - round(q)) > 1e-9:
                raise ValidationError(f"grid bound {v} is not a multiple of the resolution")

    @property
    def rows(self) -> int:
        return round((self.theta_max - self.theta_min) / self.resolution) + 1

    @property
    def cols(self) -> int:
        return round((self.phi_max - self.phi_min) / self.resolution) + 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def thetas(self) -> np.ndarray:
        return self.theta_min + self.resolution * np.arange(self.rows)

    def phis(self) -> np.ndarray:
        return self.phi_min + self.resolution * np.arange(self.cols)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.theta_min, self.theta_max, self.phi_min, self.phi_max, self.resolution)

    @classmethod
    def parse(cls, text: str) -> GridSpec:
        """Parse ``"theta_min,theta_max,phi_min,phi_max,res"``."""
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 5:
            raise ValidationError(f"grid needs 5 comma-separated values, got {text!r}")
        try:
            return cls(*map(float, parts))
        except ValueError:
            raise ValidationError(f"cannot parse grid {text!r}") from None


@dataclass(frozen=True, eq=False)
class ScanMatrix:
    grid: GridSpec
    values: np.ndarray
    scan_id: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != self.grid.shape:
            raise ValidationError(f"scan {self.scan_id}: shape {vals.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValidationError(f"scan {self.scan_id}: ranges must be finite and non-negative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def cartesian_to_polar(r: CartesianReturn) -> PolarReturn:
    rho, theta, phi = to_polar(np.array([r], dtype=np.float64))[0]
    return PolarReturn(float(rho), float(theta), float(phi))


def to_polar(points: np.ndarray) -> np.ndarray:
    """Vectorized conversion of ``(N, 3)`` x, y, z to rho, theta, phi (degrees)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    x, y, z = pts.T
    horiz = np.hypot(x, y)
    rho = np.sqrt(x * x + y * y + z * z)
    theta = np.degrees(np.arctan2(z, horiz))
    # the sign of y (including -0.0) decides between the +180 and -180 columns
    phi = np.degrees(np.arctan2(y, x))
    return np.column_stack([rho, theta, phi])


def from_polar(polar: np.ndarray) -> np.ndarray:
    polar = np.asarray(polar, dtype=np.float64).reshape(-1, 3)
    rho = polar[:, 0]
    theta, phi = np.radians(polar[:, 1]), np.radians(polar[:, 2])
    return np.column_stack([
        rho * np.cos(theta) * np.cos(phi),
        rho * np.cos(theta) * np.sin(phi),
        rho * np.sin(theta),
    ])


def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def bin_indices(polar: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row/column of every return plus a mask of those that land on the grid."""
    res = grid.resolution
    q_theta = _round_half_away(polar[:, 1] / res).astype(np.int64)
    q_phi = _round_half_away(polar[:, 2] / res).astype(np.int64)
    rows = q_theta - round(grid.theta_min / res)
    cols = q_phi - round(grid.phi_min / res)
    keep = (rows >= 0) & (rows < grid.rows) & (cols >= 0) & (cols < grid.cols) & (polar[:, 0] > 0)
    return rows, cols, keep


def matricize_scan(cloud: PointCloud, grid: GridSpec) -> ScanMatrix:
    """Quantize a cloud to the grid; the nearest return wins each cell, empty cells are 0."""
    polar = to_polar(cloud.points)
    rows, cols, keep = bin_indices(polar, grid)
    vals = np.full(grid.shape, np.inf)
    np.minimum.at(vals, (rows[keep], cols[keep]), polar[keep, 0])
    vals[np.isinf(vals)] = 0.0
    return ScanMatrix(grid, vals, cloud.scan_id)


def stack_scans(scans) -> np.ndarray:
    """Stack scan matrices as frontal slices of an ``I x J x K`` tensor."""
    scans = list(scans)
    if not scans:
        raise ValidationError("cannot stack an empty scan list")
    grid = scans[0].grid
    for s in scans[1:]:
        if s.grid != grid:
            raise ValidationError(f"scan {s.scan_id} has grid {s.grid}, expected {grid}")
    return np.stack([s.values for s in scans], axis=2)
