"""Scan corpora and pose streams on disk.

A dataset is a directory of zero-padded ``NNNN.csv`` (or ``NNNN.bin``) scan
files, one per sweep, plus an optional ``poses.csv``. The numeric file stem
is the scan id.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import FormatError, ValidationError

POSES_FILENAME = "poses.csv"


class CartesianReturn(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True, eq=False)
class PointCloud:
    """One Lidar sweep: an ``(N, 3)`` float64 array of x, y, z in meters."""

    points: np.ndarray
    scan_id: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError(f"scan {self.scan_id}: non-finite coordinate")
        if self.scan_id < 0:
            raise ValidationError(f"scan_id must be non-negative, got {self.scan_id}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def returns(self) -> list[CartesianReturn]:
        return [CartesianReturn(*map(float, p)) for p in self.points]

    def with_points(self, points) -> PointCloud:
        return PointCloud(points, self.scan_id)


@dataclass(frozen=True)
class Pose6DOF:
    scan_id: int
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.roll, self.pitch, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"pose {self.scan_id}: non-finite component")

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.roll, self.pitch, self.yaw])


def _scan_id_from_path(path: Path) -> int:
    try:
        sid = int(path.stem)
    except ValueError:
        raise FormatError(f"{path.name}: file stem is not an integer scan id") from None
    if sid < 0:
        raise FormatError(f"{path.name}: negative scan id")
    return sid


def _parse_csv_rows(text: str, ncols: int, source: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != ncols:
            raise FormatError(f"{source}: expected {ncols} fields, got {len(parts)}", line=lineno)
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise FormatError(f"{source}: cannot parse {line!r}", line=lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise FormatError(f"{source}: non-finite value", line=lineno)
        rows.append(vals)
    return np.array(rows, dtype=np.float64).reshape(len(rows), ncols)


def read_scan_csv(path) -> PointCloud:
    path = Path(path)
    sid = _scan_id_from_path(path)
    text = path.read_text(encoding="utf-8")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # comment-only file
            pts = np.loadtxt(io.StringIO(text), delimiter=",", comments="#", ndmin=2, dtype=np.float64)
    except ValueError:
        pts = None  # re-parse line by line to report where it failed
    if pts is None or (pts.size and pts.shape[1] != 3) or not np.all(np.isfinite(pts)):
        pts = _parse_csv_rows(text, 3, path.name)
    return PointCloud(pts.reshape(-1, 3), sid)


def write_scan_csv(cloud: PointCloud, path) -> None:
    # repr() of a float round-trips exactly
    lines = [f"{x!r},{y!r},{z!r}" for x, y, z in cloud.points.tolist()]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_scan_bin(path) -> PointCloud:
    path = Path(path)
    sid = _scan_id_from_path(path)
    raw = path.read_bytes()
    if len(raw) % 12:
        whole = len(raw) - len(raw) % 12
        raise FormatError(f"{path.name}: trailing partial triplet ({len(raw) % 12} bytes)", offset=whole)
    pts = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        bad = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
        raise FormatError(f"{path.name}: non-finite return", offset=12 * bad)
    return PointCloud(pts, sid)


def write_scan_bin(cloud: PointCloud, path) -> None:
    Path(path).write_bytes(cloud.points.astype("<f4").tobytes())


def read_pose_stream(path) -> list[Pose6DOF]:
    path = Path(path)
    rows = _parse_csv_rows(path.read_text(encoding="utf-8"), 7, path.name)
    poses = []
    for row in rows:
        if row[0] != int(row[0]) or row[0] < 0:
            raise ValidationError(f"{path.name}: scan_id {row[0]!r} is not a non-negative integer")
        poses.append(Pose6DOF(int(row[0]), *map(float, row[1:])))
    poses.sort(key=lambda p: p.scan_id)
    for a, b in zip(poses, poses[1:]):
        if a.scan_id == b.scan_id:
            raise ValidationError(f"{path.name}: duplicate scan_id {a.scan_id}")
    return poses


def write_pose_stream(poses, path) -> None:
    lines = ["# scan_id,x,y,z,roll,pitch,yaw"]
    for p in poses:
        vals = ",".join(repr(float(v)) for v in p.as_vector())
        lines.append(f"{p.scan_id},{vals}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class Dataset:
    clouds: list[PointCloud]
    poses: list[Pose6DOF] | None = None
    root: Path | None = field(default=None, compare=False)

    @property
    def scan_ids(self) -> list[int]:
        return [c.scan_id for c in self.clouds]

    @property
    def total_returns(self) -> int:
        return sum(len(c) for c in self.clouds)


def write_dataset(directory, clouds, poses=None, fmt: str = "csv") -> Path:
    """Write scans as ``NNNN.<fmt>`` files (and ``poses.csv`` if given)."""
    if fmt not in ("csv", "bin"):
        raise ValidationError(f"unknown scan format {fmt!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(max((c.scan_id for c in clouds), default=0))))
    writer = write_scan_csv if fmt == "csv" else write_scan_bin
    for cloud in clouds:
        writer(cloud, directory / f"{cloud.scan_id:0{width}d}.{fmt}")
    if poses is not None:
        write_pose_stream(poses, directory / POSES_FILENAME)
    return directory


def read_dataset(directory) -> Dataset:
    """Load every scan file in ``directory``, sorted by scan id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    clouds = []
    for path in sorted(directory.iterdir()):
        if path.name == POSES_FILENAME or path.suffix not in (".csv", ".bin"):
            continue
        clouds.append(read_scan_csv(path) if path.suffix == ".csv" else read_scan_bin(path))
    if not clouds:
        raise ValidationError(f"no scan files in {directory}")
    clouds.sort(key=lambda c: c.scan_id)
    for a, b in zip(clouds, clouds[1:]):
        if a.scan_id == b.scan_id:
            raise ValidationError(f"duplicate scan id {a.scan_id} in {directory}")
    pose_path = directory / POSES_FILENAME
    poses = read_pose_stream(pose_path) if pose_path.exists() else None
    return Dataset(clouds, poses, directory)
