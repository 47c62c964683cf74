"""Deterministic ray-cast Lidar scans of vertical walls along a trajectory.

Scans are reported in the sensor frame: x forward along the vehicle heading,
y to the left, z up, origin at the sensor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .range_image import GridSpec
from .scan_io import PointCloud, Pose6DOF

JITTER_DEG = 0.4


@dataclass(frozen=True, eq=False)
class SyntheticSceneSpec:
    """Walls are rows ``(x0, y0, x1, y1, z_lo, z_hi)``; trajectory rows ``(x, y, heading_rad)``."""

    walls: np.ndarray
    trajectory: np.ndarray
    grid: GridSpec = field(default_factory=GridSpec)
    max_range: float = 50.0
    rng_seed: int = 0
    jitter: bool = False
    sensor_height: float = 1.8
    ground: bool = False

    def __post_init__(self):
        walls = np.asarray(self.walls, dtype=np.float64).reshape(-1, 6)
        traj = np.asarray(self.trajectory, dtype=np.float64).reshape(-1, 3)
        if traj.shape[0] == 0:
            raise ValidationError("trajectory must contain at least one pose")
        if not self.max_range > 0:
            raise ValidationError(f"max_range must be positive, got {self.max_range}")
        if not (np.all(np.isfinite(walls)) and np.all(np.isfinite(traj))):
            raise ValidationError("scene geometry must be finite")
        if np.any(walls[:, 4] > walls[:, 5]):
            raise ValidationError("wall height extents must satisfy z_lo <= z_hi")
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "trajectory", traj)

    def with_seed(self, seed: int) -> SyntheticSceneSpec:
        return SyntheticSceneSpec(self.walls, self.trajectory, self.grid, self.max_range,
                                  seed, self.jitter, self.sensor_height, self.ground)


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def cast_rays(walls, origin_xy, sensor_height, heading, theta_deg, phi_deg, max_range, ground=False):
    """Range along each ray to the nearest wall (or ground); ``inf`` when nothing is hit.

    ``theta_deg``/``phi_deg`` are per-ray elevation and azimuth in the sensor frame.
    """
    theta_deg = np.asarray(theta_deg, dtype=np.float64)
    phi_deg = np.asarray(phi_deg, dtype=np.float64)
    sin_t, cos_t = np.sin(np.radians(theta_deg)), np.cos(np.radians(theta_deg))
    best = np.full(theta_deg.shape[0], np.inf)
    if len(walls):
        # the horizontal intersection depends on azimuth only
        phi_u, inv = np.unique(phi_deg, return_inverse=True)
        azim = heading + np.radians(phi_u)[:, None]
        dx, dy = np.cos(azim), np.sin(azim)
        ax = walls[None, :, 0] - origin_xy[0]
        ay = walls[None, :, 1] - origin_xy[1]
        ex = walls[None, :, 2] - walls[None, :, 0]
        ey = walls[None, :, 3] - walls[None, :, 1]
        denom = _cross(dx, dy, ex, ey)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = _cross(ax, ay, ex, ey) / denom  # horizontal distance along the ray
            u = _cross(ax, ay, dx, dy) / denom  # position along the wall
        s = np.where((denom != 0) & (s > 0) & (u >= 0) & (u <= 1), s, np.inf)
        # keep only the walls each azimuth actually crosses
        width = max(1, int(np.isfinite(s).sum(axis=1).max()))
        order = np.argsort(s, axis=1, kind="stable")[:, :width]
        s = np.take_along_axis(s, order, axis=1)[inv]
        z_lo, z_hi = walls[order, 4][inv], walls[order, 5][inv]
        t = s / cos_t[:, None]
        with np.errstate(invalid="ignore"):
            z = sensor_height + t * sin_t[:, None]
        hit = (z >= z_lo) & (z <= z_hi)
        best = np.where(hit, t, np.inf).min(axis=1)
    if ground:
        down = sin_t < 0
        tg = np.full_like(best, np.inf)
        tg[down] = sensor_height / -sin_t[down]
        best = np.minimum(best, tg)
    best[best > max_range] = np.inf
    return best


def _walls_near(walls, p, reach):
    """Walls with any point within ``reach`` of ``p``."""
    if not len(walls):
        return walls
    a, b = walls[:, 0:2], walls[:, 2:4]
    e = b - a
    ee = np.einsum("ij,ij->i", e, e)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.clip(np.where(ee > 0, np.einsum("ij,ij->i", p - a, e) / ee, 0.0), 0.0, 1.0)
    d = np.linalg.norm(a + u[:, None] * e - p, axis=1)
    return walls[d <= reach]


def generate_synthetic_dataset(spec: SyntheticSceneSpec) -> tuple[list[PointCloud], list[Pose6DOF]]:
    grid = spec.grid
    theta_grid, phi_grid = np.meshgrid(grid.thetas(), grid.phis(), indexing="ij")
    theta_grid, phi_grid = theta_grid.ravel(), phi_grid.ravel()
    rng = np.random.default_rng(spec.rng_seed)
    clouds, poses = [], []
    for sid, (px, py, heading) in enumerate(spec.trajectory):
        theta, phi = theta_grid, phi_grid
        if spec.jitter:
            jit = rng.uniform(-JITTER_DEG, JITTER_DEG, size=(theta.size, 2))
            theta, phi = theta + jit[:, 0], phi + jit[:, 1]
        origin = np.array([px, py])
        walls = _walls_near(spec.walls, origin, spec.max_range)
        t = cast_rays(walls, origin, spec.sensor_height, heading, theta, phi, spec.max_range, spec.ground)
        ok = np.isfinite(t)
        th, ph = np.radians(theta[ok]), np.radians(phi[ok])
        pts = t[ok, None] * np.column_stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), np.sin(th)])
        clouds.append(PointCloud(pts, sid))
        poses.append(Pose6DOF(sid, float(px), float(py), spec.sensor_height, 0.0, 0.0, float(heading)))
    return clouds, poses


def scene_to_dict(spec: SyntheticSceneSpec) -> dict:
    return {
        "walls": spec.walls.tolist(),
        "trajectory": spec.trajectory.tolist(),
        "grid": list(spec.grid.as_tuple()),
        "max_range": spec.max_range,
        "rng_seed": spec.rng_seed,
        "jitter": spec.jitter,
        "sensor_height": spec.sensor_height,
        "ground": spec.ground,
    }


def scene_from_dict(d: dict) -> SyntheticSceneSpec:
    try:
        return SyntheticSceneSpec(
            walls=np.asarray(d.get("walls", []), dtype=np.float64),
            trajectory=np.asarray(d["trajectory"], dtype=np.float64),
            grid=GridSpec(*d["grid"]) if "grid" in d else GridSpec(),
            max_range=float(d.get("max_range", 50.0)),
            rng_seed=int(d.get("rng_seed", 0)),
            jitter=bool(d.get("jitter", False)),
            sensor_height=float(d.get("sensor_height", 1.8)),
            ground=bool(d.get("ground", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"invalid scene description: {exc}") from None


def save_scene(spec: SyntheticSceneSpec, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(spec), indent=1) + "\n", encoding="utf-8")


def load_scene(path) -> SyntheticSceneSpec:
    return scene_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- scene presets ---------------------------------------------------------

LEG_SPACING = 1000.0


def _street_walls(rng, x_start, x_stop, y0):
    """Blocks of buildings on both sides of a street running along +x at ``y = y0``."""
    walls = []
    for side in (1.0, -1.0):
        x = x_start + rng.uniform(0.0, 3.0)
        while x < x_stop:
            length = rng.uniform(2.0, 9.0)
            setback = rng.uniform(3.0, 10.0)
            depth = rng.uniform(2.0, 6.0)
            height = rng.uniform(2.5, 20.0)
            front = y0 + side * setback
            back = y0 + side * (setback + depth)
            walls.append((x, front, x + length, front, 0.0, height))
            walls.append((x, front, x, back, 0.0, height))
            walls.append((x + length, front, x + length, back, 0.0, height))
            x += length + rng.uniform(0.5, 5.0)
        # occasional poles close to the curb
        for _ in range(rng.integers(1, 4)):
            px = rng.uniform(x_start, x_stop)
            py = y0 + side * rng.uniform(2.0, 3.0)
            walls.append((px, py, px + 0.3, py, 0.0, rng.uniform(3.0, 6.0)))
    return walls


def corridor_scene(
    n_segments: int = 8,
    scans_per_segment: int = 50,
    step: float = 0.5,
    seed: int = 0,
    grid: GridSpec | None = None,
    max_range: float = 40.0,
    stationary_boundary: int | None = None,
    stationary_scans: int = 20,
    ground: bool = True,
) -> SyntheticSceneSpec:
    """One straight street per segment, each with its own random buildings.

    Streets sit far apart so no two segments see the same walls. With
    ``stationary_boundary=b`` segments ``b-1`` and ``b`` share one street and
    the vehicle stands still for ``stationary_scans`` scans centred on the
    boundary between them.
    """
    if n_segments < 1 or scans_per_segment < 1:
        raise ValidationError("need at least one segment and one scan per segment")
    if stationary_boundary is not None:
        if not 1 <= stationary_boundary < n_segments:
            raise ValidationError(f"stationary boundary must lie in [1, {n_segments - 1}]")
        if stationary_scans > 2 * scans_per_segment:
            raise ValidationError("stationary span longer than the two segments it straddles")
    rng = np.random.default_rng(seed)
    walls, traj = [], []
    leg = 0
    while leg < n_segments:
        joined = stationary_boundary is not None and leg + 1 == stationary_boundary
        n_scans = scans_per_segment * (2 if joined else 1)
        x0, y0 = leg * LEG_SPACING, 0.0
        steps = np.arange(n_scans, dtype=np.float64)
        if joined:
            start = scans_per_segment - stationary_scans // 2
            steps = np.where(steps < start, steps,
                             np.maximum(start, steps - (stationary_scans - 1)))
        xs = x0 + step * steps
        length = step * steps[-1]
        walls += _street_walls(rng, x0 - max_range, x0 + length + max_range, y0)
        traj += [(x, y0, 0.0) for x in xs]
        leg += 2 if joined else 1
    return SyntheticSceneSpec(np.array(walls), np.array(traj), grid or GridSpec(),
                              max_range, seed, False, 1.8, ground)
