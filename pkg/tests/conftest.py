import functools

import numpy as np
import pytest

from tensormap.range_image import GridSpec, matricize_scan, stack_scans
from tensormap.synthetic import corridor_scene, generate_synthetic_dataset

FORD_GRID = GridSpec()
# 5 x 91 cells; keeps full-rank maps cheap
COARSE_GRID = GridSpec(-12.0, 4.0, -180.0, 180.0, 4.0)


@functools.lru_cache(maxsize=None)
def corridor(grid=FORD_GRID, n_segments=8, scans_per_segment=50, seed=0, stationary_boundary=None):
    """(clouds, poses, tensor) for a corridor scene; cached across tests."""
    spec = corridor_scene(n_segments, scans_per_segment, seed=seed, grid=grid,
                          stationary_boundary=stationary_boundary)
    clouds, poses = generate_synthetic_dataset(spec)
    x = stack_scans([matricize_scan(c, grid) for c in clouds])
    x.setflags(write=False)
    return clouds, poses, x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corridor():
    return corridor(COARSE_GRID, n_segments=4, scans_per_segment=20)
