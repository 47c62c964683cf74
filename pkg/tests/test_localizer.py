import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensormap.errors import ValidationError
from tensormap.localizer import localize, localize_batch, signature, slice_distances
from tensormap.map_builder import TensorMap, build_map
from tensormap.range_image import GridSpec, ScanMatrix
from tensormap.tucker import TuckerModel

from conftest import COARSE_GRID


@pytest.fixture(scope="module")
def corridor_map(small_corridor):
    _, _, x = small_corridor
    return build_map(x, 20, 3, 4, COARSE_GRID), x


def test_signature_of_training_scan_is_core_slice(corridor_map):
    tmap, x = corridor_map
    s = x[:, :, 27]
    sig = signature(tmap, 1, ScanMatrix(COARSE_GRID, s))
    assert np.abs(sig - tmap.segments[1].core[:, :, 7]).max() <= 1e-10 * np.linalg.norm(s)


def test_signature_zero_scan(corridor_map):
    tmap, _ = corridor_map
    assert not signature(tmap, 0, np.zeros(COARSE_GRID.shape)).any()


def test_signature_full_rank_preserves_distances(small_corridor):
    _, _, x = small_corridor
    I, J = COARSE_GRID.shape
    tmap = build_map(x, 20, I, J, COARSE_GRID)
    s, t = x[:, :, 3], x[:, :, 50]
    d_sig = np.linalg.norm(signature(tmap, 2, s) - signature(tmap, 2, t))
    assert d_sig == pytest.approx(np.linalg.norm(s - t), rel=1e-10)


def test_signature_grid_mismatch(corridor_map):
    tmap, _ = corridor_map
    with pytest.raises(ValidationError):
        signature(tmap, 0, ScanMatrix(GridSpec(), np.zeros(GridSpec().shape)))
    with pytest.raises(ValidationError):
        signature(tmap, 9, np.zeros(COARSE_GRID.shape))


def test_self_match(corridor_map):
    tmap, x = corridor_map
    for m in (0, 19, 33, 79):
        res = localize(tmap, ScanMatrix(COARSE_GRID, x[:, :, m]))
        assert res.global_scan_index == m
        assert (res.segment_index, res.scan_index_in_segment) == divmod(m, 20)
        assert res.distance <= 1e-9 * np.linalg.norm(x[:, :, m])
        assert res.distance <= res.runner_up_distance
        assert res.margin == res.runner_up_distance - res.distance


def test_full_rank_matches_raw_nearest_neighbor(small_corridor):
    _, _, x = small_corridor
    I, J = COARSE_GRID.shape
    train = np.array([m for m in range(x.shape[2]) if m % 5 != 4])
    test = np.array([m for m in range(x.shape[2]) if m % 5 == 4])
    segments = [x[:, :, train[(train >= a) & (train < a + 20)]] for a in range(0, 80, 20)]
    from tensormap.map_builder import assemble_map
    tmap = assemble_map(segments, 20, I, J, COARSE_GRID)
    for q in test:
        raw = np.linalg.norm(x[:, :, train] - x[:, :, q, None], axis=(0, 1))
        res = localize(tmap, x[:, :, q])
        assert train[res.global_scan_index] == train[np.argmin(raw)]


def test_single_scan_map_has_infinite_margin():
    grid = GridSpec(-2, 0, -2, 2, 1)
    x = np.arange(15, dtype=float).reshape(3, 5, 1)
    tmap = build_map(x, 1, 1, 1, grid)
    for q in (np.zeros(grid.shape), np.ones(grid.shape) * 9):
        res = localize(tmap, q)
        assert (res.segment_index, res.global_scan_index) == (0, 0)
        assert math.isinf(res.margin)
        assert res.as_dict()["margin"] is None


def test_ties_go_to_lowest_segment_then_scan():
    grid = GridSpec(-1, 0, -1, 0, 1)
    seg = TuckerModel(np.eye(2), np.eye(2), np.zeros((2, 2, 3)), grid)
    tmap = TensorMap([seg, seg], 3, grid)
    res = localize(tmap, np.zeros(grid.shape))
    assert (res.segment_index, res.scan_index_in_segment, res.margin) == (0, 0, 0.0)


def test_distance_identity(corridor_map, rng):
    tmap, x = corridor_map
    s = x[:, :, 11] + rng.uniform(0, 1, COARSE_GRID.shape)
    for l, dists in enumerate(slice_distances(tmap, s)):
        seg = tmap.segments[l]
        for m in range(0, 20, 6):
            direct = np.linalg.norm(seg.U.T @ (s - x[:, :, 20 * l + m]) @ seg.V)
            assert dists[m] == pytest.approx(direct, rel=1e-10)


def test_sign_flip_does_not_change_decisions(corridor_map, rng):
    tmap, x = corridor_map
    flipped = []
    for seg in tmap.segments:
        U, V, core = seg.U.copy(), seg.V.copy(), seg.core.copy()
        U[:, 0] *= -1
        core[0] *= -1
        V[:, 2] *= -1
        core[:, 2] *= -1
        flipped.append(TuckerModel(U, V, core, seg.grid))
    other = TensorMap(flipped, tmap.k, tmap.grid)
    for m in range(0, 80, 9):
        q = x[:, :, m] + rng.uniform(0, 2, COARSE_GRID.shape)
        a, b = localize(tmap, q), localize(other, q)
        assert a.global_scan_index == b.global_scan_index
        assert abs(a.distance - b.distance) <= 1e-12 * max(1.0, a.distance)


def test_batch_semantics(corridor_map):
    tmap, x = corridor_map
    scans = [ScanMatrix(COARSE_GRID, x[:, :, m], m) for m in (5, 44, 70)]
    assert localize_batch(tmap, []) == []
    assert localize_batch(tmap, scans[:1]) == [localize(tmap, scans[0])]
    fwd = localize_batch(tmap, scans)
    assert localize_batch(tmap, scans[::-1]) == fwd[::-1]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 79), st.floats(0.0, 3.0))
def test_result_invariants(small_corridor, m, noise):
    _, _, x = small_corridor
    tmap = build_map(x, 20, 2, 2, COARSE_GRID)
    q = x[:, :, m] + noise
    res = localize(tmap, q)
    assert 0 <= res.segment_index < tmap.n_segments
    assert 0 <= res.scan_index_in_segment < tmap.lengths[res.segment_index]
    assert res.global_scan_index == tmap.offsets[res.segment_index] + res.scan_index_in_segment
    assert 0 <= res.distance <= res.runner_up_distance
