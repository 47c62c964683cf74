import numpy as np
import pytest

from tensormap.errors import FormatError, ValidationError
from tensormap.localizer import slice_distances
from tensormap.map_builder import (
    MemoryReport,
    TensorMap,
    build_map,
    load_map,
    map_from_bytes,
    map_to_bytes,
    map_units,
    memory_report,
    partition,
    save_map,
)
from tensormap.range_image import GridSpec
from tensormap.tucker import TuckerModel, reconstruct

from conftest import COARSE_GRID


def _stub_map(I, J, K, r1, r2, k):
    """A map with the right shapes and no fitting (for storage arithmetic)."""
    grid = GridSpec(-(I - 1), 0, -(J - 1) // 2, (J - 1) // 2, 1)
    assert grid.shape == (I, J)
    lengths = [k] * (K // k) + ([K % k] if K % k else [])
    segs = [TuckerModel(np.eye(I)[:, :r1], np.eye(J)[:, :r2], np.zeros((r1, r2, kl)), grid) for kl in lengths]
    return TensorMap(segs, k, grid)


def test_partition_ford_sizes():
    x = np.zeros((1, 1, 3800))
    assert [p.shape[2] for p in partition(x, 760)] == [760] * 5


def test_partition_remainder(rng):
    x = rng.normal(size=(2, 3, 10))
    parts = partition(x, 4)
    assert [p.shape[2] for p in parts] == [4, 4, 2]
    np.testing.assert_array_equal(np.concatenate(parts, axis=2), x)


def test_partition_identity(rng):
    x = rng.normal(size=(2, 3, 5))
    (only,) = partition(x, 5)
    np.testing.assert_array_equal(only, x)


@pytest.mark.parametrize("k", [0, -3, 11])
def test_partition_invalid(k):
    with pytest.raises(ValidationError):
        partition(np.zeros((1, 1, 10)), k)


def test_ford_memory_arithmetic():
    tmap = _stub_map(30, 361, 3800, 5, 5, 760)
    assert tmap.n_segments == 5
    assert all(s.core.shape == (5, 5, 760) for s in tmap.segments)
    rep = memory_report(tmap, raw_return_count=77_000 * 3800)
    # 5 * (30*5 + 361*5) + 3800 * 5 * 5
    assert rep.map_units == 5 * (150 + 1805) + 95_000 == 104_775
    assert rep.full_tensor_units == 30 * 361 * 3800 == 41_154_000
    assert rep.full_ratio == pytest.approx(392.79, abs=0.01)
    assert rep.raw_cloud_units == 877_800_000
    assert rep.raw_ratio == pytest.approx(8378.0, abs=0.5)


@pytest.mark.parametrize(("K", "k"), [(100, 10), (100, 25), (60, 60)])
def test_map_units_closed_form(K, k):
    tmap = _stub_map(5, 9, K, 2, 3, k)
    assert memory_report(tmap).map_units == map_units(5, 9, K, 2, 3, K // k)


def test_map_units_with_remainder():
    tmap = _stub_map(5, 9, 23, 2, 3, 10)
    assert memory_report(tmap).map_units == 3 * (5 * 2 + 9 * 3) + 23 * 2 * 3


def test_no_compression_corner():
    I, J, K = 5, 9, 7
    rep = memory_report(_stub_map(I, J, K, I, J, K))
    assert rep.map_units == I * I + J * J + K * I * J
    assert rep.full_ratio < 1


def test_raw_ratio_absent_without_count():
    assert memory_report(_stub_map(5, 9, 10, 1, 1, 5)).raw_ratio is None
    assert isinstance(memory_report(_stub_map(5, 9, 10, 1, 1, 5)), MemoryReport)


def test_build_map_structure(small_corridor):
    _, _, x = small_corridor
    tmap = build_map(x, 20, 3, 4, COARSE_GRID)
    assert tmap.n_segments == 4
    assert tmap.offsets == [0, 20, 40, 60]
    assert tmap.ranks == (3, 4)


def test_build_single_segment(small_corridor):
    _, _, x = small_corridor
    assert build_map(x, x.shape[2], 2, 2, COARSE_GRID).n_segments == 1


def test_build_full_rank_lossless(small_corridor):
    _, _, x = small_corridor
    I, J = COARSE_GRID.shape
    tmap = build_map(x, 20, I, J, COARSE_GRID)
    for seg, part in zip(tmap.segments, partition(x, 20)):
        assert np.linalg.norm(reconstruct(seg) - part) <= 1e-10 * np.linalg.norm(part)


def test_build_grid_mismatch(small_corridor):
    _, _, x = small_corridor
    with pytest.raises(ValidationError):
        build_map(x, 20, 2, 2, GridSpec())


def test_save_load_bit_exact(tmp_path, small_corridor):
    _, _, x = small_corridor
    tmap = build_map(x, 30, 3, 5, COARSE_GRID)  # 80 scans: remainder segment of 20
    path = tmp_path / "m.tmap"
    save_map(tmap, path)
    back = load_map(path)
    assert back.k == 30 and back.grid == COARSE_GRID and back.offsets == tmap.offsets
    assert back.lengths == [30, 30, 20]
    for a, b in zip(tmap.segments, back.segments):
        for name in ("U", "V", "core"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    assert map_to_bytes(back) == path.read_bytes()
    for m in range(0, x.shape[2], 7):
        for da, db in zip(slice_distances(tmap, x[:, :, m]), slice_distances(back, x[:, :, m])):
            assert da.tobytes() == db.tobytes()


def test_build_is_byte_deterministic(small_corridor):
    _, _, x = small_corridor
    a = map_to_bytes(build_map(x, 20, 3, 3, COARSE_GRID))
    b = map_to_bytes(build_map(x.copy(), 20, 3, 3, COARSE_GRID))
    assert a == b


def test_header_layout(small_corridor):
    _, _, x = small_corridor
    raw = map_to_bytes(build_map(x, 40, 2, 3, COARSE_GRID))
    assert raw[:4] == b"TMAP"
    assert np.frombuffer(raw[4:28], "<u4").tolist() == [1, 5, 91, 2, 3, 2]
    per_segment = 12 + 8 * (5 * 2 + 91 * 3 + 2 * 3 * 40)
    assert len(raw) == 28 + 2 * per_segment + 48


def test_core_stored_mode1_fastest(small_corridor):
    _, _, x = small_corridor
    tmap = build_map(x, 80, 2, 3, COARSE_GRID)
    raw = map_to_bytes(tmap)
    start = 28 + 12 + 8 * (5 * 2 + 91 * 3)
    first = np.frombuffer(raw[start:start + 8 * 3], "<f8")
    core = tmap.segments[0].core
    np.testing.assert_array_equal(first, [core[0, 0, 0], core[1, 0, 0], core[0, 1, 0]])


def test_load_wrong_magic(small_corridor):
    _, _, x = small_corridor
    raw = bytearray(map_to_bytes(build_map(x, 40, 2, 2, COARSE_GRID)))
    raw[:4] = b"XMAP"
    with pytest.raises(FormatError, match="magic") as exc:
        map_from_bytes(bytes(raw))
    assert exc.value.offset == 0


def test_load_wrong_version(small_corridor):
    _, _, x = small_corridor
    raw = bytearray(map_to_bytes(build_map(x, 40, 2, 2, COARSE_GRID)))
    raw[4:8] = (7).to_bytes(4, "little")
    with pytest.raises(FormatError, match="version"):
        map_from_bytes(bytes(raw))


@pytest.mark.parametrize("cut", [0, 3, 20, 100, 5000, -1])
def test_load_truncated(small_corridor, cut):
    _, _, x = small_corridor
    raw = map_to_bytes(build_map(x, 40, 2, 2, COARSE_GRID))
    with pytest.raises(FormatError) as exc:
        map_from_bytes(raw[:cut])
    assert exc.value.offset is not None


def test_load_trailing_garbage(small_corridor):
    _, _, x = small_corridor
    raw = map_to_bytes(build_map(x, 40, 2, 2, COARSE_GRID))
    with pytest.raises(FormatError, match="trailing"):
        map_from_bytes(raw + b"\0")


def test_tensormap_validates_offsets(rng):
    grid = GridSpec(-2, 0, -2, 2, 1)
    seg = TuckerModel(np.eye(3)[:, :1], np.eye(5)[:, :1], np.zeros((1, 1, 4)), grid)
    with pytest.raises(ValidationError):
        TensorMap([seg, seg], 4, grid, [0, 3])
    with pytest.raises(ValidationError):
        TensorMap([], 4, grid)
