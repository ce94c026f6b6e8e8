"""Voxel grid, surface extraction, Chamfer distance, and VXG1 round trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tactoform import frames, voxel
from tactoform.errors import (BadMagic, DimMismatch, EmptyCloud, EmptySurface,
                              TruncatedFile)


def brute_chamfer(a: np.ndarray, b: np.ndarray) -> float:
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return float(d.min(axis=1).sum() + d.min(axis=0).sum())


def brute_shell(occ: np.ndarray) -> set[tuple[int, int, int]]:
    dims = occ.shape
    out = set()
    for x in range(dims[0]):
        for y in range(dims[1]):
            for z in range(dims[2]):
                if not occ[x, y, z]:
                    continue
                for dx, dy, dz in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                                   (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                    nx, ny, nz = x + dx, y + dy, z + dz
                    outside = not (0 <= nx < dims[0] and 0 <= ny < dims[1]
                                   and 0 <= nz < dims[2])
                    if outside or not occ[nx, ny, nz]:
                        out.add((x, y, z))
                        break
    return out


class TestConfidence:
    def test_midpoint_is_zero(self):
        g = voxel.VoxelGrid(np.full((3, 3, 3), 0.5))
        assert (voxel.confidence(g).values == 0.0).all()

    def test_certain_is_half(self):
        g = voxel.VoxelGrid(np.ones((2, 2, 2)))
        assert (voxel.confidence(g).values == 0.5).all()

    def test_direct_arithmetic(self):
        vals = np.array([0.1, 0.6, 0.5]).reshape(3, 1, 1)
        c = voxel.confidence(voxel.VoxelGrid(vals)).values.ravel()
        np.testing.assert_allclose(c, [0.4, 0.1, 0.0])

    def test_rederivation_identical(self):
        rng = np.random.default_rng(0)
        g = voxel.VoxelGrid(rng.random((4, 5, 6)))
        a = voxel.confidence(g).values
        b = voxel.confidence(g).values
        assert np.array_equal(a, b)


class TestExtractSurface:
    def test_single_cell(self):
        v = np.zeros((5, 5, 5))
        v[2, 3, 1] = 1.0
        pc = voxel.extract_surface(voxel.VoxelGrid(v))
        np.testing.assert_array_equal(pc.points, [[2.0, 3.0, 1.0]])

    def test_full_cube_shell_against_brute_force(self):
        occ = np.ones((4, 4, 4), dtype=bool)
        expected = brute_shell(occ)
        assert len(expected) == 56  # 4^3 minus the 2^3 interior
        pc = voxel.extract_surface(voxel.VoxelGrid(occ.astype(float)))
        got = {tuple(int(c) for c in p) for p in pc.points}
        assert got == expected

    def test_random_grid_matches_brute_force(self):
        rng = np.random.default_rng(3)
        occ = rng.random((6, 5, 7)) < 0.4
        occ[0, 0, 0] = True
        pc = voxel.extract_surface(voxel.VoxelGrid(occ.astype(float)))
        got = {tuple(int(c) for c in p) for p in pc.points}
        assert got == brute_shell(occ)

    def test_below_threshold_raises(self):
        g = voxel.VoxelGrid(np.full((3, 3, 3), 0.4))
        with pytest.raises(EmptySurface):
            voxel.extract_surface(g, 0.5)

    def test_surface_subset_of_occupied(self):
        rng = np.random.default_rng(7)
        vals = rng.random((8, 8, 8))
        g = voxel.VoxelGrid(vals)
        pc = voxel.extract_surface(g, 0.5)
        for p in pc.points:
            assert vals[int(p[0]), int(p[1]), int(p[2])] >= 0.5

    def test_world_frame_mapping(self):
        v = np.zeros((4, 4, 4))
        v[1, 2, 3] = 1.0
        frame = frames.VoxelFrame.with_scale(np.zeros(3), [10.0, 0.0, 0.0], 2.0)
        pc = voxel.extract_surface(voxel.VoxelGrid(v, frame))
        np.testing.assert_allclose(pc.points, [[12.0, 4.0, 6.0]])


class TestChamfer:
    def test_identical_clouds_zero(self):
        a = voxel.PointCloud(np.random.default_rng(0).random((20, 3)))
        assert voxel.chamfer_distance(a, a) == 0.0

    def test_two_points(self):
        a = voxel.PointCloud([[0.0, 0.0, 0.0]])
        b = voxel.PointCloud([[3.0, 0.0, 0.0]])
        assert voxel.chamfer_distance(a, b) == pytest.approx(6.0)
        assert voxel.chamfer_distance_normalized(a, b) == pytest.approx(6.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            a = rng.random((50, 3)) * 10
            b = rng.random((50, 3)) * 10
            got = voxel.chamfer_distance(voxel.PointCloud(a), voxel.PointCloud(b))
            want = brute_chamfer(a, b)
            assert got == pytest.approx(want, rel=1e-9)

    def test_normalization(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((30, 3)), rng.random((40, 3))
        pa, pb = voxel.PointCloud(a), voxel.PointCloud(b)
        d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        want = d.min(axis=1).mean() + d.min(axis=0).mean()
        assert voxel.chamfer_distance_normalized(pa, pb) == pytest.approx(want)

    def test_empty_cloud_raises(self):
        a = voxel.PointCloud(np.empty((0, 3)))
        b = voxel.PointCloud([[0.0, 0.0, 0.0]])
        with pytest.raises(EmptyCloud):
            voxel.chamfer_distance(a, b)

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_symmetry_and_translation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a = voxel.PointCloud(rng.random((12, 3)))
        b = voxel.PointCloud(rng.random((9, 3)))
        assert voxel.chamfer_distance(a, b) == pytest.approx(
            voxel.chamfer_distance(b, a), rel=1e-12)
        shift = rng.normal(size=3) * 100
        a2 = voxel.PointCloud(a.points + shift)
        b2 = voxel.PointCloud(b.points + shift)
        assert voxel.chamfer_distance(a2, b2) == pytest.approx(
            voxel.chamfer_distance(a, b), rel=1e-9)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        vals = rng.random((3, 4, 5)).astype(np.float32).astype(np.float64)
        g = voxel.VoxelGrid(vals)
        path = tmp_path / "g.vxg"
        voxel.write_grid(g, path)
        g2 = voxel.read_grid(path)
        assert g2.dims == (3, 4, 5)
        assert np.array_equal(g.values, g2.values)

    def test_memory_order_is_z_fastest(self, tmp_path):
        x, y, z = 2, 3, 4
        vals = np.zeros((x, y, z))
        vals[1, 2, 3] = 1.0
        path = tmp_path / "order.vxg"
        voxel.write_grid(voxel.VoxelGrid(vals), path)
        payload = np.frombuffer(path.read_bytes()[16:], dtype="<f4")
        assert payload[(1 * y + 2) * z + 3] == 1.0
        assert payload.sum() == 1.0

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.vxg"
        path.write_bytes(b"NOPE" + b"\0" * 20)
        with pytest.raises(BadMagic):
            voxel.read_grid(path)

    def test_truncated_payload(self, tmp_path):
        import struct
        path = tmp_path / "trunc.vxg"
        payload = np.zeros(63, dtype="<f4").tobytes()
        path.write_bytes(b"VXG1" + struct.pack("<3I", 4, 4, 4) + payload)
        with pytest.raises(TruncatedFile):
            voxel.read_grid(path)

    def test_trailing_bytes(self, tmp_path):
        import struct
        path = tmp_path / "extra.vxg"
        payload = np.zeros(65, dtype="<f4").tobytes()
        path.write_bytes(b"VXG1" + struct.pack("<3I", 4, 4, 4) + payload)
        with pytest.raises(DimMismatch):
            voxel.read_grid(path)

    @given(values=st.lists(st.floats(min_value=0.0, max_value=1.0, width=32),
                           min_size=8, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_property(self, tmp_path_factory, values):
        vals = np.array(values, dtype=np.float64).reshape(2, 2, 2)
        g = voxel.VoxelGrid(vals)
        path = tmp_path_factory.mktemp("vxg") / "p.vxg"
        voxel.write_grid(g, path)
        assert np.array_equal(voxel.read_grid(path).values, vals)


class TestMaxPool:
    def test_pool_matches_blocks(self):
        rng = np.random.default_rng(2)
        vals = rng.random((4, 4, 4))
        pooled = voxel.max_pool(voxel.VoxelGrid(vals), 2).values
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    block = vals[2 * i:2 * i + 2, 2 * j:2 * j + 2,
                                 2 * k:2 * k + 2]
                    assert pooled[i, j, k] == block.max()

    def test_indivisible_raises(self):
        g = voxel.VoxelGrid(np.zeros((3, 4, 4)))
        with pytest.raises(ValueError):
            voxel.max_pool(g, 2)
