"""Touch loss, gradients, constraint bookkeeping, and latent refinement."""

import numpy as np
import pytest

from tactoform import refine, voxel
from tactoform.errors import OutOfBounds
from tests.conftest import make_random_prior

DIMS = (6, 6, 6)


def hit_record(contact, ray_cells, normal=(0.0, 0.0, -1.0)):
    return refine.TouchRecord(hit=True, normal=np.asarray(normal, float),
                              ray_cells=np.asarray(ray_cells, np.int64),
                              contact=contact)


def miss_record(ray_cells, normal=(0.0, 0.0, -1.0)):
    return refine.TouchRecord(hit=False, normal=np.asarray(normal, float),
                              ray_cells=np.asarray(ray_cells, np.int64))


def single_hit_set(value_on_cells=None):
    cs = refine.ConstraintSet(DIMS)
    cs.add(hit_record((3, 3, 1), [[3, 3, 4], [3, 3, 3], [3, 3, 2]]))
    return cs


class TestTouchLoss:
    def test_exact_satisfaction_is_zero(self):
        vals = np.zeros(DIMS)
        vals[3, 3, 1] = 1.0
        assert refine.touch_loss(voxel.VoxelGrid(vals), single_hit_set()) == 0.0

    def test_half_values(self):
        grid = voxel.VoxelGrid(np.full(DIMS, 0.5))
        cs = single_hit_set()
        m = 3
        assert refine.touch_loss(grid, cs) == pytest.approx(0.25 * (m + 1))

    def test_miss_loss(self):
        grid = voxel.VoxelGrid(np.full(DIMS, 0.3))
        cs = refine.ConstraintSet(DIMS)
        cells = [[1, 1, z] for z in range(5)]
        cs.add(miss_record(cells))
        assert refine.touch_loss(grid, cs) == pytest.approx(0.09 * 5)

    def test_out_of_bounds(self):
        cs = refine.ConstraintSet(DIMS)
        with pytest.raises(OutOfBounds):
            cs.add(miss_record([[9, 0, 0]]))


class TestTouchLossGrad:
    def test_satisfied_gradient_zero(self):
        vals = np.zeros(DIMS)
        vals[3, 3, 1] = 1.0
        g = refine.touch_loss_grad(voxel.VoxelGrid(vals), single_hit_set())
        assert (g == 0.0).all()

    def test_half_values_signs(self):
        grid = voxel.VoxelGrid(np.full(DIMS, 0.5))
        g = refine.touch_loss_grad(grid, single_hit_set())
        assert g[3, 3, 2] == pytest.approx(1.0)
        assert g[3, 3, 1] == pytest.approx(-1.0)
        assert g[0, 0, 0] == 0.0

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        vals = rng.uniform(0.05, 0.95, DIMS)
        grid = voxel.VoxelGrid(vals)
        cs = refine.ConstraintSet(DIMS)
        cs.add(hit_record((2, 4, 1), [[2, 4, 4], [2, 4, 3], [2, 4, 2]]))
        cs.add(miss_record([[5, 5, z] for z in range(4)]))
        grad = refine.touch_loss_grad(grid, cs)
        step = 1e-6
        zeros, ones = cs.targets()
        for cell in np.concatenate([zeros, ones]):
            plus = vals.copy()
            plus[tuple(cell)] += step
            minus = vals.copy()
            minus[tuple(cell)] -= step
            fd = (refine.touch_loss(voxel.VoxelGrid(plus), cs)
                  - refine.touch_loss(voxel.VoxelGrid(minus), cs)) / (2 * step)
            assert grad[tuple(cell)] == pytest.approx(fd, abs=1e-6)


class TestConstraintSet:
    def test_later_touch_wins(self):
        cs = refine.ConstraintSet(DIMS)
        cs.add(hit_record((3, 3, 2), [[3, 3, 4], [3, 3, 3]]))
        # a later miss sweeps through the earlier contact cell
        cs.add(miss_record([[3, 3, 2], [3, 3, 1]]))
        zeros, ones = cs.targets()
        zero_set = {tuple(c) for c in zeros}
        assert (3, 3, 2) in zero_set
        assert len(ones) == 0
        assert cs.conflicts == 1

    def test_targets_disjoint(self):
        rng = np.random.default_rng(3)
        cs = refine.ConstraintSet(DIMS)
        for i in range(6):
            cells = rng.integers(0, 6, size=(4, 3))
            contact = tuple(rng.integers(0, 6, size=3))
            cells = cells[~(cells == np.asarray(contact)).all(1)]
            cs.add(hit_record(contact, cells))
        zeros, ones = cs.targets()
        zset = {tuple(c) for c in zeros}
        oset = {tuple(c) for c in ones}
        assert not (zset & oset)

    def test_patch_cells_become_targets(self):
        cs = refine.ConstraintSet(DIMS)
        rec = refine.TouchRecord(hit=True, normal=np.array([0.0, 0, -1.0]),
                                 ray_cells=np.empty((0, 3), np.int64),
                                 contact=(2, 2, 2),
                                 patch_cells=np.array([[2, 3, 2], [3, 2, 2]]))
        cs.add(rec)
        _, ones = cs.targets()
        assert {tuple(c) for c in ones} == {(2, 2, 2), (2, 3, 2), (3, 2, 2)}

    def test_log_round_trip(self, tmp_path):
        cs = refine.ConstraintSet(DIMS)
        cs.add(hit_record((1, 2, 3), [[1, 2, 5], [1, 2, 4]]))
        cs.add(miss_record([[0, 0, z] for z in range(3)]))
        path = tmp_path / "touches.log"
        refine.write_constraint_log(cs, path)
        rows = refine.read_constraint_log(path)
        assert rows[0][0] is True and rows[0][1] == (1, 2, 3)
        assert rows[0][3] == 2
        assert rows[1][0] is False and rows[1][1] is None and rows[1][3] == 3

    def test_record_validation(self):
        with pytest.raises(ValueError):
            refine.TouchRecord(hit=True, normal=np.array([0, 0, -2.0]),
                               ray_cells=np.empty((0, 3)), contact=(0, 0, 0))
        with pytest.raises(ValueError):
            refine.TouchRecord(hit=True, normal=np.array([0, 0, -1.0]),
                               ray_cells=np.array([[1, 1, 1]]), contact=(1, 1, 1))


class TestDirectEdit:
    def test_hit_changes_exactly_constrained_cells(self):
        rng = np.random.default_rng(1)
        vals = rng.uniform(0.2, 0.8, DIMS)
        grid = voxel.VoxelGrid(vals)
        cs = single_hit_set()
        edited = refine.direct_edit(grid, cs)
        diff = np.argwhere(edited.values != vals)
        assert len(diff) == 4   # contact + 3 ray cells
        assert edited.values[3, 3, 1] == 1.0
        assert edited.values[3, 3, 2] == 0.0

    def test_empty_constraints_identical(self):
        grid = voxel.VoxelGrid(np.random.default_rng(2).random(DIMS))
        edited = refine.direct_edit(grid, refine.ConstraintSet(DIMS))
        assert np.array_equal(edited.values, grid.values)

    def test_idempotent(self):
        grid = voxel.VoxelGrid(np.random.default_rng(3).random(DIMS))
        cs = single_hit_set()
        once = refine.direct_edit(grid, cs)
        twice = refine.direct_edit(once, cs)
        assert np.array_equal(once.values, twice.values)


class TestLatentDescent:
    def test_empty_constraints_unchanged(self, tiny_prior):
        z = np.arange(tiny_prior.latent_dim, dtype=float)
        cs = refine.ConstraintSet(tiny_prior.dims)
        out = refine.refine_latent(tiny_prior, z, cs)
        assert np.array_equal(out, z)

    def test_single_hit_decreases_loss(self):
        # build a prior whose mean puts the contact cell at exactly 0.5
        p = make_random_prior(seed=5)
        p.mean[:] = 0.0
        cs = refine.ConstraintSet(p.dims)
        cs.add(hit_record((4, 4, 2), [[4, 4, 5], [4, 4, 4], [4, 4, 3]]))
        zeros, ones = cs.targets()
        z0 = np.zeros(p.latent_dim)
        before = refine.constraint_loss(p, z0, zeros, ones)
        z1 = refine.descend(p, z0, zeros, ones, steps=1, lr=0.001)
        after = refine.constraint_loss(p, z1, zeros, ones)
        assert after < before

    def test_monotonic_safeguard(self, tiny_prior):
        rng = np.random.default_rng(11)
        for trial in range(5):
            cs = refine.ConstraintSet(tiny_prior.dims)
            contact = tuple(rng.integers(0, 6, 3))
            cells = rng.integers(0, 6, size=(5, 3))
            cells = cells[~(cells == np.asarray(contact)).all(1)]
            cs.add(hit_record(contact, cells))
            zeros, ones = cs.targets()
            z0 = rng.normal(size=tiny_prior.latent_dim) * 10
            before = refine.constraint_loss(tiny_prior, z0, zeros, ones)
            z1 = refine.refine_latent(tiny_prior, z0, cs, steps=10, lr=0.5)
            after = refine.constraint_loss(tiny_prior, z1, zeros, ones)
            assert after <= before + 1e-12

    def test_chain_rule_gradient_matches_finite_differences(self, tiny_prior):
        rng = np.random.default_rng(4)
        zero_cells = rng.integers(0, 6, size=(8, 3))
        one_cells = rng.integers(0, 6, size=(4, 3))
        z = rng.normal(size=tiny_prior.latent_dim)

        flat = np.concatenate([
            refine._flatten(zero_cells, tiny_prior.dims),
            refine._flatten(one_cells, tiny_prior.dims)])
        target = np.concatenate([np.zeros(8), np.ones(4)])

        def loss(zv):
            v = tiny_prior.decode_cells(zv, flat)
            return float(((v - target) ** 2).sum())

        v = tiny_prior.decode_cells(z, flat)
        analytic = tiny_prior.basis[:, flat] @ (2 * (v - target) * v * (1 - v))
        step = 1e-5
        fd = np.empty_like(analytic)
        for d in range(tiny_prior.latent_dim):
            dz = np.zeros_like(z)
            dz[d] = step
            fd[d] = (loss(z + dz) - loss(z - dz)) / (2 * step)
        assert np.abs(analytic - fd).max() <= 1e-4 * max(np.abs(fd).max(), 1e-9)

    def test_bound_projection(self, tiny_prior):
        rng = np.random.default_rng(6)
        cs = refine.ConstraintSet(tiny_prior.dims)
        cs.add(hit_record((1, 1, 1), [[1, 1, 4], [1, 1, 3], [1, 1, 2]]))
        zeros, ones = cs.targets()
        z = refine.descend(tiny_prior, np.zeros(tiny_prior.latent_dim),
                           zeros, ones, steps=50, lr=1.0)
        assert (np.abs(z) <= tiny_prior.scales + 1e-12).all()
