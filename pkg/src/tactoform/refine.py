"""Touch constraints and latent refinement.

A touch pins cells of the grid: the contact cell (plus patch cells
recovered from the tactile height map) should be occupied, every cell the
sensor passed through should be empty. The quadratic per-cell loss is
v^2 on empty-target cells and (1 - v)^2 on the contact cells; refinement
back-propagates it through the prior decoder and walks the latent code
downhill.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import frames, voxel
from .errors import DimMismatch, OutOfBounds

log = logging.getLogger(__name__)


@dataclass
class TouchRecord:
    """One executed touch attempt, registered into voxel coordinates."""

    hit: bool
    normal: np.ndarray                      # unit approach direction
    ray_cells: np.ndarray                   # (n, 3) free cells crossed, in order
    contact: tuple[int, int, int] | None = None
    height_patch: object | None = None      # tactile.TactileFrame
    patch_cells: np.ndarray | None = None   # (m, 3) extra occupied cells

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-9:
            raise ValueError("approach normal must be unit length")
        self.ray_cells = np.asarray(self.ray_cells, dtype=np.int64).reshape(-1, 3)
        if self.hit and self.contact is None:
            raise ValueError("hit record needs a contact cell")
        if self.contact is not None:
            self.contact = tuple(int(c) for c in self.contact)
            if len(self.ray_cells) and (self.ray_cells == self.contact).all(1).any():
                raise ValueError("contact cell must not appear among ray cells")
        if self.patch_cells is not None:
            self.patch_cells = np.asarray(self.patch_cells,
                                          dtype=np.int64).reshape(-1, 3)


def _flatten(cells: np.ndarray, dims) -> np.ndarray:
    return (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]


def _unflatten(flat: np.ndarray, dims) -> np.ndarray:
    x, rem = np.divmod(flat, dims[1] * dims[2])
    y, z = np.divmod(rem, dims[2])
    return np.stack([x, y, z], axis=1)


def _check_bounds(cells: np.ndarray, dims) -> None:
    if len(cells) == 0:
        return
    if cells.min() < 0 or (cells >= np.asarray(dims)).any():
        raise OutOfBounds("constraint cell outside the grid")


class ConstraintSet:
    """Accumulated touch records with derived target-0 / target-1 cell sets.

    When touches disagree about a cell, the later touch wins; conflicts
    are counted and logged.
    """

    def __init__(self, dims):
        self.dims = tuple(int(d) for d in dims)
        self.records: list[TouchRecord] = []
        self.conflicts = 0

    def __len__(self) -> int:
        return len(self.records)

    def add(self, record: TouchRecord) -> None:
        _check_bounds(record.ray_cells, self.dims)
        if record.contact is not None:
            _check_bounds(np.array([record.contact]), self.dims)
        if record.patch_cells is not None:
            _check_bounds(record.patch_cells, self.dims)
        self.records.append(record)

    def targets(self) -> tuple[np.ndarray, np.ndarray]:
        """(zero_cells, one_cells) as (n, 3) int arrays, later records winning."""
        assigned: dict[int, int] = {}
        for rec in self.records:
            ones = []
            if rec.contact is not None:
                ones.append(np.asarray([rec.contact], dtype=np.int64))
            if rec.patch_cells is not None and len(rec.patch_cells):
                ones.append(rec.patch_cells)
            one_flat = (_flatten(np.concatenate(ones), self.dims)
                        if ones else np.empty(0, dtype=np.int64))
            zero_flat = _flatten(rec.ray_cells, self.dims)
            # within one record the contact evidence wins over ray overlap
            zero_flat = np.setdiff1d(zero_flat, one_flat)
            for flat, target in ((zero_flat, 0), (one_flat, 1)):
                for c in flat.tolist():
                    old = assigned.get(c)
                    if old is not None and old != target:
                        self.conflicts += 1
                        log.debug("constraint conflict at flat cell %d: %d -> %d",
                                  c, old, target)
                    assigned[c] = target
        if not assigned:
            empty = np.empty((0, 3), dtype=np.int64)
            return empty, empty
        flat = np.fromiter(assigned.keys(), dtype=np.int64, count=len(assigned))
        vals = np.fromiter(assigned.values(), dtype=np.int64, count=len(assigned))
        zeros = _unflatten(np.sort(flat[vals == 0]), self.dims)
        ones = _unflatten(np.sort(flat[vals == 1]), self.dims)
        return zeros, ones


def write_constraint_log(cs: ConstraintSet, path) -> None:
    """One touch per line: hit flag, contact cell, normal, ray length."""
    with open(path, "w") as fh:
        for rec in cs.records:
            p0 = rec.contact if rec.contact is not None else (-1, -1, -1)
            nx, ny, nz = (float(c) for c in rec.normal)
            fh.write(f"{int(rec.hit)} {p0[0]} {p0[1]} {p0[2]} "
                     f"{nx!r} {ny!r} {nz!r} {len(rec.ray_cells)}\n")


def read_constraint_log(path) -> list[tuple[bool, tuple | None, np.ndarray, int]]:
    rows = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            hit = bool(int(parts[0]))
            p0 = tuple(int(x) for x in parts[1:4])
            normal = np.array([float(x) for x in parts[4:7]])
            rows.append((hit, p0 if hit else None, normal, int(parts[7])))
    return rows


# --- loss and gradients ---------------------------------------------------------


def touch_loss(grid: voxel.VoxelGrid, constraints: ConstraintSet) -> float:
    """Sum of v^2 over target-0 cells and (1 - v)^2 over target-1 cells."""
    zeros, ones = constraints.targets()
    _check_bounds(zeros, grid.dims)
    _check_bounds(ones, grid.dims)
    v = grid.values
    loss = 0.0
    if len(zeros):
        vz = v[zeros[:, 0], zeros[:, 1], zeros[:, 2]]
        loss += float((vz * vz).sum())
    if len(ones):
        vo = v[ones[:, 0], ones[:, 1], ones[:, 2]]
        loss += float(((1.0 - vo) ** 2).sum())
    return loss


def touch_loss_grad(grid: voxel.VoxelGrid,
                    constraints: ConstraintSet) -> np.ndarray:
    """dL/dv per cell: 2v on target-0 cells, 2(v - 1) on contact cells,
    zero elsewhere."""
    zeros, ones = constraints.targets()
    _check_bounds(zeros, grid.dims)
    _check_bounds(ones, grid.dims)
    grad = np.zeros_like(grid.values)
    v = grid.values
    if len(zeros):
        grad[zeros[:, 0], zeros[:, 1], zeros[:, 2]] = \
            2.0 * v[zeros[:, 0], zeros[:, 1], zeros[:, 2]]
    if len(ones):
        grad[ones[:, 0], ones[:, 1], ones[:, 2]] = \
            2.0 * (v[ones[:, 0], ones[:, 1], ones[:, 2]] - 1.0)
    return grad


def direct_edit(grid: voxel.VoxelGrid,
                constraints: ConstraintSet) -> voxel.VoxelGrid:
    """Baseline update without the prior: write the touch targets straight
    into the voxels and leave everything else alone."""
    zeros, ones = constraints.targets()
    _check_bounds(zeros, grid.dims)
    _check_bounds(ones, grid.dims)
    values = grid.values.copy()
    if len(zeros):
        values[zeros[:, 0], zeros[:, 1], zeros[:, 2]] = 0.0
    if len(ones):
        values[ones[:, 0], ones[:, 1], ones[:, 2]] = 1.0
    return voxel.VoxelGrid(values, grid.frame)


# --- latent descent -------------------------------------------------------------


def constraint_loss(prior, z: np.ndarray, zero_cells: np.ndarray,
                    one_cells: np.ndarray) -> float:
    """Touch loss of decode(z) evaluated only at the constrained cells."""
    n0 = len(zero_cells)
    cells = np.concatenate([
        np.asarray(zero_cells, dtype=np.int64).reshape(-1, 3),
        np.asarray(one_cells, dtype=np.int64).reshape(-1, 3),
    ])
    if len(cells) == 0:
        return 0.0
    v = prior.decode_cells(z, _flatten(cells, prior.dims))
    target = np.zeros(len(cells))
    target[n0:] = 1.0
    return float(((v - target) ** 2).sum())


def descend(prior, z0: np.ndarray, zero_cells: np.ndarray,
            one_cells: np.ndarray, steps: int, lr: float, *,
            scaled: bool = True, max_halvings: int = 5,
            improve_tol: float | None = None,
            persistent_step: bool = False,
            bound_sigma: float | None = 1.0,
            precond_power: float = 1.0,
            one_weight: float = 1.0,
            ridge: float = 0.0) -> np.ndarray:
    """Gradient descent on the latent code against cell constraints.

    With scaled=True the step is taken in the prior's whitened
    coordinates (each latent axis in units of its corpus singular value),
    which is plain gradient descent with the stated learning rate in that
    parameterization. Iterates are projected back into the corpus
    coordinate box |z_d| <= bound_sigma * scale_d, the usual guard that
    keeps a linear eigenmodel on plausible shapes (the constraint loss
    alone has its minimum at infinity). A monotonic safeguard halves the
    step while a move would increase the loss. With persistent_step the
    shrunken step carries over to later iterations and relaxes again on
    success; otherwise every iteration restarts from lr and gives up
    after max_halvings, leaving z unchanged.
    """
    z = np.asarray(z0, dtype=np.float64).copy()
    if z.shape != (prior.latent_dim,):
        raise DimMismatch("latent size does not match prior")
    n0, n1 = len(zero_cells), len(one_cells)
    if n0 + n1 == 0 or steps <= 0:
        return z

    dims = prior.dims
    flat = np.concatenate([
        _flatten(np.asarray(zero_cells, dtype=np.int64).reshape(-1, 3), dims),
        _flatten(np.asarray(one_cells, dtype=np.int64).reshape(-1, 3), dims),
    ])
    if flat.min() < 0 or flat.max() >= prior.mean.size:
        raise OutOfBounds("constraint cell outside the grid")
    target = np.zeros(n0 + n1)
    target[n0:] = 1.0
    # single precision on vision-scale constraint sets halves the memory
    # traffic; small per-touch sets stay in double
    dtype = np.float32 if flat.size * prior.latent_dim > 4_000_000 else np.float64
    basis_c = np.ascontiguousarray(prior.basis[:, flat], dtype=dtype)
    mean_c = prior.mean[flat].astype(dtype)
    target = target.astype(dtype)
    # per-cell weights rebalance surface evidence against the far more
    # numerous free-space cells (used by the vision fit; touches pass 1)
    weights = np.ones(n0 + n1, dtype=dtype)
    weights[n0:] = dtype(one_weight)
    if scaled:
        # per-coordinate steps in units of the corpus scale; the top scale
        # normalizes so lr keeps one global meaning across priors
        top = max(float(prior.scales.max()), 1e-300)
        step_scale = lr * top * (prior.scales / top) ** precond_power
    else:
        step_scale = np.full(prior.latent_dim, lr)
    bound = None if bound_sigma is None else bound_sigma * prior.scales

    def project(zv):
        if bound is None:
            return zv
        return np.clip(zv, -bound, bound)

    # coefficient prior: ridge in whitened units keeps unconstrained
    # shape modes near the corpus mean instead of free-floating
    inv_scale2 = np.zeros(prior.latent_dim)
    if ridge > 0.0:
        nz = prior.scales > 0
        inv_scale2[nz] = 1.0 / prior.scales[nz] ** 2

    def eval_logits(logits, zv):
        v = 1.0 / (1.0 + np.exp(-np.clip(logits, -500.0, 500.0)))
        r = v - target
        loss = float((weights * r * r).astype(np.float64).sum())
        if ridge > 0.0:
            loss += ridge * float(zv * zv @ inv_scale2)
        return loss, v, r

    z = project(z)
    logits_z = mean_c + z.astype(dtype) @ basis_c
    loss, v, r = eval_logits(logits_z, z)
    alpha = 1.0
    for _ in range(steps):
        if loss == 0.0:
            break
        grad = (basis_c @ (2.0 * weights * r * v * (1.0 - v))).astype(np.float64)
        if ridge > 0.0:
            grad += 2.0 * ridge * inv_scale2 * z
        # candidate logits along the fixed descent direction are affine in
        # the trial size, so backtracking costs one matvec total
        dir_logits = (step_scale * grad).astype(dtype) @ basis_c
        moved = False
        trial = alpha
        budget = 60 if persistent_step else max_halvings
        for _attempt in range(budget + 1):
            cand = project(z - trial * step_scale * grad)
            if bound is None or np.array_equal(cand, z - trial * step_scale * grad):
                cand_logits = logits_z - dtype(trial) * dir_logits
            else:   # projection clipped the step; recompute exactly
                cand_logits = mean_c + cand.astype(dtype) @ basis_c
            cand_loss, cand_v, cand_r = eval_logits(cand_logits, cand)
            if cand_loss < loss:
                improvement = loss - cand_loss
                z, loss, v, r = cand, cand_loss, cand_v, cand_r
                logits_z = cand_logits
                moved = True
                if persistent_step:
                    alpha = min(trial * 1.3, 1.0)
                if improve_tol is not None and improvement < improve_tol:
                    return z
                break
            trial *= 0.5
        if not moved:
            if persistent_step:
                alpha = trial
            else:
                break
    return z


def refine_latent(prior, z: np.ndarray, constraints: ConstraintSet,
                  steps: int = 10, lr: float = 0.001) -> np.ndarray:
    """Per-touch latent update: gradient descent against the accumulated
    constraints, never returning a higher constraint loss than it got."""
    zeros, ones = constraints.targets()
    return descend(prior, z, zeros, ones, steps=steps, lr=lr,
                   scaled=True, max_halvings=5, persistent_step=False)


def patch_to_cells(patch, spec, frame: frames.VoxelFrame, dims,
                   press_depth_mm: float) -> np.ndarray:
    """Convert a tactile height patch to occupied-cell evidence.

    The patch pose origin is the pressed plane center and the
    first-contact plane sits press_depth_mm in front of it along the
    approach normal. Samples whose recovered world point falls more than
    half a voxel behind that contact plane (height below
    press_depth - 0.5 voxel) are dropped as non-contact gel.
    """
    pose = patch.pose
    if pose is None:
        return np.empty((0, 3), dtype=np.int64)
    f = patch.height
    keep = f >= press_depth_mm - 0.5 * frame.scale
    if not keep.any():
        return np.empty((0, 3), dtype=np.int64)
    r_idx, c_idx = np.nonzero(keep)
    u_off = (c_idx + 0.5) * spec.pitch_u - spec.contact_width / 2.0
    v_off = (r_idx + 0.5) * spec.pitch_v - spec.contact_height / 2.0
    # the recovered point sits on the surface; step half a voxel inward so
    # rounding lands in the occupied cell rather than the free neighbor
    pts = (pose.origin
           + u_off[:, None] * pose.axis_u
           + v_off[:, None] * pose.axis_v
           + (0.5 * frame.scale - f[keep])[:, None] * pose.normal)
    cells = np.round(frames.world_to_voxel(frame, pts)).astype(np.int64)
    inside = ((cells >= 0).all(axis=1)
              & (cells < np.asarray(dims)).all(axis=1))
    if not inside.any():
        return np.empty((0, 3), dtype=np.int64)
    return np.unique(cells[inside], axis=0)
