"""Voxel grid ray traversal (Amanatides-Woo 6-connected stepping).

All functions work in voxel coordinates under the cell-center convention:
cell (i, j, k) spans [i - 0.5, i + 0.5) on each axis. Ray parameters t are
measured in the caller's units, so pass unit direction vectors when t
should be a metric distance.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-9


def slab_interval(origins: np.ndarray, dirs: np.ndarray,
                  dims) -> tuple[np.ndarray, np.ndarray]:
    """Parameter interval [t_enter, t_exit] where each ray is inside the grid
    box; empty intervals have t_enter > t_exit."""
    lo = -0.5
    hi = np.asarray(dims, dtype=np.float64) - 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origins) / dirs
        t2 = (hi - origins) / dirs
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    zero = dirs == 0.0
    if zero.any():
        inside = (origins >= lo) & (origins <= hi)
        tmin = np.where(zero, np.where(inside, -np.inf, np.inf), tmin)
        tmax = np.where(zero, np.where(inside, np.inf, -np.inf), tmax)
    return tmin.max(axis=-1), tmax.min(axis=-1)


def traverse_ray(dims, origin, direction, t_max=np.inf):
    """Yield (cell, t_entry, t_exit) for every cell a single ray passes
    through, in order, until the grid or t_max is left behind."""
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    t0, t1 = slab_interval(origin[None], direction[None], dims)
    t0, t1 = float(t0[0]), float(t1[0])
    if t0 > t1 or t1 < 0.0:
        return
    t = max(t0, 0.0)
    end = min(t1, t_max)
    cell = np.round(origin + (t + _EPS) * direction).astype(np.int64)
    cell = np.clip(cell, 0, np.asarray(dims) - 1)
    step = np.sign(direction).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_delta = 1.0 / np.abs(direction)
        t_next = np.where(
            step != 0,
            (cell + 0.5 * step - origin) / direction,
            np.inf,
        )
    guard = int(sum(dims)) + 4
    for _ in range(guard):
        axis = int(np.argmin(t_next))
        t_leave = float(t_next[axis])
        yield cell.copy(), t, min(t_leave, end)
        if t_leave > end:
            return
        cell[axis] += step[axis]
        if cell[axis] < 0 or cell[axis] >= dims[axis]:
            return
        t = t_leave
        t_next[axis] += t_delta[axis]


def _init_batch(origins, dirs, dims, t_start, t_stop):
    dims_arr = np.asarray(dims, dtype=np.int64)
    t0, t1 = slab_interval(origins, dirs, dims)
    t_cur = np.maximum(t0, t_start)
    t_end = np.minimum(t1, t_stop)
    active = (t0 <= t1) & (t_cur <= t_end)
    cell = np.round(origins + (t_cur[:, None] + _EPS) * dirs).astype(np.int64)
    cell = np.clip(cell, 0, dims_arr - 1)
    step = np.sign(dirs).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_delta = np.where(step != 0, 1.0 / np.abs(dirs), np.inf)
        t_next = np.where(
            step != 0,
            (cell + 0.5 * step - origins) / dirs,
            np.inf,
        )
    return dims_arr, t_cur, t_end, active, cell, step, t_delta, t_next


def first_hit(occ: np.ndarray, origins: np.ndarray, dirs: np.ndarray,
              t_start=0.0, t_stop=np.inf):
    """March a batch of rays and report the first occupied cell of each.

    Returns (hit, t_hit, cells): hit is a bool (n,) mask, t_hit the entry
    parameter of the hit cell (nan on miss), cells the (n, 3) hit indices
    (-1 on miss).
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = len(origins)
    t_start = np.broadcast_to(np.asarray(t_start, dtype=np.float64), (n,))
    t_stop = np.broadcast_to(np.asarray(t_stop, dtype=np.float64), (n,))
    dims_arr, t_cur, t_end, active, cell, step, t_delta, t_next = _init_batch(
        origins, dirs, occ.shape, t_start, t_stop)

    hit = np.zeros(n, dtype=bool)
    t_hit = np.full(n, np.nan)
    hit_cell = np.full((n, 3), -1, dtype=np.int64)
    guard = int(dims_arr.sum()) + 4
    for _ in range(guard):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        c = cell[idx]
        occupied = occ[c[:, 0], c[:, 1], c[:, 2]]
        hit_idx = idx[occupied]
        hit[hit_idx] = True
        t_hit[hit_idx] = t_cur[hit_idx]
        hit_cell[hit_idx] = cell[hit_idx]
        active[hit_idx] = False

        idx = np.nonzero(active)[0]
        if len(idx) == 0:
            break
        axis = np.argmin(t_next[idx], axis=1)
        t_leave = t_next[idx, axis]
        done = t_leave > t_end[idx]
        cell[idx, axis] += step[idx, axis]
        out = (cell[idx, axis] < 0) | (cell[idx, axis] >= dims_arr[axis])
        t_cur[idx] = t_leave
        t_next[idx, axis] += t_delta[idx, axis]
        active[idx[done | out]] = False
    return hit, t_hit, hit_cell


def traverse_until(dims, origins: np.ndarray, dirs: np.ndarray,
                   t_stop) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Record every cell each ray enters while t_entry <= t_stop[ray].

    Returns flat arrays (ray_index, cells, t_entry, t_exit) concatenated
    over all rays, ordered by traversal step. The last record of a ray is
    the cell containing its stop parameter (when inside the grid).
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = len(origins)
    t_stop = np.broadcast_to(np.asarray(t_stop, dtype=np.float64), (n,))
    zeros = np.zeros(n)
    dims_arr, t_cur, t_end, active, cell, step, t_delta, t_next = _init_batch(
        origins, dirs, dims, zeros, t_stop)

    ray_chunks, cell_chunks, tin_chunks, tout_chunks = [], [], [], []
    guard = int(dims_arr.sum()) + 4
    for _ in range(guard):
        idx = np.nonzero(active)[0]
        if len(idx) == 0:
            break
        axis = np.argmin(t_next[idx], axis=1)
        t_leave = t_next[idx, axis]
        ray_chunks.append(idx.copy())
        cell_chunks.append(cell[idx].copy())
        tin_chunks.append(t_cur[idx].copy())
        tout_chunks.append(t_leave.copy())

        done = t_leave > t_end[idx]
        cell[idx, axis] += step[idx, axis]
        out = (cell[idx, axis] < 0) | (cell[idx, axis] >= dims_arr[axis])
        t_cur[idx] = t_leave
        t_next[idx, axis] += t_delta[idx, axis]
        active[idx[done | out]] = False
    if not ray_chunks:
        empty = np.empty(0, dtype=np.int64)
        return empty, np.empty((0, 3), dtype=np.int64), np.empty(0), np.empty(0)
    return (np.concatenate(ray_chunks), np.concatenate(cell_chunks),
            np.concatenate(tin_chunks), np.concatenate(tout_chunks))
