"""Active exploration: pick the next sensor placement.

A sweep of candidate planes (4 yaws x 10 pitches x offsets through the
occupied bounding box) samples the prediction's confidence field onto 2D
search grids; summed-area tables score every k x k window in O(1) and the
globally least-confident window with a clear approach becomes the next
touch. The random baseline draws uniformly from the same candidate set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import frames, rays, voxel
from .errors import NoTouchableRegion, RegionTooLarge

try:
    from numba import njit
except ImportError:          # pragma: no cover - numba is a declared dep
    njit = None

YAWS_DEG = (0.0, 90.0, 180.0, 270.0)
PITCHES_DEG = tuple(float(p) for p in range(0, 91, 10))
OFFSET_STRIDE_VOXELS = 4
MASKED_CONFIDENCE = 0.5       # maximal certainty, never attracts a touch


def orientation_sweep() -> list[tuple[float, float]]:
    """(yaw, pitch) pairs in their deterministic sweep order."""
    return [(y, p) for y in YAWS_DEG for p in PITCHES_DEG]


def approach_normal(yaw_deg: float, pitch_deg: float) -> np.ndarray:
    """Unit approach direction: yaw picks the horizontal heading, pitch
    tilts it downward (90 degrees = straight down)."""
    y = np.deg2rad(yaw_deg)
    p = np.deg2rad(pitch_deg)
    return np.array([np.cos(y) * np.cos(p), np.sin(y) * np.cos(p), -np.sin(p)])


def plane_axes(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([0.0, 0.0, 1.0])
    if abs(normal @ helper) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    e_u = np.cross(normal, helper)
    e_u /= np.linalg.norm(e_u)
    e_v = np.cross(normal, e_u)
    return e_u, e_v


@dataclass
class SearchGrid:
    """Confidence samples on one candidate plane."""

    yaw: float
    pitch: float
    offset: float               # mm along the plane normal from the bbox center
    spacing: float              # mm between samples
    values: np.ndarray          # (N, N) confidence, masked samples at 0.5
    unmasked: np.ndarray        # (N, N) bool
    center: np.ndarray          # world mm, sample ((N-1)/2, (N-1)/2)
    normal: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray

    @property
    def side(self) -> int:
        return self.values.shape[0]

    def sample_world(self, p, q) -> np.ndarray:
        half = (self.side - 1) / 2.0
        return (self.center
                + (float(p) - half) * self.spacing * self.axis_u
                + (float(q) - half) * self.spacing * self.axis_v)


@dataclass
class IntegralMap:
    """Summed-area table with a zero-padded row/column 0."""

    table: np.ndarray           # (N + 1, N + 1)

    @property
    def side(self) -> int:
        return self.table.shape[0] - 1


@dataclass
class TouchPlan:
    """Chosen sensor placement: a k x k window on one search plane."""

    corner: tuple[int, int]
    k: int
    score: float
    center_world: np.ndarray
    normal: np.ndarray
    approach_start: np.ndarray
    yaw: float
    pitch: float
    offset: float

    def to_dict(self) -> dict:
        return {"corner": list(self.corner), "k": self.k, "score": self.score,
                "center_world": self.center_world.tolist(),
                "normal": self.normal.tolist(),
                "approach_start": self.approach_start.tolist(),
                "yaw": self.yaw, "pitch": self.pitch, "offset": self.offset}


# --- surface band and bounding box ---------------------------------------------


def surface_band(grid: voxel.VoxelGrid) -> np.ndarray:
    """Cells with a 6-neighbor on the opposite side of 0.5.

    A cell exactly at 0.5 counts as lying on both sides, so a fully
    uncertain grid is band everywhere. Missing neighbors outside the grid
    count as empty.
    """
    side = grid.values - 0.5
    padded = np.pad(side, 1, constant_values=-0.5)
    band = np.zeros(grid.dims, dtype=bool)
    for axis_slices in (
        (padded[2:, 1:-1, 1:-1], padded[:-2, 1:-1, 1:-1]),
        (padded[1:-1, 2:, 1:-1], padded[1:-1, :-2, 1:-1]),
        (padded[1:-1, 1:-1, 2:], padded[1:-1, 1:-1, :-2]),
    ):
        for neighbor in axis_slices:
            band |= side * neighbor <= 0.0
    return band


def occupied_bbox(grid: voxel.VoxelGrid) -> tuple[np.ndarray, np.ndarray] | None:
    """Min and max cell indices of v >= 0.5, or None when empty."""
    occ = grid.values >= 0.5
    if not occ.any():
        return None
    idx = np.argwhere(occ)
    return idx.min(axis=0), idx.max(axis=0)


# --- search grid ----------------------------------------------------------------


def _plane_geometry(grid: voxel.VoxelGrid, yaw: float, pitch: float,
                    box=None):
    frame = grid.world_frame()
    if box is None:
        box = occupied_bbox(grid)
    if box is None:
        raise NoTouchableRegion("grid has no occupied bounding box")
    lo, hi = box
    corners_v = np.array([[x, y, z]
                          for x in (lo[0], hi[0])
                          for y in (lo[1], hi[1])
                          for z in (lo[2], hi[2])], dtype=np.float64)
    corners_w = frames.voxel_to_world(frame, corners_v)
    center_w = corners_w.mean(axis=0)
    normal = approach_normal(yaw, pitch)
    e_u, e_v = plane_axes(normal)
    radius = np.linalg.norm(corners_w - center_w, axis=1).max()
    return frame, center_w, normal, e_u, e_v, radius, corners_w


def plane_offsets(grid: voxel.VoxelGrid, yaw: float, pitch: float,
                  box=None) -> np.ndarray:
    """Offsets along the normal spanning the occupied box at 4-voxel stride."""
    frame, center_w, normal, _, _, _, corners_w = _plane_geometry(
        grid, yaw, pitch, box)
    proj = (corners_w - center_w) @ normal
    stride = OFFSET_STRIDE_VOXELS * frame.scale
    lo, hi = proj.min(), proj.max()
    if hi - lo < stride:
        return np.array([0.5 * (lo + hi)])
    return np.arange(lo, hi + 1e-9, stride)


def build_search_grids(grid: voxel.VoxelGrid, yaw: float, pitch: float,
                       offsets: np.ndarray,
                       band: np.ndarray | None = None,
                       conf: np.ndarray | None = None,
                       box=None) -> list[SearchGrid]:
    """Sample the confidence field on a stack of parallel planes at voxel
    pitch, one shared vectorized pass over all offsets.

    A sample takes its nearest voxel's confidence when that voxel lies
    within sqrt(3)/2 voxel of the plane and inside the surface band;
    otherwise it is masked to 0.5.
    """
    frame, center_w, normal, e_u, e_v, radius, _ = _plane_geometry(
        grid, yaw, pitch, box)
    if band is None:
        band = surface_band(grid)
    if conf is None:
        conf = voxel.confidence(grid).values
    offsets = np.atleast_1d(np.asarray(offsets, dtype=np.float64))
    spacing = frame.scale
    n = int(np.ceil(2.0 * radius / spacing)) + 3
    half = (n - 1) / 2.0

    p, q = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    in_plane = (((p.ravel() - half) * spacing)[:, None] * e_u
                + ((q.ravel() - half) * spacing)[:, None] * e_v)
    centers = center_w[None, :] + offsets[:, None] * normal
    pts = (centers[:, None, :] + in_plane[None, :, :]).reshape(-1, 3)
    nearest = np.round(frames.world_to_voxel(frame, pts)).astype(np.int64)
    dims = np.asarray(grid.dims)
    inside = (nearest >= 0).all(axis=1) & (nearest < dims).all(axis=1)

    values = np.full(len(offsets) * n * n, MASKED_CONFIDENCE)
    unmasked = np.zeros(len(offsets) * n * n, dtype=bool)
    if inside.any():
        cells = nearest[inside]
        centers_w = frames.voxel_to_world(frame, cells.astype(np.float64))
        near_plane = np.abs((centers_w - pts[inside]) @ normal) \
            <= (np.sqrt(3.0) / 2.0) * frame.scale
        in_band = band[cells[:, 0], cells[:, 1], cells[:, 2]]
        ok = near_plane & in_band
        sel = np.nonzero(inside)[0][ok]
        picked = cells[ok]
        values[sel] = conf[picked[:, 0], picked[:, 1], picked[:, 2]]
        unmasked[sel] = True
    values = values.reshape(len(offsets), n, n)
    unmasked = unmasked.reshape(len(offsets), n, n)
    return [SearchGrid(yaw, pitch, float(off), spacing, values[i],
                       unmasked[i], centers[i], normal, e_u, e_v)
            for i, off in enumerate(offsets)]


def build_search_grid(grid: voxel.VoxelGrid, yaw: float, pitch: float,
                      offset: float,
                      band: np.ndarray | None = None,
                      conf: np.ndarray | None = None) -> SearchGrid:
    """Sample the confidence field on one candidate plane."""
    return build_search_grids(grid, yaw, pitch, np.array([offset]),
                              band=band, conf=conf)[0]


# --- integral map ---------------------------------------------------------------

if njit is not None:
    @njit(cache=True)
    def _prefix_sums(f):    # pragma: no cover - exercised through integral_map
        n, m = f.shape
        g = np.zeros((n + 1, m + 1))
        for p in range(1, n + 1):
            for q in range(1, m + 1):
                g[p, q] = f[p - 1, q - 1] + g[p - 1, q] + g[p, q - 1] - g[p - 1, q - 1]
        return g
else:
    def _prefix_sums(f):
        n, m = f.shape
        g = np.zeros((n + 1, m + 1))
        for p in range(1, n + 1):
            for q in range(1, m + 1):
                g[p, q] = f[p - 1, q - 1] + g[p - 1, q] + g[p, q - 1] - g[p - 1, q - 1]
        return g


def integral_map(sg: SearchGrid | np.ndarray) -> IntegralMap:
    """Exact prefix sums g[p,q] = f[p,q] + g[p-1,q] + g[p,q-1] - g[p-1,q-1],
    evaluated cell by cell in row-major order."""
    f = sg.values if isinstance(sg, SearchGrid) else np.asarray(sg, dtype=np.float64)
    return IntegralMap(_prefix_sums(np.ascontiguousarray(f, dtype=np.float64)))


def window_sums(im: IntegralMap, k: int) -> np.ndarray:
    """All k x k window sums, from four table lookups each."""
    g = im.table
    n = im.side
    if k < 1 or k > n:
        raise RegionTooLarge(f"window {k} exceeds grid side {n}")
    return g[k:, k:] - g[:-k, k:] - g[k:, :-k] + g[:-k, :-k]


def min_region(im: IntegralMap, k: int) -> tuple[tuple[int, int], float]:
    """Corner and score of the minimum-sum k x k window; ties break
    lexicographically by (p, q)."""
    sums = window_sums(im, k)
    flat = int(np.argmin(sums))     # first occurrence = row-major lexicographic
    p, q = divmod(flat, sums.shape[1])
    return (p, q), float(sums[p, q])


# --- plan construction ----------------------------------------------------------


def _window_center_world(sg: SearchGrid, corner: tuple[int, int],
                         k: int) -> np.ndarray:
    half = (sg.side - 1) / 2.0
    pc = corner[0] + (k - 1) / 2.0
    qc = corner[1] + (k - 1) / 2.0
    return (sg.center
            + (pc - half) * sg.spacing * sg.axis_u
            + (qc - half) * sg.spacing * sg.axis_v)


def approach_clear(grid: voxel.VoxelGrid, start_w: np.ndarray,
                   target_w: np.ndarray, band: np.ndarray,
                   reach_mm: float | None = None) -> bool:
    """True when the straight segment reaches the target window's vicinity
    without first crossing a predicted-occupied cell (v > 0.5).

    Reaching the surface band counts only within reach_mm of the target,
    so plans aimed through the object at a far-side window are rejected;
    uncertain cells (v <= 0.5) never block, they are what touches are for.
    """
    frame = grid.world_frame()
    seg = target_w - start_w
    length = np.linalg.norm(seg)
    if length == 0:
        return False
    if reach_mm is None:
        reach_mm = 3.0 * frame.scale
    direction = seg / length
    origin_v = frames.world_to_voxel(frame, start_w)
    dir_v = frames.world_to_voxel(frame, start_w + direction) - origin_v
    v = grid.values
    for cell, t_in, _t_out in rays.traverse_ray(grid.dims, origin_v, dir_v,
                                                t_max=length):
        near_target = length - t_in <= reach_mm
        if near_target and band[cell[0], cell[1], cell[2]]:
            return True
        if v[cell[0], cell[1], cell[2]] > 0.5:
            return near_target
    return True


def _make_plan(sg: SearchGrid, corner, k, score, bound_radius) -> TouchPlan:
    center = _window_center_world(sg, corner, k)
    start = center - sg.normal * (1.5 * bound_radius)
    return TouchPlan(corner=(int(corner[0]), int(corner[1])), k=k,
                     score=float(score), center_world=center,
                     normal=sg.normal.copy(), approach_start=start,
                     yaw=sg.yaw, pitch=sg.pitch, offset=sg.offset)


def _bound_radius(grid: voxel.VoxelGrid) -> float:
    lo, hi = occupied_bbox(grid)
    frame = grid.world_frame()
    center_w = frames.voxel_to_world(frame, (lo + hi) / 2.0)
    radius = np.linalg.norm(
        frames.voxel_to_world(frame, hi.astype(np.float64)) - center_w)
    return max(float(radius), frame.scale)


def _sweep(grid: voxel.VoxelGrid, k: int, band: np.ndarray):
    """Yield (orientation_index, offset_index, search_grid) over the sweep."""
    conf = voxel.confidence(grid).values
    box = occupied_bbox(grid)
    for oi, (yaw, pitch) in enumerate(orientation_sweep()):
        offsets = plane_offsets(grid, yaw, pitch, box)
        for fi, sg in enumerate(build_search_grids(grid, yaw, pitch, offsets,
                                                   band=band, conf=conf,
                                                   box=box)):
            if sg.side >= k:
                yield oi, fi, sg


def next_touch(grid: voxel.VoxelGrid, spec) -> TouchPlan:
    """Deterministic sweep over yaws, pitches, and offsets; returns the
    globally least-confident window with a clear approach."""
    k = spec.footprint
    if occupied_bbox(grid) is None:
        raise NoTouchableRegion("no occupied cells to explore")
    band = surface_band(grid)
    radius = _bound_radius(grid)

    candidates = []
    for oi, fi, sg in _sweep(grid, k, band):
        counts = window_sums(integral_map(sg.unmasked.astype(np.float64)), k)
        sums = window_sums(integral_map(sg), k)
        valid = counts > 0.5
        if not valid.any():
            continue
        masked_sums = np.where(valid, sums, np.inf)
        flat = int(np.argmin(masked_sums))
        p, q = divmod(flat, masked_sums.shape[1])
        candidates.append((float(masked_sums[p, q]), oi, fi, p, q, sg))
    if not candidates:
        raise NoTouchableRegion("every candidate window is masked")
    candidates.sort(key=lambda c: c[:5])
    reach = (k / 2.0 + 1.5) * grid.world_frame().scale
    for score, _oi, _fi, p, q, sg in candidates:
        plan = _make_plan(sg, (p, q), k, score, radius)
        if approach_clear(grid, plan.approach_start, plan.center_world, band,
                          reach_mm=reach):
            return plan
    raise NoTouchableRegion("every candidate window is blocked")


def random_touch(grid: voxel.VoxelGrid, spec, rng) -> TouchPlan:
    """Uniform draw over the same candidate windows next_touch scores,
    ignoring confidence; clearance is enforced by rejection."""
    k = spec.footprint
    if occupied_bbox(grid) is None:
        raise NoTouchableRegion("no occupied cells to explore")
    band = surface_band(grid)
    radius = _bound_radius(grid)

    planes = []
    for _oi, _fi, sg in _sweep(grid, k, band):
        counts = window_sums(integral_map(sg.unmasked.astype(np.float64)), k)
        sums = window_sums(integral_map(sg), k)
        valid = counts > 0.5
        n_valid = int(valid.sum())
        if n_valid:
            planes.append((sg, valid, sums, n_valid))
    total = sum(p[3] for p in planes)
    if total == 0:
        raise NoTouchableRegion("every candidate window is masked")
    weights = np.array([p[3] for p in planes], dtype=np.float64) / total
    reach = (k / 2.0 + 1.5) * grid.world_frame().scale
    for _ in range(256):
        plane_i = int(rng.choice(len(planes), p=weights))
        sg, valid, sums, n_valid = planes[plane_i]
        pick = int(rng.integers(n_valid))
        flat = np.nonzero(valid.ravel())[0][pick]
        p, q = divmod(int(flat), valid.shape[1])
        plan = _make_plan(sg, (p, q), k, sums[p, q], radius)
        if approach_clear(grid, plan.approach_start, plan.center_world, band,
                          reach_mm=reach):
            return plan
    raise NoTouchableRegion("no clear window found after 256 draws")
