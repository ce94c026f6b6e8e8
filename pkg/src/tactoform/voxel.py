"""Voxel occupancy grids: confidence fields, surface extraction, Chamfer
distance, and VXG1 serialization.

Grids are dense cubic-or-rectangular arrays of occupancy probabilities in
[0, 1], stored C-contiguous with shape (X, Y, Z) so the flat memory order
is z-fastest: index = (x * Y + y) * Z + z.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import frames
from .errors import BadMagic, DimMismatch, EmptyCloud, EmptySurface, TruncatedFile

VXG_MAGIC = b"VXG1"


@dataclass
class VoxelGrid:
    """Occupancy probability grid.

    values follows a single-writer/multi-reader contract; every other
    field is immutable after construction.
    """

    values: np.ndarray                      # (X, Y, Z) float64 in [0, 1]
    frame: frames.VoxelFrame | None = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError("values must be a 3D array")
        if not np.isfinite(self.values).all():
            raise ValueError("values must be finite")
        lo, hi = self.values.min(), self.values.max()
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"values must lie in [0, 1], got [{lo}, {hi}]")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    def world_frame(self) -> frames.VoxelFrame:
        """The grid's frame, or an identity frame (1 mm voxels at index origin)."""
        if self.frame is not None:
            return self.frame
        return frames.VoxelFrame.with_scale(np.zeros(3), np.zeros(3), 1.0)

    def copy(self) -> "VoxelGrid":
        return VoxelGrid(self.values.copy(), self.frame)


@dataclass
class ConfidenceGrid:
    """Per-cell certainty c = |v - 0.5|, in [0, 0.5]."""

    values: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape


@dataclass
class PointCloud:
    """Unordered 3D positions in world millimeters."""

    points: np.ndarray   # (n, 3) float64

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.points)


def confidence(grid: VoxelGrid) -> ConfidenceGrid:
    """Confidence score of every voxel: c = |v - 0.5|."""
    return ConfidenceGrid(np.abs(grid.values - 0.5))


def _shell_mask(occ: np.ndarray) -> np.ndarray:
    """Occupied cells with at least one empty 6-neighbor.

    Cells on the grid boundary count their missing neighbors as empty.
    """
    padded = np.pad(occ, 1, constant_values=False)
    interior = (
        padded[2:, 1:-1, 1:-1] & padded[:-2, 1:-1, 1:-1]
        & padded[1:-1, 2:, 1:-1] & padded[1:-1, :-2, 1:-1]
        & padded[1:-1, 1:-1, 2:] & padded[1:-1, 1:-1, :-2]
    )
    return occ & ~interior


def extract_surface(grid: VoxelGrid, threshold: float = 0.5) -> PointCloud:
    """World-frame centers of the 6-connected occupancy shell at `threshold`."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    occ = grid.values >= threshold
    if not occ.any():
        raise EmptySurface(f"no cell reaches threshold {threshold}")
    coords = np.argwhere(_shell_mask(occ)).astype(np.float64)
    return PointCloud(frames.voxel_to_world(grid.world_frame(), coords))


def _directed_sums(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """(sum of NN distances a->b, sum of NN distances b->a)."""
    tree_a = cKDTree(a)
    tree_b = cKDTree(b)
    d_ab, _ = tree_b.query(a, k=1)
    d_ba, _ = tree_a.query(b, k=1)
    return float(d_ab.sum()), float(d_ba.sum())


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Symmetric Chamfer distance: each point contributes its unsquared
    Euclidean distance to the nearest point of the other cloud."""
    if len(a) == 0 or len(b) == 0:
        raise EmptyCloud("chamfer distance needs two non-empty clouds")
    s_ab, s_ba = _directed_sums(a.points, b.points)
    return s_ab + s_ba


def chamfer_distance_normalized(a: PointCloud, b: PointCloud) -> float:
    """Count-normalized Chamfer distance: each directed sum divided by its
    cloud's size, for comparability across shapes of different surface area."""
    if len(a) == 0 or len(b) == 0:
        raise EmptyCloud("chamfer distance needs two non-empty clouds")
    s_ab, s_ba = _directed_sums(a.points, b.points)
    return s_ab / len(a) + s_ba / len(b)


def chamfer_pair(a: PointCloud, b: PointCloud) -> tuple[float, float]:
    """(sum form, count-normalized form) computed in one pass."""
    if len(a) == 0 or len(b) == 0:
        raise EmptyCloud("chamfer distance needs two non-empty clouds")
    s_ab, s_ba = _directed_sums(a.points, b.points)
    return s_ab + s_ba, s_ab / len(a) + s_ba / len(b)


def grid_to_bytes(grid: VoxelGrid) -> bytes:
    """VXG1 encoding: magic, three LE u32 dims (X, Y, Z), then X*Y*Z LE f32
    values in z-fastest order."""
    x, y, z = grid.dims
    return (VXG_MAGIC + struct.pack("<3I", x, y, z)
            + grid.values.astype("<f4").tobytes(order="C"))


def grid_from_bytes(data: bytes,
                    frame: frames.VoxelFrame | None = None) -> VoxelGrid:
    magic = data[:4]
    if magic != VXG_MAGIC:
        raise BadMagic(f"expected {VXG_MAGIC!r}, got {magic!r}")
    if len(data) < 16:
        raise TruncatedFile("header ended before dims")
    x, y, z = struct.unpack("<3I", data[4:16])
    if x == 0 or y == 0 or z == 0:
        raise DimMismatch(f"invalid dims ({x}, {y}, {z})")
    payload = data[16:]
    expected = 4 * x * y * z
    if len(payload) < expected:
        raise TruncatedFile(f"expected {expected} payload bytes, got {len(payload)}")
    if len(payload) > expected:
        raise DimMismatch(f"{len(payload) - expected} trailing bytes after payload")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(x, y, z)
    return VoxelGrid(values, frame)


def write_grid(grid: VoxelGrid, path) -> None:
    """Write a VXG1 file; the round trip through read_grid is bit exact."""
    with open(path, "wb") as fh:
        fh.write(grid_to_bytes(grid))


def read_grid(path, frame: frames.VoxelFrame | None = None) -> VoxelGrid:
    """Read a VXG1 file written by :func:`write_grid`."""
    with open(path, "rb") as fh:
        return grid_from_bytes(fh.read(), frame)


def max_pool(grid: VoxelGrid, factor: int) -> VoxelGrid:
    """Downsample by taking the max over factor^3 blocks (dims must divide)."""
    x, y, z = grid.dims
    if factor < 1 or x % factor or y % factor or z % factor:
        raise ValueError("dims must be divisible by the pooling factor")
    v = grid.values.reshape(x // factor, factor, y // factor, factor,
                            z // factor, factor)
    return VoxelGrid(v.max(axis=(1, 3, 5)), grid.frame)
