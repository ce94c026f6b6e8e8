"""Rigid registration between world, robot, and voxel coordinate frames.

World units are millimeters throughout. Voxel coordinates use the
cell-center convention: integer coordinate (i, j, k) is the center of
cell (i, j, k).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCalibration

_ORTHO_TOL = 1e-9


@dataclass
class RigidTransform:
    """Proper rigid motion x_out = rotation @ x_in + translation."""

    rotation: np.ndarray   # (3, 3), orthonormal, det +1
    translation: np.ndarray  # (3,), mm

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation length 3")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-8 or np.linalg.det(self.rotation) < 0:
            raise ValueError("rotation is not a proper rotation matrix")

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rot = self.rotation.T
        return RigidTransform(rot, -rot @ self.translation)


def _nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Polar decomposition, forcing det +1."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _triad(points: np.ndarray) -> np.ndarray:
    """Orthonormal triad (columns) from three affinely independent points."""
    d1 = points[1] - points[0]
    d2 = points[2] - points[0]
    n1 = np.linalg.norm(d1)
    n2 = np.linalg.norm(d2)
    cross = np.cross(d1, d2)
    if n1 == 0.0 or n2 == 0.0 or np.linalg.norm(cross) <= 1e-9 * n1 * n2:
        raise DegenerateCalibration("calibration points are collinear")
    e1 = d1 / n1
    e3 = cross / np.linalg.norm(cross)
    e2 = np.cross(e3, e1)
    return np.stack([e1, e2, e3], axis=1)


def solve_world_to_robot(world_points: np.ndarray,
                         robot_points: np.ndarray) -> RigidTransform:
    """Recover (R_r, T_r) with x_r = R_r x_w + T_r from three correspondences.

    Local orthonormal triads are built from each point triple, so noisy
    inputs still produce a proper rotation; exact rigid inputs are
    recovered to machine precision.
    """
    w = np.asarray(world_points, dtype=np.float64).reshape(3, 3)
    r = np.asarray(robot_points, dtype=np.float64).reshape(3, 3)
    rot = _nearest_rotation(_triad(r) @ _triad(w).T)
    t = r.mean(axis=0) - rot @ w.mean(axis=0)
    return RigidTransform(rot, t)


@dataclass
class VoxelFrame:
    """Affine map between voxel indices and world millimeters.

    x_w = R_v (x_v - origin_voxel) + origin_world with
    R_v = scale * [a_x, a_y, a_z]^T and scale = pixels_per_voxel * pixel_length.
    """

    origin_voxel: np.ndarray                 # voxel units, bottom center of grid
    origin_world: np.ndarray                 # mm
    axes: np.ndarray = field(default_factory=lambda: np.eye(3))  # rows a_x, a_y, a_z
    pixels_per_voxel: int = 1
    pixel_length: float = 1.0                # mm

    def __post_init__(self):
        self.origin_voxel = np.asarray(self.origin_voxel, dtype=np.float64).reshape(3)
        self.origin_world = np.asarray(self.origin_world, dtype=np.float64).reshape(3)
        self.axes = np.asarray(self.axes, dtype=np.float64).reshape(3, 3)
        if self.pixels_per_voxel < 1:
            raise ValueError("pixels_per_voxel must be a positive integer")
        if self.pixel_length <= 0:
            raise ValueError("pixel_length must be positive")
        err = np.abs(self.axes @ self.axes.T - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError("axes must be mutually orthogonal unit vectors")

    @property
    def scale(self) -> float:
        """Millimeters per voxel."""
        return self.pixels_per_voxel * self.pixel_length

    @property
    def rotation(self) -> np.ndarray:
        return self.scale * self.axes

    @classmethod
    def with_scale(cls, origin_voxel, origin_world, scale_mm: float,
                   axes=None) -> "VoxelFrame":
        if axes is None:
            axes = np.eye(3)
        return cls(origin_voxel, origin_world, axes, 1, float(scale_mm))


def voxel_to_world(frame: VoxelFrame, x_v: np.ndarray) -> np.ndarray:
    """Map voxel coordinates (single point or (n, 3) array) to world mm."""
    x = np.asarray(x_v, dtype=np.float64)
    return (x - frame.origin_voxel) @ frame.rotation.T + frame.origin_world


def world_to_voxel(frame: VoxelFrame, x_w: np.ndarray) -> np.ndarray:
    """Inverse of :func:`voxel_to_world`."""
    x = np.asarray(x_w, dtype=np.float64)
    inv = frame.axes.T / frame.scale   # columns a_i / s
    return (x - frame.origin_world) @ inv.T + frame.origin_voxel


def default_frame(dims, voxel_mm: float = 1.0) -> VoxelFrame:
    """Frame anchoring the bottom-center cell of a grid at the world origin."""
    dx, dy, _ = dims
    origin_voxel = np.array([(dx - 1) / 2.0, (dy - 1) / 2.0, 0.0])
    return VoxelFrame.with_scale(origin_voxel, np.zeros(3), voxel_mm)
