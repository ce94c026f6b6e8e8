"""Pinhole depth camera and depth-view constraint extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import frames, rays


@dataclass
class Camera:
    """Simple pinhole camera; depth is distance along the pixel ray in mm."""

    position: np.ndarray
    forward: np.ndarray
    right: np.ndarray
    down: np.ndarray
    fov_deg: float
    res: tuple[int, int]       # (width, height) pixels

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.forward = np.asarray(self.forward, dtype=np.float64).reshape(3)
        self.right = np.asarray(self.right, dtype=np.float64).reshape(3)
        self.down = np.asarray(self.down, dtype=np.float64).reshape(3)

    @classmethod
    def look_at(cls, position, target, fov_deg: float,
                res: tuple[int, int]) -> "Camera":
        position = np.asarray(position, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        fwd = target - position
        dist = np.linalg.norm(fwd)
        if dist == 0:
            raise ValueError("camera position coincides with target")
        fwd = fwd / dist
        up = np.array([0.0, 0.0, 1.0])
        if abs(fwd @ up) > 0.999:
            up = np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        return cls(position, fwd, right, down, float(fov_deg), tuple(res))

    def pixel_dirs(self) -> np.ndarray:
        """Unit world ray directions, shape (height * width, 3), row-major."""
        w, h = self.res
        half = np.tan(np.deg2rad(self.fov_deg) / 2.0)
        us = (2.0 * (np.arange(w) + 0.5) / w - 1.0) * half
        vs = (2.0 * (np.arange(h) + 0.5) / h - 1.0) * half * (h / w)
        vv, uu = np.meshgrid(vs, us, indexing="ij")
        dirs = (self.forward[None, :]
                + uu.reshape(-1, 1) * self.right[None, :]
                + vv.reshape(-1, 1) * self.down[None, :])
        return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def scene_camera(height_mm: float, tilt_deg: float, target,
                 subject_radius_mm: float, res: tuple[int, int] = (160, 120),
                 fov_deg: float | None = None) -> Camera:
    """Camera mounted at the given table height, tilted down toward the
    target; the field of view defaults to framing the subject radius."""
    target = np.asarray(target, dtype=np.float64)
    tilt = np.deg2rad(max(tilt_deg, 5.0))
    rise = height_mm - target[2]
    if rise <= 0:
        raise ValueError("camera height must be above the target")
    standoff = rise / np.tan(tilt)
    position = target + np.array([-standoff, 0.0, rise])
    if fov_deg is None:
        dist = np.linalg.norm(position - target)
        fov_deg = float(np.rad2deg(2.0 * np.arctan(1.35 * subject_radius_mm / dist)))
    return Camera.look_at(position, target, fov_deg, res)


@dataclass
class DepthView:
    """Per-pixel ray depths in mm.

    +inf marks a geometric miss (the ray saw free space all the way
    through), NaN marks a pixel with no reading at all (masked or
    transparent), which carries no information.
    """

    camera: Camera
    depth: np.ndarray           # (height, width)

    def finite_count(self) -> int:
        return int(np.isfinite(self.depth).sum())


def voxel_rays(camera: Camera, frame: frames.VoxelFrame
               ) -> tuple[np.ndarray, np.ndarray]:
    """Pixel rays in voxel coordinates, parameterized so t stays in mm."""
    dirs_w = camera.pixel_dirs()
    origin_v = frames.world_to_voxel(frame, camera.position)
    dirs_v = frames.world_to_voxel(frame, camera.position + dirs_w) - origin_v
    origins = np.broadcast_to(origin_v, dirs_v.shape)
    return np.ascontiguousarray(origins), dirs_v


def depth_constraints(view: DepthView, dims,
                      frame: frames.VoxelFrame
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Visibility constraints from a depth view.

    Cells a ray fully crosses before its measured depth become target-0;
    the cell containing the depth point becomes target-1. Miss rays
    (depth +inf) carve free space along their whole path, NaN pixels are
    skipped. Surface evidence wins when rays disagree.
    """
    depth = view.depth.ravel()
    usable = ~np.isnan(depth)
    if not usable.any():
        empty = np.empty((0, 3), dtype=np.int64)
        return empty, empty
    origins, dirs = voxel_rays(view.camera, frame)
    ray_idx, cells, t_in, t_out = rays.traverse_until(
        dims, origins[usable], dirs[usable], depth[usable])
    if len(ray_idx) == 0:
        empty = np.empty((0, 3), dtype=np.int64)
        return empty, empty
    d = depth[usable][ray_idx]
    flat = (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]
    surface = (t_in <= d) & (d < t_out)
    free = t_out <= d
    ones = np.unique(flat[surface])
    zeros = np.setdiff1d(np.unique(flat[free]), ones)

    def unflatten(f):
        x, rem = np.divmod(f, dims[1] * dims[2])
        y, z = np.divmod(rem, dims[2])
        return np.stack([x, y, z], axis=1)

    return unflatten(zeros), unflatten(ones)
