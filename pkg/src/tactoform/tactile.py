"""Simulated GelSight sensing.

Forward model: per-pixel intensity is a fixed nonlinear function of the
local surface slope (three virtual lights at 120 degree azimuth spacing,
45 degree elevation). Sensing inverts that map through a calibration
lookup table built from simulated sphere presses, then integrates the
recovered gradient field back to a height map with a zero-Dirichlet
Poisson solve diagonalized by the type-I discrete sine transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy.ndimage import distance_transform_edt

from .errors import InsufficientCalibration

FORWARD_MODEL_ID = "trilight-45deg-v1"
GRADIENT_LIMIT = 2.5          # steepest slope the virtual gel resolves
AMBIENT = 0.2
DIFFUSE = 0.8

_AZIMUTHS = np.deg2rad([0.0, 120.0, 240.0])
_ELEVATION = np.deg2rad(45.0)
LIGHTS = np.stack([
    np.cos(_AZIMUTHS) * np.cos(_ELEVATION),
    np.sin(_AZIMUTHS) * np.cos(_ELEVATION),
    np.full(3, np.sin(_ELEVATION)),
], axis=1)                     # (3 lights, 3 xyz)


@dataclass
class SensorSpec:
    """Geometry of the simulated sensor pad."""

    contact_width: float = 19.0    # mm, maps to res_u pixels
    contact_height: float = 14.0   # mm, maps to res_v pixels
    res_u: int = 160
    res_v: int = 120
    footprint: int = 7             # k, voxels per side of the touch region

    def __post_init__(self):
        if min(self.contact_width, self.contact_height) <= 0:
            raise ValueError("contact area must be positive")
        if min(self.res_u, self.res_v) < 4:
            raise ValueError("sensor resolution too small")
        if self.footprint < 1:
            raise ValueError("footprint must be >= 1 voxel")
        # near-square pixels; 2% slack admits the physical 19x14 pad at 4:3
        if abs(self.pitch_u - self.pitch_v) > 0.02 * self.pitch_u:
            raise ValueError("sensor pixels must be square to within 2%")

    @property
    def pitch_u(self) -> float:
        return self.contact_width / self.res_u

    @property
    def pitch_v(self) -> float:
        return self.contact_height / self.res_v


@dataclass
class SensorPose:
    """Placement of the sensor plane in world coordinates (mm)."""

    origin: np.ndarray      # center of the contact plane
    axis_u: np.ndarray      # unit vector along image columns
    axis_v: np.ndarray      # unit vector along image rows
    normal: np.ndarray      # unit approach direction, free space -> surface

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.axis_u = np.asarray(self.axis_u, dtype=np.float64).reshape(3)
        self.axis_v = np.asarray(self.axis_v, dtype=np.float64).reshape(3)
        self.normal = np.asarray(self.normal, dtype=np.float64).reshape(3)


@dataclass
class TactileFrame:
    """One processed touch image: intensity, recovered slopes, height map."""

    intensity: np.ndarray           # (res_v, res_u, 3) in [0, 1]
    grad_x: np.ndarray              # dimensionless slope along u
    grad_y: np.ndarray              # dimensionless slope along v
    height: np.ndarray              # mm, zero on the boundary
    pose: SensorPose | None = None


def clamp_gradients(gx: np.ndarray, gy: np.ndarray,
                    limit: float = GRADIENT_LIMIT):
    """Scale gradient vectors down to magnitude <= limit."""
    mag = np.hypot(gx, gy)
    factor = np.where(mag > limit, limit / np.maximum(mag, 1e-300), 1.0)
    return gx * factor, gy * factor


def reflectance(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Forward model: map slopes to an RGB intensity in [0, 1]^3."""
    gx, gy = clamp_gradients(np.asarray(gx, float), np.asarray(gy, float))
    inv_norm = 1.0 / np.sqrt(1.0 + gx * gx + gy * gy)
    # unit surface normal (-gx, -gy, 1) / |.|, one dot product per light
    shade = (
        -gx[..., None] * LIGHTS[:, 0]
        - gy[..., None] * LIGHTS[:, 1]
        + LIGHTS[:, 2]
    ) * inv_norm[..., None]
    return np.clip(AMBIENT + DIFFUSE * np.maximum(shade, 0.0), 0.0, 1.0)


def render_tactile(heights: np.ndarray, spec: SensorSpec,
                   gradients: tuple[np.ndarray, np.ndarray] | None = None
                   ) -> np.ndarray:
    """Render the sensor image for a height patch sampled at sensor
    resolution. Slopes default to central differences of the heights;
    pass analytic gradients when the surface is known in closed form."""
    heights = np.asarray(heights, dtype=np.float64)
    if heights.shape != (spec.res_v, spec.res_u):
        raise ValueError("height patch must be sampled at sensor resolution")
    if gradients is None:
        gy, gx = np.gradient(heights, spec.pitch_v, spec.pitch_u)
    else:
        gx, gy = gradients
    return reflectance(gx, gy)


# --- calibration lookup table -------------------------------------------------

@dataclass
class ReflectanceLUT:
    """Inverse reflectance as a binned intensity -> mean gradient table."""

    bins: int
    grad_sum: np.ndarray            # (B, B, B, 2)
    counts: np.ndarray              # (B, B, B) int64
    forward_model_id: str = FORWARD_MODEL_ID
    _fallback: np.ndarray | None = field(default=None, repr=False)

    @property
    def occupied_fraction(self) -> float:
        return float((self.counts > 0).mean())

    def _quantize(self, image: np.ndarray) -> np.ndarray:
        q = (np.asarray(image) * self.bins).astype(np.int64)
        return np.clip(q, 0, self.bins - 1)

    def _nearest_occupied(self) -> np.ndarray:
        # EDT over empty bins gives, per bin, the closest occupied bin in
        # quantized-intensity L2
        if self._fallback is None:
            _, indices = distance_transform_edt(self.counts == 0,
                                                return_indices=True)
            self._fallback = indices
        return self._fallback


def _press_geometry(spec: SensorSpec, radius: float, depth: float,
                    center_uv: tuple[float, float]):
    """Analytic heights and slopes of a sphere pressed `depth` into the pad."""
    u = (np.arange(spec.res_u) + 0.5) * spec.pitch_u
    v = (np.arange(spec.res_v) + 0.5) * spec.pitch_v
    uu, vv = np.meshgrid(u, v)
    du = uu - center_uv[0]
    dv = vv - center_uv[1]
    rho2 = du * du + dv * dv
    dome = np.sqrt(np.maximum(radius * radius - rho2, 0.0))
    heights = np.maximum(dome - (radius - depth), 0.0)
    contact = heights > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        gx = np.where(contact, -du / dome, 0.0)
        gy = np.where(contact, -dv / dome, 0.0)
    gx, gy = clamp_gradients(np.nan_to_num(gx), np.nan_to_num(gy))
    return heights, gx, gy, contact


def sphere_press(spec: SensorSpec, radius: float, depth: float,
                 center_uv: tuple[float, float] | None = None):
    """Public helper: (heights, grad_x, grad_y, contact_mask) of a ball press."""
    if center_uv is None:
        center_uv = (spec.contact_width / 2.0, spec.contact_height / 2.0)
    return _press_geometry(spec, radius, depth, center_uv)


def calibrate_lut(spec: SensorSpec, sphere_radius: float, n_presses: int,
                  rng_seed: int, bins: int = 32) -> ReflectanceLUT:
    """Build the inverse-reflectance table from simulated ball presses.

    Each press renders the analytic sphere indentation and pairs every
    pixel's intensity with its known slope; pairs accumulate into
    per-bin gradient means.
    """
    if n_presses < 1:
        raise InsufficientCalibration("need at least one calibration press")
    if sphere_radius <= max(spec.pitch_u, spec.pitch_v):
        raise ValueError("sphere radius must exceed the pixel pitch")
    rng = np.random.default_rng(rng_seed)
    grad_sum = np.zeros((bins, bins, bins, 2))
    counts = np.zeros((bins, bins, bins), dtype=np.int64)
    lut = ReflectanceLUT(bins, grad_sum, counts)

    # keep the contact disc inside the pad: radius a = sqrt(2 r d - d^2)
    a_max = 0.4 * min(spec.contact_width, spec.contact_height)
    if a_max < sphere_radius:
        d_cap = sphere_radius - np.sqrt(sphere_radius ** 2 - a_max ** 2)
    else:
        d_cap = sphere_radius
    d_hi = min(0.6 * sphere_radius, d_cap)
    d_lo = min(0.15 * sphere_radius, 0.5 * d_hi)
    for _ in range(n_presses):
        cu = rng.uniform(0.3, 0.7) * spec.contact_width
        cv = rng.uniform(0.3, 0.7) * spec.contact_height
        depth = rng.uniform(d_lo, d_hi)
        _, gx, gy, _ = _press_geometry(spec, sphere_radius, depth, (cu, cv))
        image = reflectance(gx, gy)
        q = lut._quantize(image).reshape(-1, 3)
        flat = (q[:, 0] * bins + q[:, 1]) * bins + q[:, 2]
        np.add.at(grad_sum.reshape(-1, 2)[:, 0], flat, gx.ravel())
        np.add.at(grad_sum.reshape(-1, 2)[:, 1], flat, gy.ravel())
        np.add.at(counts.reshape(-1), flat, 1)
    return lut


def invert_intensity(lut: ReflectanceLUT, image: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel inverse reflectance lookup.

    Empty bins fall back to the nearest occupied bin in quantized
    intensity space (L2 over the bin triple).
    """
    if not (lut.counts > 0).any():
        raise InsufficientCalibration("lookup table has no samples")
    q = lut._quantize(image)
    nearest = lut._nearest_occupied()
    b0 = nearest[0][q[..., 0], q[..., 1], q[..., 2]]
    b1 = nearest[1][q[..., 0], q[..., 1], q[..., 2]]
    b2 = nearest[2][q[..., 0], q[..., 1], q[..., 2]]
    n = np.maximum(lut.counts[b0, b1, b2], 1)
    gx = lut.grad_sum[b0, b1, b2, 0] / n
    gy = lut.grad_sum[b0, b1, b2, 1] / n
    return gx, gy


# --- Poisson integration ------------------------------------------------------

def integrate_heights(grad_x: np.ndarray, grad_y: np.ndarray,
                      pitch_u: float = 1.0, pitch_v: float = 1.0) -> np.ndarray:
    """Recover the height map from its gradient field.

    Solves lap(f) = div(g) with f = 0 on the boundary, diagonalizing the
    5-point Laplacian with the type-I DST. Output is in the same length
    unit as the pitches (mm for sensor patches).
    """
    gx = np.asarray(grad_x, dtype=np.float64)
    gy = np.asarray(grad_y, dtype=np.float64)
    if gx.shape != gy.shape or gx.ndim != 2:
        raise ValueError("gradient fields must be two equal-shape 2D arrays")
    rows, cols = gx.shape
    if rows < 3 or cols < 3:
        return np.zeros_like(gx)
    div = divergence(gx, gy, pitch_u, pitch_v)[1:-1, 1:-1]
    rhs = scipy.fft.dstn(div, type=1)
    p = np.arange(1, cols - 1)
    q = np.arange(1, rows - 1)
    lam = (
        (2.0 * np.cos(np.pi * p[None, :] / (cols - 1)) - 2.0) / pitch_u ** 2
        + (2.0 * np.cos(np.pi * q[:, None] / (rows - 1)) - 2.0) / pitch_v ** 2
    )
    interior = scipy.fft.idstn(rhs / lam, type=1)
    out = np.zeros_like(gx)
    out[1:-1, 1:-1] = interior
    return out


def divergence(grad_x: np.ndarray, grad_y: np.ndarray,
               pitch_u: float = 1.0, pitch_v: float = 1.0) -> np.ndarray:
    """Central-difference divergence of a gradient field (zero on boundary)."""
    div = np.zeros_like(np.asarray(grad_x, dtype=np.float64))
    div[1:-1, 1:-1] = (
        (grad_x[1:-1, 2:] - grad_x[1:-1, :-2]) / (2.0 * pitch_u)
        + (grad_y[2:, 1:-1] - grad_y[:-2, 1:-1]) / (2.0 * pitch_v)
    )
    return div


def laplacian(f: np.ndarray, pitch_u: float = 1.0,
              pitch_v: float = 1.0) -> np.ndarray:
    """5-point Laplacian on interior cells (zero elsewhere), the operator
    inverted by :func:`integrate_heights`."""
    lap = np.zeros_like(np.asarray(f, dtype=np.float64))
    lap[1:-1, 1:-1] = (
        (f[1:-1, 2:] - 2.0 * f[1:-1, 1:-1] + f[1:-1, :-2]) / pitch_u ** 2
        + (f[2:, 1:-1] - 2.0 * f[1:-1, 1:-1] + f[:-2, 1:-1]) / pitch_v ** 2
    )
    return lap


def sense(heights: np.ndarray, spec: SensorSpec, lut: ReflectanceLUT,
          pose: SensorPose | None = None) -> TactileFrame:
    """Full sensing pipeline: render, invert through the LUT, integrate."""
    image = render_tactile(heights, spec)
    gx, gy = invert_intensity(lut, image)
    f = integrate_heights(gx, gy, spec.pitch_u, spec.pitch_v)
    return TactileFrame(image, gx, gy, f, pose)


# --- image serialization ------------------------------------------------------

def write_pgm16(path, heights: np.ndarray, mm_per_unit: float | None = None) -> None:
    """16-bit PGM with the height scale recorded on a header comment line."""
    h = np.asarray(heights, dtype=np.float64)
    if mm_per_unit is None:
        peak = float(h.max())
        mm_per_unit = peak / 65535.0 if peak > 0 else 1.0 / 65535.0
    data = np.clip(np.round(h / mm_per_unit), 0, 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(b"P5\n")
        fh.write(f"# mm_per_unit {mm_per_unit!r}\n".encode())
        fh.write(f"{h.shape[1]} {h.shape[0]}\n65535\n".encode())
        fh.write(data.tobytes())


def read_pgm16(path) -> tuple[np.ndarray, float]:
    """Read a height PGM written by :func:`write_pgm16` -> (heights_mm, scale)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = raw.split(b"\n", 4)
    if lines[0] != b"P5" or not lines[1].startswith(b"# mm_per_unit"):
        raise ValueError("not a tactoform height PGM")
    scale = float(lines[1].split()[-1])
    w, h = (int(x) for x in lines[2].split())
    if lines[3] != b"65535":
        raise ValueError("expected 16-bit PGM")
    data = np.frombuffer(lines[4][: w * h * 2], dtype=">u2").reshape(h, w)
    return data.astype(np.float64) * scale, scale


def write_ppm(path, image: np.ndarray) -> None:
    """8-bit binary PPM from an intensity image in [0, 1]^3."""
    img = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())
