"""Linear eigenshape prior over voxel occupancy.

Shapes are embedded in logit space; a truncated eigenbasis of corpus
deviations from the mean gives a compact differentiable decoder
v = sigmoid(mean + z @ basis). Training shapes come from procedural
families (box, cylinder, sphere, bottle, capped cone) rasterized into
binary occupancy grids.
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import camera as cam
from . import frames, refine, voxel
from .errors import (BadMagic, DimMismatch, NoVisiblePixels,
                     RankDeficientWarning, ShapeOutOfBounds, TruncatedFile)

SPR_MAGIC = b"SPR1"
LOGIT_CLAMP = 1e-3      # corpus clamp before logit: bounds hard-binary logits
ENCODE_CLAMP = 1e-9     # projection clamp: only guards against infinities
MARGIN_VOXELS = 2

FAMILIES = ("box", "cylinder", "sphere", "bottle", "cone")

# parameter ranges in fractions of the half-grid; margin-safe for res >= 32
DEFAULT_RANGES: dict[str, dict[str, tuple[float, float]]] = {
    "box": {"half_x": (0.18, 0.72), "half_y": (0.18, 0.72), "half_z": (0.25, 0.8)},
    "cylinder": {"radius": (0.18, 0.55), "half_height": (0.3, 0.8)},
    "sphere": {"radius": (0.22, 0.72)},
    "bottle": {"body_radius": (0.25, 0.5), "neck_ratio": (0.3, 0.6),
               "half_height": (0.45, 0.8), "shoulder": (0.25, 0.6)},
    "cone": {"base_radius": (0.28, 0.6), "top_ratio": (0.1, 0.9),
             "half_height": (0.35, 0.8)},
}


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(v: np.ndarray, eps: float = LOGIT_CLAMP) -> np.ndarray:
    v = np.clip(v, eps, 1.0 - eps)
    return np.log(v) - np.log1p(-v)


# --- procedural shapes ----------------------------------------------------------


def _normalized_coords(resolution: int):
    # cell centers mapped to (-1, 1): x = (i - (R-1)/2) / (R/2)
    axis = (np.arange(resolution) - (resolution - 1) / 2.0) / (resolution / 2.0)
    return np.meshgrid(axis, axis, axis, indexing="ij")


def rasterize_shape(family: str, params: dict, resolution: int) -> np.ndarray:
    """Binary occupancy of one procedural shape, centered in the grid.

    Raises ShapeOutOfBounds when the shape would leave less than a
    2-voxel empty margin on any face.
    """
    x, y, z = _normalized_coords(resolution)
    if family == "box":
        occ = ((np.abs(x) <= params["half_x"])
               & (np.abs(y) <= params["half_y"])
               & (np.abs(z) <= params["half_z"]))
    elif family == "cylinder":
        occ = ((x * x + y * y <= params["radius"] ** 2)
               & (np.abs(z) <= params["half_height"]))
    elif family == "sphere":
        occ = x * x + y * y + z * z <= params["radius"] ** 2
    elif family == "cone":
        h = params["half_height"]
        r0 = params["base_radius"]
        r1 = params["base_radius"] * params["top_ratio"]
        frac = np.clip((z + h) / (2.0 * h), 0.0, 1.0)
        r = r0 + (r1 - r0) * frac
        occ = (x * x + y * y <= r * r) & (np.abs(z) <= h)
    elif family == "bottle":
        h = params["half_height"]
        rb = params["body_radius"]
        rn = params["body_radius"] * params["neck_ratio"]
        zs = -h + params["shoulder"] * 2.0 * h
        blend_len = max(0.35 * h, 1e-6)
        t = np.clip((z - zs) / blend_len, 0.0, 1.0)
        r = rb + (rn - rb) * 0.5 * (1.0 - np.cos(np.pi * t))
        occ = (x * x + y * y <= r * r) & (np.abs(z) <= h)
    else:
        raise ValueError(f"unknown shape family {family!r}")

    if not occ.any():
        raise ShapeOutOfBounds(f"{family} with {params} rasterized to nothing")
    idx = np.argwhere(occ)
    if idx.min() < MARGIN_VOXELS or idx.max() >= resolution - MARGIN_VOXELS:
        raise ShapeOutOfBounds(
            f"{family} with {params} violates the {MARGIN_VOXELS}-voxel margin")
    return occ


@dataclass
class ShapeCorpusSpec:
    """Procedural training corpus description."""

    families: tuple[str, ...] = FAMILIES
    count_per_family: int = 40
    resolution: int = 64
    seed: int = 0
    ranges: dict = field(default_factory=dict)   # overrides of DEFAULT_RANGES

    def family_ranges(self, family: str) -> dict:
        base = dict(DEFAULT_RANGES[family])
        base.update(self.ranges.get(family, {}))
        return base

    def to_dict(self) -> dict:
        return {"families": list(self.families),
                "count_per_family": self.count_per_family,
                "resolution": self.resolution,
                "seed": self.seed,
                "ranges": self.ranges}

    @classmethod
    def from_dict(cls, cfg: dict) -> "ShapeCorpusSpec":
        return cls(families=tuple(cfg.get("families", FAMILIES)),
                   count_per_family=int(cfg.get("count_per_family", 40)),
                   resolution=int(cfg.get("resolution", 64)),
                   seed=int(cfg.get("seed", 0)),
                   ranges=cfg.get("ranges", {}))

    @classmethod
    def from_json(cls, path) -> "ShapeCorpusSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def sample_shape_params(spec: ShapeCorpusSpec, family: str, rng) -> dict:
    return {name: float(rng.uniform(lo, hi))
            for name, (lo, hi) in spec.family_ranges(family).items()}


def generate_corpus(spec: ShapeCorpusSpec) -> list[voxel.VoxelGrid]:
    """Deterministic list of binary shape grids drawn from the spec."""
    rng = np.random.default_rng(spec.seed)
    grids = []
    for family in spec.families:
        for _ in range(spec.count_per_family):
            params = sample_shape_params(spec, family, rng)
            occ = rasterize_shape(family, params, spec.resolution)
            grids.append(voxel.VoxelGrid(occ.astype(np.float64)))
    return grids


def corpus_hash(corpus: list[voxel.VoxelGrid]) -> str:
    h = hashlib.sha256()
    for grid in corpus:
        h.update(struct.pack("<3I", *grid.dims))
        h.update(grid.values.astype("<f4").tobytes())
    return h.hexdigest()


# --- the prior ------------------------------------------------------------------


@dataclass
class ShapePrior:
    """Mean + orthonormal eigenshape rows in logit space.

    scales holds the corpus singular value of each row; rows past the
    corpus rank are zero with zero scale. The scales define the whitened
    coordinates used by gradient refinement.
    """

    mean: np.ndarray          # (V,)
    basis: np.ndarray         # (D, V), orthonormal rows
    scales: np.ndarray        # (D,)
    dims: tuple[int, int, int]
    rank: int
    corpus_hash: str = ""

    @property
    def latent_dim(self) -> int:
        return self.basis.shape[0]

    def _check_z(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        if z.shape[0] != self.latent_dim:
            raise DimMismatch(
                f"latent has {z.shape[0]} entries, prior expects {self.latent_dim}")
        if not np.isfinite(z).all():
            raise ValueError("latent code must be finite")
        return z

    def decode_values(self, z: np.ndarray) -> np.ndarray:
        """Flat occupancy vector, strictly inside (0, 1)."""
        z = self._check_z(z)
        v = sigmoid(self.mean + z @ self.basis)
        return np.clip(v, 1e-12, 1.0 - 1e-12)

    def decode(self, z: np.ndarray,
               frame: frames.VoxelFrame | None = None) -> voxel.VoxelGrid:
        return voxel.VoxelGrid(self.decode_values(z).reshape(self.dims), frame)

    def decode_cells(self, z: np.ndarray, flat_cells: np.ndarray) -> np.ndarray:
        """Occupancy restricted to the given flat cell indices."""
        z = self._check_z(z)
        v = sigmoid(self.mean[flat_cells] + z @ self.basis[:, flat_cells])
        return np.clip(v, 1e-12, 1.0 - 1e-12)

    def encode(self, grid: voxel.VoxelGrid) -> np.ndarray:
        """Project a grid onto the basis: z = B (logit(v) - mean)."""
        if grid.dims != tuple(self.dims):
            raise DimMismatch(
                f"grid dims {grid.dims} do not match prior dims {self.dims}")
        return self.basis @ (logit(grid.values.ravel(), ENCODE_CLAMP)
                             - self.mean)


def fit_prior(corpus: list[voxel.VoxelGrid], latent_dim: int) -> ShapePrior:
    """Truncated eigendecomposition of logit-occupancy deviations.

    Uses the corpus Gram matrix (snapshot method), which is exact for
    corpus sizes far below the cell count. Rows are sign-fixed so the
    first entry above noise is positive. Warns and zero-pads when the
    corpus rank is below latent_dim.
    """
    if latent_dim < 1:
        raise ValueError("latent_dim must be >= 1")
    if not corpus:
        raise ValueError("corpus is empty")
    dims = corpus[0].dims
    if any(g.dims != dims for g in corpus):
        raise DimMismatch("corpus grids must share one resolution")

    n = len(corpus)
    devs = np.stack([logit(g.values.ravel()) for g in corpus])
    mean = devs.mean(axis=0)
    devs -= mean

    gram = devs @ devs.T
    eigval, eigvec = np.linalg.eigh(gram)
    order = np.argsort(eigval)[::-1]
    eigval = eigval[order]
    eigvec = eigvec[:, order]
    sv = np.sqrt(np.clip(eigval, 0.0, None))

    tol = sv[0] * 1e-8 if sv[0] > 0 else 0.0
    corpus_rank = int((sv > tol).sum())
    keep = min(latent_dim, corpus_rank)

    basis = np.zeros((latent_dim, devs.shape[1]))
    scales = np.zeros(latent_dim)
    if keep:
        rows = (eigvec[:, :keep].T @ devs) / sv[:keep, None]
        ortho_err = np.abs(rows @ rows.T - np.eye(keep)).max()
        if ortho_err > 1e-8:  # near-degenerate spectrum: polish with QR
            q, _ = np.linalg.qr(rows.T)
            rows = q.T
        basis[:keep] = rows
        scales[:keep] = sv[:keep]

    # sign convention: first entry above noise level is positive
    for d in range(keep):
        row = basis[d]
        nz = np.nonzero(np.abs(row) > 1e-12 * max(np.abs(row).max(), 1e-300))[0]
        if len(nz) and row[nz[0]] < 0:
            basis[d] = -row

    if corpus_rank < latent_dim:
        warnings.warn(
            f"corpus rank {corpus_rank} below latent dim {latent_dim}; "
            f"{latent_dim - corpus_rank} basis rows zero-padded",
            RankDeficientWarning)
    return ShapePrior(mean, basis, scales, dims, keep, corpus_hash(corpus))


# --- serialization --------------------------------------------------------------


def write_prior(prior: ShapePrior, path) -> None:
    """SPR1: magic, u32 dims (3) + u32 D, f64 mean, D x V f64 basis rows,
    then a trailing block with the f64 row scales and the corpus hash."""
    with open(path, "wb") as fh:
        fh.write(SPR_MAGIC)
        fh.write(struct.pack("<4I", *prior.dims, prior.latent_dim))
        fh.write(prior.mean.astype("<f8").tobytes())
        fh.write(prior.basis.astype("<f8").tobytes())
        fh.write(prior.scales.astype("<f8").tobytes())
        digest = prior.corpus_hash.encode()
        fh.write(struct.pack("<2I", prior.rank, len(digest)))
        fh.write(digest)


def read_prior(path) -> ShapePrior:
    with open(path, "rb") as fh:
        if fh.read(4) != SPR_MAGIC:
            raise BadMagic("not an SPR1 prior file")
        header = fh.read(16)
        if len(header) < 16:
            raise TruncatedFile("prior header ended early")
        dx, dy, dz, d = struct.unpack("<4I", header)
        v = dx * dy * dz
        mean = np.fromfile(fh, dtype="<f8", count=v)
        basis = np.fromfile(fh, dtype="<f8", count=d * v)
        if mean.size < v or basis.size < d * v:
            raise TruncatedFile("prior payload ended early")
        basis = basis.reshape(d, v)
        scales = np.fromfile(fh, dtype="<f8", count=d)
        rank = d
        digest = ""
        if scales.size == d:
            tail = fh.read(8)
            if len(tail) == 8:
                rank, hlen = struct.unpack("<2I", tail)
                digest = fh.read(hlen).decode()
        else:  # bare-format file without the trailing block
            scales = np.ones(d)
    return ShapePrior(mean.astype(np.float64), basis, scales,
                      (dx, dy, dz), rank, digest)


# --- vision proxy ---------------------------------------------------------------


SURFACE_EVIDENCE_WEIGHT = 4.0   # rebalances ~1e3 surface vs ~2e5 free cells
VISION_RIDGE = 10.0             # coefficient prior strength during the fit


def vision_proxy(prior: ShapePrior, view: "cam.DepthView",
                 frame: frames.VoxelFrame, steps: int = 200,
                 lr: float = 0.01, improve_tol: float = 1e-6) -> np.ndarray:
    """Initial latent estimate from a single depth view.

    Depth pixels become visibility constraints (surface cell -> 1, cells
    passed through -> 0) and the per-cell constraint loss is minimized
    over z from 0 by backtracking gradient descent in whitened
    coordinates. Surface cells carry extra weight (they are outnumbered
    by free-space cells two orders of magnitude) and a mild coefficient
    ridge keeps unconstrained shape modes near the corpus mean.
    """
    if not np.isfinite(view.depth).any():
        raise NoVisiblePixels("depth view has no usable pixel")
    zero_cells, one_cells = cam.depth_constraints(view, prior.dims, frame)
    if len(zero_cells) == 0 and len(one_cells) == 0:
        raise NoVisiblePixels("no depth ray intersects the grid")
    z0 = np.zeros(prior.latent_dim)
    return refine.descend(prior, z0, zero_cells, one_cells, steps=steps,
                          lr=lr, improve_tol=improve_tol, persistent_step=True,
                          one_weight=SURFACE_EVIDENCE_WEIGHT,
                          ridge=VISION_RIDGE)
