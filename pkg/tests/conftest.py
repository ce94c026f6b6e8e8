"""Shared fixtures: small corpora, priors, and scenes kept cheap enough to
reuse across the whole suite."""

import numpy as np
import pytest

from tactoform import prior, sim


def make_random_prior(dims=(8, 8, 8), latent_dim=6, seed=0):
    """Synthetic prior with a random orthonormal basis; exercises decoder
    math without any corpus fitting."""
    rng = np.random.default_rng(seed)
    n = int(np.prod(dims))
    mean = rng.normal(scale=1.5, size=n)
    q, _ = np.linalg.qr(rng.normal(size=(n, latent_dim)))
    scales = np.sort(rng.uniform(5.0, 50.0, latent_dim))[::-1].copy()
    return prior.ShapePrior(mean, q.T.copy(), scales, tuple(dims),
                            latent_dim, "synthetic")


@pytest.fixture(scope="session")
def tiny_prior():
    return make_random_prior()


@pytest.fixture(scope="session")
def small_corpus():
    spec = prior.ShapeCorpusSpec(count_per_family=8, resolution=24, seed=7,
                                 ranges=_SMALL_RANGES)
    return prior.generate_corpus(spec)


# margin-safe at 24 voxels
_SMALL_RANGES = {
    "box": {"half_x": (0.2, 0.6), "half_y": (0.2, 0.6), "half_z": (0.2, 0.6)},
    "cylinder": {"radius": (0.2, 0.5), "half_height": (0.3, 0.6)},
    "sphere": {"radius": (0.25, 0.6)},
    "bottle": {"body_radius": (0.25, 0.45), "half_height": (0.4, 0.6)},
    "cone": {"base_radius": (0.28, 0.5), "half_height": (0.35, 0.6)},
}


@pytest.fixture(scope="session")
def small_prior(small_corpus):
    return prior.fit_prior(small_corpus, 16)


def small_scene_config(family="bottle", seed=3, sigma=0.0, resolution=24,
                       **overrides):
    params = {
        "bottle": {"body_radius": 0.42, "neck_ratio": 0.45,
                   "half_height": 0.58, "shoulder": 0.4},
        "box": {"half_x": 0.45, "half_y": 0.3, "half_z": 0.5},
        "sphere": {"radius": 0.5},
        "cylinder": {"radius": 0.35, "half_height": 0.55},
        "cone": {"base_radius": 0.45, "top_ratio": 0.3, "half_height": 0.55},
    }[family]
    cfg = {
        "resolution": resolution,
        "voxel_mm": 3.0,
        "camera": {"height_mm": 457.2, "tilt_deg": 30, "res": [64, 48]},
        "sensor": {"w_mm": 19, "h_mm": 14, "res": [64, 48], "k_voxels": 4},
        "shape": {"family": family, "params": params},
        "noise": {"depth_sigma_mm": sigma, "transparent": False},
        "seed": seed,
    }
    cfg.update(overrides)
    return cfg


@pytest.fixture(scope="session")
def small_scene():
    return sim.scene_from_config(small_scene_config())
