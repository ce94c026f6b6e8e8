"""Ground-truth world, touch execution, depth rendering, and episodes.

A scene is a binary procedural shape in a voxel frame plus camera and
sensor configuration. Episodes run the perception loop: one depth view
initializes the latent through the vision proxy, then every touch is
planned by a policy, executed against the ground truth, and folded back
into the shape estimate (latent refinement, or direct voxel edits for
the no-prior baseline). Chamfer distance against the truth surface is
recorded after the vision stage and after every touch.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import camera as cam
from . import frames, policy, prior, rays, refine, tactile, voxel
from .errors import BadScene, DimMismatch, EmptySurface, PlanOutOfBounds

log = logging.getLogger(__name__)

GEL_DEPTH_MM = 2.0            # relief the virtual gel can sense past the press plane
CALIBRATION_SEED = 51966      # sensor calibration is bench-level, not per-scene
CALIBRATION_PRESSES = 50
CALIBRATION_BALL_MM = 4.0

# Per-touch refinement schedule. Ten inner iterations per touch; the step
# is taken in the prior's whitened coordinates, where this rate is
# calibrated for the eigenshape decoder (the raw-z default of
# refine_latent is far too small for its scale).
REFINE_STEPS = 10
REFINE_LR = 0.02

_SEED_TAGS = {"depth": 0, "policy": 2}
_LUT_CACHE: dict[tuple, tactile.ReflectanceLUT] = {}

POLICIES = ("active", "random", "direct-edit")
CSV_HEADER = "scene,policy,seed,touch_index,cd_sum,cd_norm,ms"


def subrng(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _SEED_TAGS[tag]]))


@dataclass
class Scene:
    """Ground truth plus everything needed to reproduce an episode."""

    name: str
    truth: voxel.VoxelGrid
    shape_family: str
    shape_params: dict
    frame: frames.VoxelFrame
    camera: cam.Camera
    sensor: tactile.SensorSpec
    noise_sigma: float
    transparent: bool
    seed: int
    voxel_mm: float
    resolution: int
    camera_height_mm: float = 457.2
    camera_tilt_deg: float = 30.0

    def to_config(self) -> dict:
        return {
            "name": self.name,
            "resolution": self.resolution,
            "voxel_mm": self.voxel_mm,
            "camera": {"height_mm": self.camera_height_mm,
                       "tilt_deg": self.camera_tilt_deg,
                       "res": list(self.camera.res)},
            "sensor": {"w_mm": self.sensor.contact_width,
                       "h_mm": self.sensor.contact_height,
                       "res": [self.sensor.res_u, self.sensor.res_v],
                       "k_voxels": self.sensor.footprint},
            "shape": {"family": self.shape_family, "params": self.shape_params},
            "noise": {"depth_sigma_mm": self.noise_sigma,
                      "transparent": self.transparent},
            "seed": self.seed,
        }


_SCENE_KEYS = {"name", "resolution", "voxel_mm", "camera", "sensor", "shape",
               "noise", "seed"}


def scene_from_config(cfg: dict, name: str | None = None) -> Scene:
    unknown = set(cfg) - _SCENE_KEYS
    if unknown:
        raise BadScene(f"unknown scene keys: {sorted(unknown)}")
    try:
        resolution = int(cfg["resolution"])
        voxel_mm = float(cfg["voxel_mm"])
        shape = cfg["shape"]
        family = shape["family"]
        params = dict(shape["params"])
        seed = int(cfg["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BadScene(f"malformed scene config: {exc}") from exc

    cam_cfg = cfg.get("camera", {})
    height = float(cam_cfg.get("height_mm", 457.2))
    tilt = float(cam_cfg.get("tilt_deg", 30.0))
    cam_res = tuple(cam_cfg.get("res", (160, 120)))
    sensor_cfg = cfg.get("sensor", {})
    sensor = tactile.SensorSpec(
        contact_width=float(sensor_cfg.get("w_mm", 19.0)),
        contact_height=float(sensor_cfg.get("h_mm", 14.0)),
        res_u=int(sensor_cfg.get("res", (160, 120))[0]),
        res_v=int(sensor_cfg.get("res", (160, 120))[1]),
        footprint=int(sensor_cfg.get("k_voxels", 7)),
    )
    noise_cfg = cfg.get("noise", {})

    frame = frames.default_frame((resolution,) * 3, voxel_mm)
    occ = prior.rasterize_shape(family, params, resolution)
    truth = voxel.VoxelGrid(occ.astype(np.float64), frame)
    center_v = np.full(3, (resolution - 1) / 2.0)
    target = frames.voxel_to_world(frame, center_v)
    radius = 0.5 * np.sqrt(3.0) * resolution * voxel_mm
    camera = cam.scene_camera(height, tilt, target, radius, res=cam_res)
    return Scene(
        name=name or cfg.get("name", f"{family}-{seed}"),
        truth=truth, shape_family=family, shape_params=params,
        frame=frame, camera=camera, sensor=sensor,
        noise_sigma=float(noise_cfg.get("depth_sigma_mm", 0.0)),
        transparent=bool(noise_cfg.get("transparent", False)),
        seed=seed, voxel_mm=voxel_mm, resolution=resolution,
        camera_height_mm=height, camera_tilt_deg=tilt,
    )


def load_scene(path) -> Scene:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BadScene(f"scene file is not valid JSON: {exc}") from exc
    return scene_from_config(cfg)


def sensor_lut(sensor: tactile.SensorSpec) -> tactile.ReflectanceLUT:
    """Calibrated inverse-reflectance table, cached per sensor geometry."""
    key = (sensor.contact_width, sensor.contact_height,
           sensor.res_u, sensor.res_v)
    if key not in _LUT_CACHE:
        _LUT_CACHE[key] = tactile.calibrate_lut(
            sensor, CALIBRATION_BALL_MM, CALIBRATION_PRESSES, CALIBRATION_SEED)
    return _LUT_CACHE[key]


# --- depth rendering ------------------------------------------------------------


def render_depth(scene: Scene, rng: np.random.Generator | None = None,
                 transparency_mask: np.ndarray | None = None) -> cam.DepthView:
    """Ray-cast per-pixel depth against the ground truth; optional additive
    Gaussian noise and transparency masking emulate unreliable depth."""
    origins, dirs = cam.voxel_rays(scene.camera, scene.frame)
    occ = scene.truth.values >= 0.5
    hit, t_hit, _ = rays.first_hit(occ, origins, dirs)
    w, h = scene.camera.res
    depth = t_hit.reshape(h, w).copy()
    depth[~hit.reshape(h, w)] = np.inf    # geometric miss, not a dropout
    if scene.noise_sigma > 0:
        if rng is None:
            rng = subrng(scene.seed, "depth")
        finite = np.isfinite(depth)
        depth[finite] += rng.normal(0.0, scene.noise_sigma, int(finite.sum()))
    if scene.transparent:
        depth[:] = np.nan
    elif transparency_mask is not None:
        depth[transparency_mask] = np.nan
    return cam.DepthView(scene.camera, depth)


# --- touch execution ------------------------------------------------------------

GEL_TAPER_MM = 2.5            # rim band where the gel is pinned to its housing
GEL_SMOOTH_MM = 1.0           # lateral membrane smoothing of the pressed gel


def _gel_edge_taper(spec: tactile.SensorSpec) -> np.ndarray:
    """Cosine roll-off to zero relief at the pad rim, where the gel is
    clamped; keeps the measured relief consistent with the zero-boundary
    integration the sensing pipeline assumes."""
    u = (np.arange(spec.res_u) + 0.5) * spec.pitch_u
    v = (np.arange(spec.res_v) + 0.5) * spec.pitch_v
    du = np.minimum(u, spec.contact_width - u)
    dv = np.minimum(v, spec.contact_height - v)
    edge = np.minimum(du[None, :], dv[:, None])
    t = np.clip(edge / GEL_TAPER_MM, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * t))


def gel_conform(raw_heights: np.ndarray, spec: tactile.SensorSpec) -> np.ndarray:
    """Relief the gel membrane actually takes over a pressed surface.

    The membrane cannot follow vertical voxel steps: lateral smoothing
    keeps slopes inside the range the optics resolve, and the rim taper
    pins the clamped edge to zero."""
    from scipy.ndimage import gaussian_filter
    smooth = gaussian_filter(
        raw_heights, (GEL_SMOOTH_MM / spec.pitch_v, GEL_SMOOTH_MM / spec.pitch_u))
    return smooth * _gel_edge_taper(spec)


def execute_touch(scene: Scene, plan: policy.TouchPlan,
                  lut: tactile.ReflectanceLUT | None = None,
                  press_depth_mm: float | None = None) -> refine.TouchRecord:
    """March the approach ray into the ground truth.

    The probe travels 1.2x the predicted contact depth before giving up.
    On contact the true local surface is pressed, rendered, inverted, and
    integrated into a tactile height patch whose confident samples become
    extra occupied-cell evidence.
    """
    frame = scene.frame
    dims = scene.truth.dims
    occ = scene.truth.values >= 0.5
    if press_depth_mm is None:
        press_depth_mm = frame.scale
    normal = plan.normal / np.linalg.norm(plan.normal)
    start = plan.approach_start
    t_center = float(np.linalg.norm(plan.center_world - start))
    t_limit = 1.2 * t_center

    origin_v = frames.world_to_voxel(frame, start)
    dir_v = frames.world_to_voxel(frame, start + normal) - origin_v
    t0, t1 = rays.slab_interval(origin_v[None], dir_v[None], dims)
    if t0[0] > t1[0] or t1[0] < 0 or t0[0] > t_limit:
        raise PlanOutOfBounds("approach segment never enters the scene volume")

    ray_cells = []
    contact = None
    t_hit = None
    for cell, t_in, _t_out in rays.traverse_ray(dims, origin_v, dir_v,
                                                t_max=t_limit):
        if occ[cell[0], cell[1], cell[2]]:
            contact = (int(cell[0]), int(cell[1]), int(cell[2]))
            t_hit = t_in
            break
        ray_cells.append(cell)
    ray_cells = (np.array(ray_cells, dtype=np.int64).reshape(-1, 3)
                 if ray_cells else np.empty((0, 3), dtype=np.int64))

    if contact is None:
        return refine.TouchRecord(hit=False, normal=normal, ray_cells=ray_cells)

    if lut is None:
        lut = sensor_lut(scene.sensor)
    spec = scene.sensor
    contact_w = start + t_hit * normal
    plane_center = contact_w + press_depth_mm * normal
    e_u, e_v = policy.plane_axes(normal)
    pose = tactile.SensorPose(plane_center, e_u, e_v, normal)

    u_off = (np.arange(spec.res_u) + 0.5) * spec.pitch_u - spec.contact_width / 2.0
    v_off = (np.arange(spec.res_v) + 0.5) * spec.pitch_v - spec.contact_height / 2.0
    uu, vv = np.meshgrid(u_off, v_off)
    plane_pts = (plane_center[None, :]
                 + uu.reshape(-1, 1) * e_u + vv.reshape(-1, 1) * e_v)
    t_back = press_depth_mm + GEL_DEPTH_MM
    origins_w = plane_pts - t_back * normal
    origins_pv = frames.world_to_voxel(frame, origins_w)
    dirs_pv = frames.world_to_voxel(frame, origins_w + normal) - origins_pv
    hit, t_s, _ = rays.first_hit(occ, origins_pv, dirs_pv, t_stop=t_back)
    heights = np.where(hit, t_back - np.nan_to_num(t_s, nan=t_back), 0.0)
    heights = np.clip(heights, 0.0, t_back).reshape(spec.res_v, spec.res_u)
    heights = gel_conform(heights, spec)

    patch = tactile.sense(heights, spec, lut, pose)
    patch_cells = refine.patch_to_cells(patch, spec, frame, dims, press_depth_mm)
    if len(patch_cells):
        # the contact cell is recorded separately; drop it from the patch set
        keep = ~(patch_cells == np.asarray(contact)).all(axis=1)
        patch_cells = patch_cells[keep]
        if len(ray_cells):
            ray_flat = refine._flatten(ray_cells, dims)
            patch_flat = refine._flatten(patch_cells, dims)
            patch_cells = patch_cells[~np.isin(patch_flat, ray_flat)]
    return refine.TouchRecord(hit=True, normal=normal, ray_cells=ray_cells,
                              contact=contact, height_patch=patch,
                              patch_cells=patch_cells)


# --- episodes -------------------------------------------------------------------


@dataclass
class TouchStep:
    index: int
    record: refine.TouchRecord | None
    cd_sum: float
    cd_norm: float
    ms: float


@dataclass
class EpisodeResult:
    scene: str
    policy: str
    seed: int
    steps: list[TouchStep]
    final_grid: voxel.VoxelGrid
    grid_path: str | None = None
    vision_z: np.ndarray | None = None

    @property
    def cd_history(self) -> list[float]:
        return [s.cd_sum for s in self.steps]


def _prediction_surface(grid: voxel.VoxelGrid) -> voxel.PointCloud:
    try:
        return voxel.extract_surface(grid)
    except EmptySurface:
        # degenerate collapse: nothing reaches 0.5; report the peak cell so
        # the CD stays finite and reflects the failure
        peak = np.unravel_index(int(np.argmax(grid.values)), grid.dims)
        pt = frames.voxel_to_world(grid.world_frame(),
                                   np.asarray(peak, dtype=np.float64))
        return voxel.PointCloud(pt.reshape(1, 3))


class Episode:
    """Stateful episode engine shared by the CLI runner and the service."""

    def __init__(self, scene: Scene, shape_prior: prior.ShapePrior,
                 policy_name: str = "active", seed: int | None = None,
                 vision_z: np.ndarray | None = None):
        if tuple(shape_prior.dims) != scene.truth.dims:
            raise DimMismatch("prior resolution does not match the scene")
        if policy_name not in POLICIES + ("human",):
            raise ValueError(f"unknown policy {policy_name!r}")
        self.scene = scene
        self.prior = shape_prior
        self.policy_name = policy_name
        self.seed = scene.seed if seed is None else int(seed)
        self.policy_rng = subrng(self.seed, "policy")
        self.lut = sensor_lut(scene.sensor)
        self.constraints = refine.ConstraintSet(scene.truth.dims)
        self.truth_surface = voxel.extract_surface(scene.truth)

        t0 = time.perf_counter()
        if vision_z is None:
            view = render_depth(scene, rng=subrng(self.seed, "depth"))
            vision_z = prior.vision_proxy(shape_prior, view, scene.frame)
        # the vision fit depends only on (scene, seed, prior); callers that
        # sweep policies may pass it back in to skip recomputation
        self.vision_z = np.asarray(vision_z, dtype=np.float64).copy()
        self.z = self.vision_z.copy()
        self.grid = shape_prior.decode(self.z, scene.frame)
        ms = 1000.0 * (time.perf_counter() - t0)
        cd_sum, cd_norm = self._chamfer()
        self.steps: list[TouchStep] = [TouchStep(0, None, cd_sum, cd_norm, ms)]

    def _chamfer(self) -> tuple[float, float]:
        pred = _prediction_surface(self.grid)
        return voxel.chamfer_pair(pred, self.truth_surface)


    @property
    def touches(self) -> int:
        return len(self.steps) - 1

    def suggestion(self) -> policy.TouchPlan:
        return policy.next_touch(self.grid, self.scene.sensor)

    def select_plan(self) -> policy.TouchPlan:
        if self.policy_name == "random":
            return policy.random_touch(self.grid, self.scene.sensor,
                                       self.policy_rng)
        if self.policy_name == "human":
            raise ValueError("human policy requires an explicit plan")
        return policy.next_touch(self.grid, self.scene.sensor)

    def step(self, plan: policy.TouchPlan | None = None) -> TouchStep:
        t0 = time.perf_counter()
        if plan is None:
            plan = self.select_plan()
        record = execute_touch(self.scene, plan, self.lut)
        self.constraints.add(record)
        if self.policy_name == "direct-edit":
            self.grid = refine.direct_edit(self.grid, self.constraints)
        else:
            self.z = refine.refine_latent(self.prior, self.z, self.constraints,
                                          steps=REFINE_STEPS, lr=REFINE_LR)
            self.grid = self.prior.decode(self.z, self.scene.frame)
        cd_sum, cd_norm = self._chamfer()
        ms = 1000.0 * (time.perf_counter() - t0)
        step = TouchStep(len(self.steps), record, cd_sum, cd_norm, ms)
        self.steps.append(step)
        return step


def run_episode(scene: Scene, shape_prior: prior.ShapePrior, policy_name: str,
                n_touches: int, seed: int | None = None,
                vision_z: np.ndarray | None = None) -> EpisodeResult:
    episode = Episode(scene, shape_prior, policy_name, seed, vision_z)
    for _ in range(n_touches):
        episode.step()
    return EpisodeResult(scene.name, policy_name, episode.seed,
                         episode.steps, episode.grid,
                         vision_z=episode.vision_z)


# --- default experiment setup -----------------------------------------------


def default_corpus_spec(resolution: int = 64) -> prior.ShapeCorpusSpec:
    return prior.ShapeCorpusSpec(count_per_family=40, resolution=resolution,
                                 seed=11)


def default_benchmark_scenes(n: int = 10, resolution: int = 64,
                             voxel_mm: float = 2.0,
                             sigma=(1.0, 3.0),
                             seed: int = 202) -> list[Scene]:
    """Procedural evaluation scenes: families cycled, parameters drawn from
    the corpus ranges with a seed disjoint from the training corpus.

    Depth noise cycles through `sigma` so the set spans near-clean views
    (little left for touches) and heavily corrupted ones (lots to fix).
    """
    rng = np.random.default_rng(seed)
    spec = prior.ShapeCorpusSpec(resolution=resolution)
    sigmas = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
    scenes = []
    for i in range(n):
        family = prior.FAMILIES[i % len(prior.FAMILIES)]
        params = prior.sample_shape_params(spec, family, rng)
        cfg = {
            "name": f"bench-{i:02d}-{family}",
            "resolution": resolution,
            "voxel_mm": voxel_mm,
            "camera": {"height_mm": 457.2, "tilt_deg": 30.0,
                       "res": [160, 120]},
            "sensor": {"w_mm": 19.0, "h_mm": 14.0, "res": [160, 120],
                       "k_voxels": 7},
            "shape": {"family": family, "params": params},
            "noise": {"depth_sigma_mm": float(sigmas[i % len(sigmas)]),
                      "transparent": False},
            "seed": int(rng.integers(1 << 31)),
        }
        scenes.append(scene_from_config(cfg))
    return scenes


# --- suites ---------------------------------------------------------------------


def suite_rows(result: EpisodeResult, timings: bool = False) -> list[dict]:
    rows = []
    for step in result.steps:
        rows.append({
            "scene": result.scene, "policy": result.policy,
            "seed": result.seed, "touch_index": step.index,
            "cd_sum": step.cd_sum, "cd_norm": step.cd_norm,
            "ms": int(round(step.ms)) if timings else 0,
        })
    return rows


def run_suite(scenes: list[Scene], shape_prior: prior.ShapePrior,
              policies: list[str], seeds: list[int], touches: int = 10,
              jobs: int = 1, timings: bool = False) -> list[dict]:
    """Cross product of scenes x policies x seeds; per-episode failures are
    recorded as a single nan row and the suite continues.

    Episodes that share a (scene, seed) pair reuse one vision fit, since
    the initial latent does not depend on the policy.
    """
    groups = [(scene, seed) for scene in scenes for seed in seeds]

    def one_group(group):
        scene, seed = group
        vision_z = None
        chunks = []
        for pol in policies:
            try:
                result = run_episode(scene, shape_prior, pol, touches, seed,
                                     vision_z)
                vision_z = result.vision_z
                chunks.append(suite_rows(result, timings))
            except Exception as exc:
                log.error("episode %s/%s/%s failed: %s",
                          scene.name, pol, seed, exc)
                chunks.append([{"scene": scene.name, "policy": pol,
                                "seed": seed, "touch_index": -1,
                                "cd_sum": float("nan"),
                                "cd_norm": float("nan"), "ms": 0}])
        return chunks

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            grouped = list(pool.map(one_group, groups))
    else:
        grouped = [one_group(g) for g in groups]
    # rows ordered scene-major, then policy, then seed, as documented
    by_key = {}
    for (scene, seed), chunks in zip(groups, grouped):
        for pol, chunk in zip(policies, chunks):
            by_key[(scene.name, pol, seed)] = chunk
    ordered = []
    for scene in scenes:
        for pol in policies:
            for seed in seeds:
                ordered.extend(by_key[(scene.name, pol, seed)])
    return ordered


def format_csv(rows: list[dict]) -> str:
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(f"{row['scene']},{row['policy']},{row['seed']},"
                     f"{row['touch_index']},{row['cd_sum']!r},"
                     f"{row['cd_norm']!r},{row['ms']}")
    return "\n".join(lines) + "\n"


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(rows))


def summarize(rows: list[dict]) -> dict:
    """Per-policy mean and median cd_sum at each touch index."""
    out: dict = {}
    by_key: dict[tuple, list[float]] = {}
    for row in rows:
        if row["touch_index"] < 0 or not np.isfinite(row["cd_sum"]):
            continue
        by_key.setdefault((row["policy"], row["touch_index"]), []).append(
            row["cd_sum"])
    for (pol, idx), values in sorted(by_key.items()):
        entry = out.setdefault(pol, {"touch_index": [], "mean": [], "median": []})
        entry["touch_index"].append(idx)
        entry["mean"].append(float(np.mean(values)))
        entry["median"].append(float(np.median(values)))
    return out
