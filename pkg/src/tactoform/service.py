"""HTTP session service: drive the episode loop interactively.

Each session owns one episode (scene + prior + latent state). Touches are
serialized by a per-session lock; a second mutation while one is running
gets 409. The ground truth stays server-side unless the session was
created with reveal_truth, which only unlocks a comparison overlay.
"""

from __future__ import annotations

import base64
import secrets
import threading
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse

from . import frames, policy, prior, sim, voxel
from .errors import BadScene, BlockedPlan, TactoformError

TRANSPORT_MAX_SIDE = 32
TRUTH_POINT_CAP = 4000


@dataclass
class _Session:
    id: str
    episode: sim.Episode
    reveal_truth: bool
    lock: threading.Lock
    manual_used: bool = False
    suggestion_cache: dict | None = None

    @property
    def policy_label(self) -> str:
        return "human" if self.manual_used else "active"


def _transport_grid(grid: voxel.VoxelGrid) -> dict:
    factor = max(1, int(np.ceil(max(grid.dims) / TRANSPORT_MAX_SIDE)))
    values = grid.values
    if factor > 1:
        pad = [(0, (-d) % factor) for d in grid.dims]
        padded = np.pad(values, pad)
        small = voxel.max_pool(voxel.VoxelGrid(padded), factor)
    else:
        small = voxel.VoxelGrid(values.copy())
    frame = grid.world_frame()
    origin = frames.voxel_to_world(frame, np.zeros(3))
    return {
        "dims": list(small.dims),
        "full_dims": list(grid.dims),
        "factor": factor,
        "voxel_mm": frame.scale * factor,
        "origin_world": [float(x) for x in origin],
        "vxg_b64": base64.b64encode(voxel.grid_to_bytes(small)).decode(),
    }


def _plan_doc(plan: policy.TouchPlan | None) -> dict | None:
    return None if plan is None else plan.to_dict()


def create_app(priors: dict[str, prior.ShapePrior],
               ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="tactoform session service")
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()
    app.state.sessions = sessions

    def _error(status: int, name: str, detail: str) -> JSONResponse:
        return JSONResponse({"error": name, "detail": detail},
                            status_code=status)

    def _get(session_id: str) -> _Session | None:
        with registry_lock:
            return sessions.get(session_id)

    def _suggestion(sess: _Session) -> dict | None:
        if sess.suggestion_cache is None:
            try:
                sess.suggestion_cache = _plan_doc(sess.episode.suggestion())
            except TactoformError:
                sess.suggestion_cache = None
        return sess.suggestion_cache

    def _state_doc(sess: _Session) -> dict:
        ep = sess.episode
        records = []
        for step in ep.steps:
            rec = step.record
            entry = {"index": step.index, "cd_sum": step.cd_sum,
                     "cd_norm": step.cd_norm, "ms": int(round(step.ms))}
            if rec is not None:
                entry["hit"] = rec.hit
                entry["normal"] = [float(x) for x in rec.normal]
                if rec.contact is not None:
                    contact_w = frames.voxel_to_world(
                        ep.scene.frame, np.asarray(rec.contact, float))
                    entry["contact_world"] = [float(x) for x in contact_w]
            records.append(entry)
        doc = {
            "id": sess.id,
            "state": "refining" if sess.lock.locked() else "ready",
            "policy": sess.policy_label,
            "touches": ep.touches,
            "scene": ep.scene.name,
            "cd_history": [{"touch_index": s.index, "cd_sum": s.cd_sum,
                            "cd_norm": s.cd_norm} for s in ep.steps],
            "grid": _transport_grid(ep.grid),
            "records": records,
            "suggestion": _suggestion(sess),
            "sensor": {"k": ep.scene.sensor.footprint,
                       "yaw_choices": list(policy.YAWS_DEG),
                       "pitch_choices": list(policy.PITCHES_DEG)},
        }
        if sess.reveal_truth:
            pts = voxel.extract_surface(ep.scene.truth).points
            stride = max(1, len(pts) // TRUTH_POINT_CAP)
            doc["truth_points"] = [[float(v) for v in p] for p in pts[::stride]]
        return doc

    def _manual_plan(ep: sim.Episode, body: dict) -> policy.TouchPlan:
        try:
            center = np.asarray([float(v) for v in body["center"]])
            yaw = float(body["yaw"])
            pitch = float(body["pitch"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BadScene(f"malformed plan: {exc}") from exc
        grid = ep.grid
        normal = policy.approach_normal(yaw, pitch)
        box = policy.occupied_bbox(grid)
        if box is None:
            raise BlockedPlan("prediction has no occupied region")
        frame = grid.world_frame()
        lo, hi = box
        center_w = frames.voxel_to_world(frame, (lo + hi) / 2.0)
        radius = max(float(np.linalg.norm(
            frames.voxel_to_world(frame, hi.astype(float)) - center_w)),
            frame.scale)
        start = center - normal * (1.5 * radius)
        k = ep.scene.sensor.footprint
        band = policy.surface_band(grid)
        reach = (k / 2.0 + 1.5) * frame.scale
        if not policy.approach_clear(grid, start, center, band, reach_mm=reach):
            raise BlockedPlan("approach segment is blocked by the prediction")
        return policy.TouchPlan(corner=(-1, -1), k=k, score=-1.0,
                                center_world=center, normal=normal,
                                approach_start=start, yaw=yaw, pitch=pitch,
                                offset=0.0)

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        prior_id = body.get("prior", "default")
        model = priors.get(prior_id)
        if model is None:
            return _error(404, "UnknownPrior", f"no prior named {prior_id!r}")
        try:
            scene = sim.scene_from_config(body.get("scene", {}))
            episode = sim.Episode(scene, model, "active",
                                  seed=body.get("seed"))
        except TactoformError as exc:
            return _error(400, type(exc).__name__, str(exc))
        sess = _Session(secrets.token_hex(8), episode,
                        bool(body.get("reveal_truth", False)),
                        threading.Lock())
        with registry_lock:
            sessions[sess.id] = sess
        return _state_doc(sess)

    @app.get("/sessions/{session_id}")
    def get_state(session_id: str):
        sess = _get(session_id)
        if sess is None:
            return _error(404, "SessionNotFound", session_id)
        return _state_doc(sess)

    @app.get("/sessions/{session_id}/suggestion")
    def get_suggestion(session_id: str):
        sess = _get(session_id)
        if sess is None:
            return _error(404, "SessionNotFound", session_id)
        return {"suggestion": _suggestion(sess)}

    @app.post("/sessions/{session_id}/touch")
    def post_touch(session_id: str, body: dict):
        sess = _get(session_id)
        if sess is None:
            return _error(404, "SessionNotFound", session_id)
        if not sess.lock.acquire(blocking=False):
            return _error(409, "Conflict", "a refinement is in flight")
        try:
            plan_spec = body.get("plan", "auto")
            if plan_spec == "auto":
                plan = None
            else:
                plan = _manual_plan(sess.episode, plan_spec)
                sess.manual_used = True
            try:
                sess.episode.step(plan)
            except TactoformError as exc:
                return _error(422, type(exc).__name__, str(exc))
            sess.suggestion_cache = None
        except BlockedPlan as exc:
            return _error(422, "BlockedPlan", str(exc))
        except BadScene as exc:
            return _error(400, "BadScene", str(exc))
        finally:
            sess.lock.release()
        return _state_doc(sess)

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(session_id: str):
        sess = _get(session_id)
        if sess is None:
            return _error(404, "SessionNotFound", session_id)
        ep = sess.episode
        lines = [sim.CSV_HEADER]
        for step in ep.steps:
            lines.append(f"{ep.scene.name},{sess.policy_label},{ep.seed},"
                         f"{step.index},{step.cd_sum!r},{step.cd_norm!r},"
                         f"{int(round(step.ms))}")
        return Response("\n".join(lines) + "\n", media_type="text/csv")

    if ui_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
