"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error. Diagnostics go to
stderr; data goes to the paths named by flags (or stdout where noted).
The TACTOFORM_SEED environment variable overrides config seeds.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import prior, refine, sim, tactile, voxel
from .errors import TactoformError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _env_seed() -> int | None:
    raw = os.environ.get("TACTOFORM_SEED")
    return int(raw) if raw else None


def build_parser() -> _Parser:
    parser = _Parser(prog="tactoform",
                     description="Visuo-tactile shape perception sandbox")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="rasterize a procedural shape corpus")
    p.add_argument("--spec", required=True, help="corpus spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--family", help="restrict to one shape family")

    p = sub.add_parser("train-prior", help="fit an eigenshape prior")
    p.add_argument("--corpus", required=True, help="corpus spec JSON")
    p.add_argument("--dim", type=int, default=200, help="latent dimension")
    p.add_argument("--out", required=True, help="output .spr path")
    p.add_argument("--family", help="fit on a single family (per-category prior)")

    p = sub.add_parser("calibrate", help="build and save a reflectance LUT")
    p.add_argument("--presses", type=int, default=50)
    p.add_argument("--radius", type=float, default=4.0, help="ball radius mm")
    p.add_argument("--seed", type=int, default=sim.CALIBRATION_SEED)
    p.add_argument("--out", required=True, help="output .npz path")
    p.add_argument("--demo-ppm", help="also render a demo press image")
    p.add_argument("--demo-pgm", help="also write the reconstructed heights")

    p = sub.add_parser("run", help="run one episode")
    p.add_argument("--scene", required=True, help="scene JSON")
    p.add_argument("--prior", required=True, help=".spr prior file")
    p.add_argument("--policy", default="active", choices=list(sim.POLICIES))
    p.add_argument("--touches", type=int, default=10)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--grid-out", help="also write the final grid (VXG1)")
    p.add_argument("--seed", type=int, help="override the scene seed")
    p.add_argument("--timings", action="store_true",
                   help="record wall-clock ms (breaks byte reproducibility)")

    p = sub.add_parser("suite", help="run the scenes x policies x seeds table")
    p.add_argument("--config", help="suite JSON; omit for the built-in default")
    p.add_argument("--prior", help=".spr prior file (else trained per config)")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timings", action="store_true")

    p = sub.add_parser("serve", help="start the interactive session service")
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7333)
    p.add_argument("--prior", action="append", required=True,
                   metavar="NAME=PATH", help="prior to load (repeatable)")
    p.add_argument("--ui", help="directory of built UI assets to serve at /ui")

    p = sub.add_parser("eval", help="compare grids or summarize a suite CSV")
    p.add_argument("--pred", help="predicted grid (VXG1)")
    p.add_argument("--truth", help="ground-truth grid (VXG1)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--csv", help="suite CSV to summarize instead")
    return parser


def _cmd_gen_corpus(args) -> int:
    spec = prior.ShapeCorpusSpec.from_json(args.spec)
    if _env_seed() is not None:
        spec.seed = _env_seed()
    if args.family:
        spec.families = (args.family,)
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    manifest = []
    index = 0
    for family in spec.families:
        for _ in range(spec.count_per_family):
            params = prior.sample_shape_params(spec, family, rng)
            occ = prior.rasterize_shape(family, params, spec.resolution)
            name = f"{index:04d}_{family}.vxg"
            voxel.write_grid(voxel.VoxelGrid(occ.astype(np.float64)),
                             os.path.join(args.out, name))
            manifest.append({"file": name, "family": family, "params": params})
            index += 1
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump({"spec": spec.to_dict(), "shapes": manifest}, fh, indent=1)
    print(f"wrote {index} grids to {args.out}", file=sys.stderr)
    return 0


def _cmd_train_prior(args) -> int:
    spec = prior.ShapeCorpusSpec.from_json(args.corpus)
    if _env_seed() is not None:
        spec.seed = _env_seed()
    if args.family:
        spec.families = (args.family,)
    corpus = prior.generate_corpus(spec)
    model = prior.fit_prior(corpus, args.dim)
    prior.write_prior(model, args.out)
    print(f"fit prior on {len(corpus)} shapes at {spec.resolution}^3, "
          f"rank {model.rank}/{args.dim} -> {args.out}", file=sys.stderr)
    return 0


def _cmd_calibrate(args) -> int:
    spec = tactile.SensorSpec()
    lut = tactile.calibrate_lut(spec, args.radius, args.presses, args.seed)
    np.savez(args.out, bins=lut.bins, grad_sum=lut.grad_sum, counts=lut.counts,
             forward_model_id=lut.forward_model_id)
    print(f"calibrated {args.presses} presses, "
          f"{lut.occupied_fraction:.1%} bins occupied -> {args.out}",
          file=sys.stderr)
    if args.demo_ppm or args.demo_pgm:
        heights, gx, gy, _ = tactile.sphere_press(spec, args.radius,
                                                  0.3 * args.radius)
        frame = tactile.sense(heights, spec, lut)
        if args.demo_ppm:
            tactile.write_ppm(args.demo_ppm, frame.intensity)
        if args.demo_pgm:
            tactile.write_pgm16(args.demo_pgm, frame.height)
    return 0


def _cmd_run(args) -> int:
    scene = sim.load_scene(args.scene)
    model = prior.read_prior(args.prior)
    seed = _env_seed()
    if seed is None:
        seed = args.seed
    result = sim.run_episode(scene, model, args.policy, args.touches, seed)
    rows = sim.suite_rows(result, timings=args.timings)
    sim.write_csv(rows, args.out)
    if args.grid_out:
        voxel.write_grid(result.final_grid, args.grid_out)
        result.grid_path = args.grid_out
    print(f"episode {scene.name}/{args.policy}: cd_sum "
          f"{result.steps[0].cd_sum:.3f} -> {result.steps[-1].cd_sum:.3f} "
          f"over {args.touches} touches", file=sys.stderr)
    return 0


def _suite_setup(args):
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
    scen_cfg = cfg.get("scenes", {"n": 10})
    if isinstance(scen_cfg, dict):
        scenes = sim.default_benchmark_scenes(**scen_cfg)
    else:
        scenes = [sim.scene_from_config(c) for c in scen_cfg]
    policies = cfg.get("policies", ["active", "random", "direct-edit"])
    seeds = [int(s) for s in cfg.get("seeds", [1, 2, 3])]
    if _env_seed() is not None:
        seeds = [_env_seed()]
    touches = int(cfg.get("touches", 10))
    if args.prior:
        model = prior.read_prior(args.prior)
    else:
        pr_cfg = cfg.get("prior", {})
        corpus_spec = (prior.ShapeCorpusSpec.from_dict(pr_cfg["corpus"])
                       if "corpus" in pr_cfg
                       else sim.default_corpus_spec(scenes[0].resolution))
        corpus = prior.generate_corpus(corpus_spec)
        model = prior.fit_prior(corpus, int(pr_cfg.get("dim", 200)))
    return scenes, model, policies, seeds, touches


def _cmd_suite(args) -> int:
    scenes, model, policies, seeds, touches = _suite_setup(args)
    rows = sim.run_suite(scenes, model, policies, seeds, touches,
                         jobs=args.jobs, timings=args.timings)
    sim.write_csv(rows, args.out)
    summary = sim.summarize(rows)
    for pol, entry in summary.items():
        if entry["touch_index"]:
            print(f"{pol}: median cd_sum {entry['median'][0]:.2f} -> "
                  f"{entry['median'][-1]:.2f}", file=sys.stderr)
    print(f"wrote {len(rows)} rows to {args.out}", file=sys.stderr)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from . import service
    priors = {}
    for item in args.prior:
        if "=" not in item:
            raise UsageError(f"--prior expects NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        priors[name] = prior.read_prior(path)
    app = service.create_app(priors, ui_dir=args.ui)
    uvicorn.run(app, host=args.bind, port=args.port, log_level="warning")
    return 0


def _cmd_eval(args) -> int:
    if args.csv:
        with open(args.csv) as fh:
            header = fh.readline().strip().split(",")
            rows = []
            for line in fh:
                parts = line.strip().split(",")
                row = dict(zip(header, parts))
                rows.append({"scene": row["scene"], "policy": row["policy"],
                             "seed": int(row["seed"]),
                             "touch_index": int(row["touch_index"]),
                             "cd_sum": float(row["cd_sum"]),
                             "cd_norm": float(row["cd_norm"]), "ms": row["ms"]})
        print(json.dumps(sim.summarize(rows), indent=1))
        return 0
    if not (args.pred and args.truth):
        raise UsageError("eval needs either --csv or --pred and --truth")
    pred = voxel.read_grid(args.pred)
    truth = voxel.read_grid(args.truth)
    a = voxel.extract_surface(pred, args.threshold)
    b = voxel.extract_surface(truth, args.threshold)
    cd_sum, cd_norm = voxel.chamfer_pair(a, b)
    print(json.dumps({"cd_sum": cd_sum, "cd_norm": cd_norm}))
    return 0


_COMMANDS = {
    "gen-corpus": _cmd_gen_corpus,
    "train-prior": _cmd_train_prior,
    "calibrate": _cmd_calibrate,
    "run": _cmd_run,
    "suite": _cmd_suite,
    "serve": _cmd_serve,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:   # --help and friends
        return 0 if exc.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (TactoformError, OSError, json.JSONDecodeError, KeyError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
