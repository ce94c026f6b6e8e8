#!/usr/bin/env python3
"""Run the ablation benchmark (10 scenes x 3 policies x 3 seeds, 10 touches)
and print per-policy median curves. Equivalent to `tactoform suite` with the
built-in defaults, kept as a script for interactive tweaking."""

import argparse
import time

import numpy as np

from tactoform import prior, sim


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="benchmark.csv")
    ap.add_argument("--scenes", type=int, default=10)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--touches", type=int, default=10)
    ap.add_argument("--dim", type=int, default=200)
    ap.add_argument("--prior", help="reuse an existing .spr instead of fitting")
    args = ap.parse_args()

    if args.prior:
        model = prior.read_prior(args.prior)
    else:
        corpus = prior.generate_corpus(sim.default_corpus_spec())
        model = prior.fit_prior(corpus, args.dim)
        del corpus
    scenes = sim.default_benchmark_scenes(n=args.scenes)
    t0 = time.perf_counter()
    rows = sim.run_suite(scenes, model, ["active", "random", "direct-edit"],
                         args.seeds, touches=args.touches)
    print(f"suite finished in {(time.perf_counter() - t0) / 60:.1f} min")
    sim.write_csv(rows, args.out)
    print(f"wrote {args.out}")

    summary = sim.summarize(rows)
    for pol, entry in summary.items():
        meds = entry["median"]
        print(f"{pol:12s} median cd_sum: " +
              " ".join(f"{m:8.1f}" for m in meds))
    finals = {p: np.median([r["cd_sum"] for r in rows
                            if r["policy"] == p
                            and r["touch_index"] == args.touches])
              for p in ("active", "random", "direct-edit")}
    print("orderings:",
          "active<random", finals["active"] < finals["random"], "|",
          "active<direct-edit", finals["active"] < finals["direct-edit"])


if __name__ == "__main__":
    main()
