#!/usr/bin/env python3
"""Train the default eigenshape prior (250 shapes at 64^3, 200 latent dims)
and write it next to this script as default_prior.spr."""

import argparse
import pathlib
import time

from tactoform import prior, sim


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).parent
                                         / "default_prior.spr"))
    ap.add_argument("--dim", type=int, default=200)
    ap.add_argument("--resolution", type=int, default=64)
    ap.add_argument("--count-per-family", type=int, default=50)
    args = ap.parse_args()

    spec = sim.default_corpus_spec(args.resolution)
    spec.count_per_family = args.count_per_family
    t0 = time.perf_counter()
    corpus = prior.generate_corpus(spec)
    print(f"generated {len(corpus)} shapes in {time.perf_counter() - t0:.1f}s")
    t0 = time.perf_counter()
    model = prior.fit_prior(corpus, args.dim)
    print(f"fit rank {model.rank}/{args.dim} in {time.perf_counter() - t0:.1f}s")
    prior.write_prior(model, args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
