#!/usr/bin/env python3
"""Calibrate the simulated sensor, press a ball into it, and write the
rendered image plus the reconstructed height map for eyeballing."""

import argparse

import numpy as np

from tactoform import tactile


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--radius", type=float, default=4.0)
    ap.add_argument("--depth", type=float, default=1.2)
    ap.add_argument("--presses", type=int, default=50)
    ap.add_argument("--prefix", default="press")
    args = ap.parse_args()

    spec = tactile.SensorSpec()
    lut = tactile.calibrate_lut(spec, args.radius, args.presses, rng_seed=1234)
    print(f"{args.presses} presses, {lut.occupied_fraction:.1%} bins occupied")

    heights, gx, gy, contact = tactile.sphere_press(spec, args.radius,
                                                    args.depth)
    frame = tactile.sense(heights, spec, lut)
    rmse = np.sqrt(np.mean((frame.height - heights) ** 2))
    print(f"round-trip height rmse {rmse:.4f} mm "
          f"({rmse / heights.max():.2%} of relief)")

    tactile.write_ppm(f"{args.prefix}_intensity.ppm", frame.intensity)
    tactile.write_pgm16(f"{args.prefix}_height.pgm", frame.height)
    tactile.write_pgm16(f"{args.prefix}_height_true.pgm", heights)
    print(f"wrote {args.prefix}_intensity.ppm, {args.prefix}_height.pgm, "
          f"{args.prefix}_height_true.pgm")


if __name__ == "__main__":
    main()
