"""Ring wall width (FWHM) before and after reconstruction, for a few fringe frequencies."""

import argparse

import numpy as np

from sldf.evaluation import RingTargetSpec, edge_fwhm, gen_ring, profile
from sldf.imagecore import Grid
from sldf.optics import OpticsConfig, simulate_stack
from sldf.patterns import PatternSpec, make_pattern_set
from sldf.recon import run_reconstruction


def wall_width(img, radius):
    widths = []
    for ang in np.deg2rad(np.arange(0, 360, 45)):
        prof = profile(img, (0.0, 0.0), (1.5 * radius * np.cos(ang), 1.5 * radius * np.sin(ang)), 1201)
        widths.append(edge_fwhm(prof, mode="peak", window=(radius - 1.5, radius + 1.5)))
    return float(np.mean(widths))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--radius", type=float, default=8.0)
    ap.add_argument("--p", default="0.5,0.7,0.9", help="fringe frequencies as multiples of rho_c")
    args = ap.parse_args()

    cfg = OpticsConfig()
    rc = cfg.cutoff
    grid = Grid(512, 512, 1 / (7 * rc))
    sample = gen_ring(RingTargetSpec(args.radius, 2 * grid.pixel_pitch), grid)
    for p in (float(v) for v in args.p.split(",")):
        spec = PatternSpec.for_sample_frequency(p * rc)
        res = run_reconstruction(simulate_stack(sample, make_pattern_set(spec, grid), cfg))
        conv, rec = wall_width(res.conventional, args.radius), wall_width(res.enhanced, args.radius)
        print(f"p = {p:.2f} rho_c: FWHM {conv:.3f} um -> {rec:.3f} um (ratio {rec / conv:.2f})")


if __name__ == "__main__":
    main()
