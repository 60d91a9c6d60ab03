"""Bar contrast below and beyond the detection cutoff, conventional vs reconstructed."""

import argparse
from pathlib import Path

from sldf.evaluation import BarTargetSpec, bar_layout, gen_bars, michelson_contrast, profile
from sldf.fileio import write_pgm
from sldf.imagecore import Grid
from sldf.optics import OpticsConfig, simulate_stack
from sldf.patterns import PatternSpec, make_pattern_set
from sldf.recon import run_reconstruction


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ratios", default="0.5,0.8,1.0,1.2,1.4,1.6", help="bar frequencies as multiples of rho_c")
    ap.add_argument("--p", type=float, default=0.9, help="fringe frequency as a multiple of rho_c")
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--pgm", type=Path, help="directory for PGM previews")
    args = ap.parse_args()

    cfg = OpticsConfig()
    rc = cfg.cutoff
    ratios = [float(r) for r in args.ratios.split(",")]
    grid = Grid(args.size, args.size, 1 / (max(ratios) * rc * 5))
    print(f"rho_c = {rc:.4f} cycles/um, pitch = {grid.pixel_pitch:.4f} um, p = {args.p:.2f} rho_c")
    print(f"{'freq/rho_c':>10} {'conventional':>13} {'wiener':>8} {'reconstructed':>14}")
    for r in ratios:
        spec = BarTargetSpec([(r * rc, 3)], bar_length_periods=5)
        (block,) = bar_layout(spec, grid)
        pattern = PatternSpec.for_sample_frequency(args.p * rc)
        stack = simulate_stack(gen_bars(spec, grid), make_pattern_set(pattern, grid), cfg)
        res = run_reconstruction(stack)
        p0, p1 = block.cross_section()
        vals = [michelson_contrast(profile(img, p0, p1, 256))
                for img in (res.conventional, res.conventional_wiener, res.enhanced)]
        print(f"{r:>10.2f} {vals[0]:>13.3f} {vals[1]:>8.3f} {vals[2]:>14.3f}")
        if args.pgm:
            args.pgm.mkdir(parents=True, exist_ok=True)
            write_pgm(args.pgm / f"bars_{r:.2f}_conventional.pgm", res.conventional)
            write_pgm(args.pgm / f"bars_{r:.2f}_reconstructed.pgm", res.enhanced)


if __name__ == "__main__":
    main()
