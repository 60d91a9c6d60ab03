"""In-focus signal fraction of sectioned vs conventional images as the second plane moves out of focus."""

import argparse

import numpy as np

from sldf.evaluation import RingTargetSpec, gen_ring, gen_two_plane
from sldf.imagecore import Grid
from sldf.optics import OpticsConfig, illumination_attenuation, simulate_stack
from sldf.patterns import PatternSpec, make_pattern_set
from sldf.sectioning import section_stack


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dz", default="0.5,1,2,3,5", help="defocus of the second plane, um")
    ap.add_argument("--amplitude", type=float, default=1.0, help="out-of-focus disk brightness")
    args = ap.parse_args()

    cfg = OpticsConfig()
    rc = cfg.cutoff
    p = 0.9 * rc
    grid = Grid(512, 512, 1 / (7 * rc))
    x, y = grid.coords()
    ring = gen_ring(RingTargetSpec(4.0, 0.4, center=(-10.0, 0.0)), grid).planes[0][0]
    disk = ring.with_data(args.amplitude * (np.hypot(x - 10.0, y) < 6.0))
    mask = np.abs(np.hypot(x + 10.0, y) - 4.0) < 1.7
    spec = PatternSpec.for_sample_frequency(p)
    patterns = make_pattern_set(spec, grid)
    print(f"{'dz um':>6} {'fringe gain':>12} {'conventional':>13} {'sectioned':>10} {'gain':>6}")
    for dz in (float(v) for v in args.dz.split(",")):
        stack = simulate_stack(gen_two_plane(ring, disk, dz), patterns, cfg)
        conv = stack.conventional().data
        sec = section_stack(stack).image.data
        fc, fs = conv[mask].sum() / conv.sum(), sec[mask].sum() / sec.sum()
        gain = float(illumination_attenuation(cfg, np.array([p]), dz)[0])
        print(f"{dz:>6.2f} {gain:>12.3f} {fc:>13.3f} {fs:>10.3f} {fs / fc:>6.1f}")


if __name__ == "__main__":
    main()
