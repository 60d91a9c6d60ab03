"""Command-line entry point: ``sldf <command> ...``.

Exit codes: 0 success, 2 usage or configuration, 3 physics validation
(dark-field geometry, projectability), 4 processing stage failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import errors
from .evaluation import (
    BarGroup,
    BarTargetSpec,
    RingTargetSpec,
    edge_fwhm,
    effective_cutoff,
    gen_bars,
    gen_ring,
    gen_two_plane,
    michelson_contrast,
    profile,
)
from .fileio import (
    grid_dict,
    load_sample,
    load_stack,
    read_raster,
    save_sample,
    save_stack,
    write_manifest,
    write_pgm,
    write_raster,
)
from .imagecore import Grid
from .optics import ConfigError, NoiseSpec, OpticsConfig, simulate_stack
from .patterns import PAPER_FREQ_DMD, PatternSpec, make_pattern_set
from .recon import ReconParams, run_reconstruction
from .sectioning import COMBINE_MODES, section_stack

EXIT_OK, EXIT_USAGE, EXIT_PHYSICS, EXIT_STAGE = 0, 2, 3, 4

_PHYSICS = (errors.NotDarkFieldError, errors.UnprojectableError)
_STAGE_OF = {
    errors.PartialProtocolError: "protocol",
    errors.SingularPhasesError: "separation",
    errors.NoPeakError: "estimation",
    errors.SupportOverflowError: "shift",
    errors.GridMismatchError: "synthesis",
    errors.ImagResidueError: "synthesis",
}


class StageError(Exception):
    def __init__(self, stage: str, err: Exception):
        super().__init__(str(err))
        self.stage, self.err = stage, err


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text: str) -> tuple[float, float]:
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two numbers, got {text!r}")
    return vals[0], vals[1]


def _quad(text: str) -> tuple[float, ...]:
    vals = _floats(text)
    if len(vals) != 4:
        raise argparse.ArgumentTypeError(f"expected x0,y0,x1,y1, got {text!r}")
    return tuple(vals)


def _emit(out, key: str, value) -> None:
    if isinstance(value, float):
        value = f"{value:.10g}"
    print(f"{key} = {value}", file=out)


def _report_text(items: dict) -> str:
    return "".join(f"{k} = {v:.10g}\n" if isinstance(v, float) else f"{k} = {v}\n" for k, v in items.items())


# --- generate-target -----------------------------------------------------------


def _grid_from(args) -> Grid:
    return Grid(args.width or args.size, args.height or args.size, args.pitch)


def cmd_generate_target(args) -> int:
    grid = _grid_from(args)
    if args.kind == "bars":
        if not args.freqs:
            raise ConfigError("bars need --freqs")
        groups = [BarGroup(f, args.elements) for f in args.freqs]
        spec = BarTargetSpec(groups, args.orientation, args.amplitude, args.bar_length_periods)
        sample = gen_bars(spec, grid)
        target = {"kind": "bars", "frequencies": list(args.freqs), "elements": args.elements,
                  "orientation": args.orientation, "amplitude": args.amplitude,
                  "bar_length_periods": args.bar_length_periods}
    elif args.kind == "ring":
        spec = RingTargetSpec(args.radius_um, args.thickness_um, args.amplitude, tuple(args.center))
        sample = gen_ring(spec, grid)
        target = {"kind": "ring", "radius_um": args.radius_um, "thickness_um": args.thickness_um,
                  "amplitude": args.amplitude, "center_um": list(args.center)}
    else:
        if args.dz_um == 0:
            raise ConfigError("two-plane target needs --dz-um != 0")
        half = args.separation_um / 2
        ring = gen_ring(RingTargetSpec(args.radius_um, args.thickness_um, args.amplitude, (-half, 0.0)), grid)
        x, y = grid.coords()
        disk = (np.hypot(x - half, y) < args.disk_radius_um) * args.disk_amplitude
        sample = gen_two_plane(ring.planes[0][0], ring.planes[0][0].with_data(disk), args.dz_um)
        target = {"kind": "two-plane", "dz_um": args.dz_um, "ring_radius_um": args.radius_um,
                  "ring_thickness_um": args.thickness_um, "amplitude": args.amplitude,
                  "disk_radius_um": args.disk_radius_um, "disk_amplitude": args.disk_amplitude,
                  "separation_um": args.separation_um}
    save_sample(args.out, sample, target)
    print(f"wrote {args.kind} sample to {args.out}")
    return EXIT_OK


# --- simulate -----------------------------------------------------------------------


def _configs(args) -> tuple[OpticsConfig, PatternSpec]:
    base = json.loads(Path(args.config).read_text()) if args.config else {}
    od = dict(base.get("optics", {}))
    for key, val in (("na_detection", args.na_det), ("na_illumination_outer", args.na_ill_outer),
                     ("na_illumination_inner", args.na_ill_inner), ("wavelength", args.wavelength),
                     ("mode", args.mode)):
        if val is not None:
            od[key] = val
    noise = dict(od.pop("noise", {}))
    for key, val in (("seed", args.seed), ("photon_scale", args.photon_scale), ("read_noise_sigma", args.read_noise)):
        if val is not None:
            noise[key] = val
    cfg = OpticsConfig(noise=NoiseSpec(**noise), **od)

    pd = dict(base.get("pattern", {}))
    for key, val in (("orientations", args.orientations), ("phases", args.phases),
                     ("modulation", args.modulation), ("freq_dmd", args.freq_dmd),
                     ("magnification", args.magnification)):
        if val is not None:
            pd[key] = tuple(val) if isinstance(val, list) else val
    if args.fringe_freq is not None or "magnification" not in pd:
        p = args.fringe_freq if args.fringe_freq is not None else 0.9 * cfg.cutoff
        pd.pop("magnification", None)
        pd.setdefault("freq_dmd", PAPER_FREQ_DMD)
        spec = PatternSpec.for_sample_frequency(p, **pd)
    else:
        spec = PatternSpec(**pd)
    return cfg, spec


def cmd_simulate(args) -> int:
    sample = load_sample(args.sample)
    cfg, spec = _configs(args)
    patterns = make_pattern_set(spec, sample.grid)
    stack = simulate_stack(sample, patterns, cfg, boundary=args.boundary)
    save_stack(args.out, stack)
    print(f"wrote {stack.n_orientations * stack.n_phases} frames to {args.out}")
    return EXIT_OK


# --- reconstruct / section --------------------------------------------------------------


def _echo(doc: dict, kind: str, source: str, step: dict) -> dict:
    out = copy.deepcopy(doc)
    out["kind"] = kind
    out["source"] = source
    out.setdefault("processing", []).append(step)
    return out


def _load_for_processing(path):
    try:
        return load_stack(path)
    except errors.PartialProtocolError as exc:
        raise StageError("protocol", exc) from exc


def cmd_reconstruct(args) -> int:
    stack, doc = _load_for_processing(args.stack)
    params = ReconParams(args.wiener_w, args.apodization, args.params, args.upsample)
    try:
        res = run_reconstruction(stack, params)
    except errors.SLDFError as exc:
        raise StageError(_STAGE_OF.get(type(exc), "reconstruct"), exc) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_raster(out / "enhanced.raster", res.enhanced)
    write_raster(out / "conventional.raster", res.conventional)
    write_raster(out / "conventional_wiener.raster", res.conventional_wiener)
    report = res.report()
    report["enhanced_grid"] = f"{res.enhanced.width}x{res.enhanced.height}@{res.enhanced.pixel_pitch:.10g}"
    if args.pgm:
        for name, img in (("enhanced", res.enhanced), ("conventional", res.conventional)):
            lo, hi = write_pgm(out / f"{name}.pgm", img)
            report[f"{name}_pgm_min"], report[f"{name}_pgm_max"] = lo, hi
    (out / "report.txt").write_text(_report_text(report))
    step = {"step": "reconstruct", "params": params.to_dict(), "parameter_source": res.parameter_source,
            "outputs": ["enhanced.raster", "conventional.raster", "conventional_wiener.raster"],
            "enhanced_grid": grid_dict(res.enhanced.grid)}
    write_manifest(out, _echo(doc, "reconstruction", str(args.stack), step))
    sys.stdout.write(_report_text(report))
    return EXIT_OK


def cmd_section(args) -> int:
    stack, doc = _load_for_processing(args.stack)
    try:
        sec = section_stack(stack, args.combine, args.orientation)
    except IndexError as exc:
        raise ConfigError(str(exc)) from None
    except errors.SLDFError as exc:
        raise StageError(_STAGE_OF.get(type(exc), "section"), exc) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_raster(out / "sectioned.raster", sec.image)
    report = {"combine_mode": sec.combine_mode, "orientations": ",".join(map(str, sec.orientations))}
    if args.pgm:
        report["sectioned_pgm_min"], report["sectioned_pgm_max"] = write_pgm(out / "sectioned.pgm", sec.image)
    (out / "report.txt").write_text(_report_text(report))
    step = {"step": "section", "combine_mode": sec.combine_mode, "orientations": list(sec.orientations),
            "outputs": ["sectioned.raster"]}
    write_manifest(out, _echo(doc, "sectioned", str(args.stack), step))
    sys.stdout.write(_report_text(report))
    return EXIT_OK


# --- metrics ------------------------------------------------------------------------------


def _measure(img, args) -> tuple[dict, object]:
    vals, prof = {}, None
    if args.cutoff:
        vals["effective_cutoff_cyc_per_um"] = effective_cutoff(img, args.noise_floor)
        vals["noise_floor"] = args.noise_floor
    if args.profile:
        x0, y0, x1, y1 = args.profile
        prof = profile(img, (x0, y0), (x1, y1), args.n)
        if args.contrast:
            vals["michelson_contrast"] = michelson_contrast(prof)
        if args.fwhm:
            vals["fwhm_um"] = edge_fwhm(prof, args.fwhm, tuple(args.window) if args.window else None)
    return vals, prof


def cmd_metrics(args) -> int:
    if (args.contrast or args.fwhm) and not args.profile:
        raise ConfigError("--contrast and --fwhm need --profile x0,y0,x1,y1")
    if args.window and not args.fwhm:
        raise ConfigError("--window applies to --fwhm only")
    if args.compare:
        if len(args.images) != 2:
            raise ConfigError("--compare needs exactly two images")
        a, b = (read_raster(p) for p in args.images)
        va, _ = _measure(a, args)
        vb, _ = _measure(b, args)
        for key in va:
            _emit(sys.stdout, f"a.{key}", va[key])
            _emit(sys.stdout, f"b.{key}", vb[key])
            if key != "noise_floor":
                _emit(sys.stdout, f"ratio.{key}", vb[key] / va[key] if va[key] else float("inf"))
        return EXIT_OK
    if len(args.images) != 1:
        raise ConfigError("metrics takes one image (or two with --compare)")
    vals, prof = _measure(read_raster(args.images[0]), args)
    for key, val in vals.items():
        _emit(sys.stdout, key, val)
    if prof is not None:
        for pos, val in zip(prof.positions, prof.values):
            print(f"{pos:.6f} {val:.10g}")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sldf", description="Structured-light dark-field simulation and reconstruction")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-target", help="write a synthetic sample")
    g.add_argument("kind", choices=["bars", "ring", "two-plane"])
    g.add_argument("--out", required=True)
    g.add_argument("--size", type=int, default=512)
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--pitch", type=float, default=0.1, help="pixel pitch in um")
    g.add_argument("--amplitude", type=float, default=1.0)
    g.add_argument("--freqs", type=_floats, help="bar frequencies, cycles/um")
    g.add_argument("--elements", type=int, default=1)
    g.add_argument("--orientation", choices=["vertical", "horizontal", "both"], default="vertical")
    g.add_argument("--bar-length-periods", type=float, default=2.5)
    g.add_argument("--radius-um", type=float, default=8.0)
    g.add_argument("--thickness-um", type=float, default=0.4)
    g.add_argument("--center", type=_pair, default=(0.0, 0.0), help="ring center x,y in um")
    g.add_argument("--dz-um", type=float, default=3.0)
    g.add_argument("--disk-radius-um", type=float, default=4.0)
    g.add_argument("--disk-amplitude", type=float, default=1.0)
    g.add_argument("--separation-um", type=float, default=12.0)
    g.set_defaults(func=cmd_generate_target)

    s = sub.add_parser("simulate", help="render a raw fringe stack from a sample")
    s.add_argument("--sample", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="JSON file with 'optics' and/or 'pattern' sections")
    s.add_argument("--orientations", type=_floats)
    s.add_argument("--phases", type=_floats)
    s.add_argument("--modulation", type=float)
    s.add_argument("--fringe-freq", type=float, help="fringe frequency at the sample, cycles/um")
    s.add_argument("--magnification", type=float)
    s.add_argument("--freq-dmd", type=float)
    s.add_argument("--na-det", type=float)
    s.add_argument("--na-ill-outer", type=float)
    s.add_argument("--na-ill-inner", type=float)
    s.add_argument("--wavelength", type=float)
    s.add_argument("--mode", choices=["transmission", "reflectance"])
    s.add_argument("--seed", type=int)
    s.add_argument("--photon-scale", type=float)
    s.add_argument("--read-noise", type=float)
    s.add_argument("--boundary", choices=["zero", "periodic"], default="zero")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("reconstruct", help="super-resolved reconstruction of a stack")
    r.add_argument("stack")
    r.add_argument("--out", required=True)
    r.add_argument("--params", choices=["estimate", "manifest"])
    r.add_argument("--wiener-w", type=float, default=0.05)
    r.add_argument("--apodization", choices=["triangle", "raised-cosine", "none"], default="triangle")
    r.add_argument("--upsample", type=int, default=2)
    r.add_argument("--pgm", action="store_true", help="also write 16-bit PGM previews")
    r.set_defaults(func=cmd_reconstruct)

    c = sub.add_parser("section", help="optically sectioned image of a stack")
    c.add_argument("stack")
    c.add_argument("--out", required=True)
    c.add_argument("--combine", choices=COMBINE_MODES, default="mean")
    c.add_argument("--orientation", type=int)
    c.add_argument("--pgm", action="store_true")
    c.set_defaults(func=cmd_section)

    m = sub.add_parser("metrics", help="contrast, cutoff and width measurements")
    m.add_argument("images", nargs="+")
    m.add_argument("--cutoff", action="store_true")
    m.add_argument("--noise-floor", type=float, default=1e-3)
    m.add_argument("--profile", type=_quad, help="x0,y0,x1,y1 in um")
    m.add_argument("--n", type=int, default=256)
    m.add_argument("--contrast", action="store_true")
    m.add_argument("--fwhm", choices=["edge", "peak"])
    m.add_argument("--window", type=_pair, help="a,b positions along the profile for --fwhm")
    m.add_argument("--compare", action="store_true")
    m.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: stage {exc.stage} failed: {exc.err.code}: {exc.err}", file=sys.stderr)
        return EXIT_STAGE
    except _PHYSICS as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except errors.SLDFError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
