"""Command-line interface.

    sensorcal simulate   --preset canon400d-approx --out DIR
    sensorcal analyze    --dark DIR/dark/manifest.json --flat ... --sweep ... --out OUT
    sensorcal sve calibrate   --flat SWEEP_MANIFEST --dark DARK_MANIFEST --out cal.json
    sensorcal sve reconstruct --calibration cal.json --frame scene.pgm --out OUT
    sensorcal report     --input OUT/report.json --format csv

Exit codes: 0 success, 1 analysis failure, 2 usage or input error.
``SENSORCAL_OUTPUT_DIR`` sets the default output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import noise, radiometry, report, sve, synthetic
from .frame_io import (
    FrameFormatError,
    Roi,
    StackInconsistencyError,
    load_frame,
    load_stack,
    write_float_image,
    write_frame,
    write_pgm,
    write_stack,
)
from .svgplot import Plot

log = logging.getLogger("sensorcal")

OUTPUT_ENV = "SENSORCAL_OUTPUT_DIR"


class UsageError(Exception):
    pass


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _fraction(text: str) -> float:
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {text}")
    return v


def _roi(text: str) -> Roi:
    try:
        return Roi.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUTPUT_ENV)
    if not out:
        raise UsageError(f"no output directory: pass --out or set {OUTPUT_ENV}")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------
def cmd_simulate(args) -> int:
    if args.model:
        if not Path(args.model).exists():
            raise UsageError(f"model file not found: {args.model}")
        try:
            model = synthetic.SensorModel.load(args.model)
        except (ValueError, TypeError, KeyError, json.JSONDecodeError) as exc:
            raise UsageError(f"invalid sensor model {args.model}: {exc}") from None
    else:
        try:
            model = synthetic.preset(args.preset)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
    if args.seed is not None:
        model = replace(model, rng_seed=args.seed)
    out = _out_dir(args)
    model.save(out / "model.json")
    meta = {"model": model.to_dict(), "rng": synthetic.RNG_ALGORITHM}
    written = []
    if args.dark_frames:
        stack = synthetic.simulate_stack(model, [0.0], args.dark_frames, "dark", seed_base=0)
        written.append(write_stack(out / "dark", stack, "dark", extra={"blo_hint": model.blo, **meta}))
    if args.flat_frames:
        e = args.flat_exposure or synthetic.default_flat_exposure(model)
        stack = synthetic.simulate_stack(model, [e], args.flat_frames, "flat", seed_base=100_000)
        written.append(write_stack(out / "flat", stack, "flat", extra=meta))
    if args.sweep_exposures:
        exposures = synthetic.default_sweep(model, args.sweep_exposures)
        stack = synthetic.simulate_stack(model, exposures, args.sweep_frames, "flat", seed_base=200_000)
        written.append(write_stack(out / "sweep", stack, "sweep", extra=meta))
    if args.scene == "ramp":
        peak = args.ramp_peak * synthetic.saturation_exposure(model)
        ramp = sve.ramp_exposure(model.width, model.height, peak)
        frame = synthetic.simulate_frame(model, ramp, seed_offset=300_000)
        scene = out / "scene"
        scene.mkdir(exist_ok=True)
        write_frame(scene / "ramp.pgm", frame)
        write_float_image(scene / "truth.f32", model.gain * ramp,
                          {"unit": "DN on the most sensitive channel's linear scale"})
        written.append(scene / "ramp.pgm")
    for p in written:
        print(p)
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------
def _load(path, what: str):
    if not path:
        return None
    if not Path(path).exists():
        raise UsageError(f"{what} manifest not found: {path}")
    return load_stack(path)


def _curve_plot(curve, fit, dr) -> Plot:
    p = Plot(title=f"Radiometric function, channel {curve.channel}",
             xlabel="relative exposure", ylabel="mean signal, DN", logx=True)
    p.scatter(curve.exposures, curve.means, "measured mean")
    if fit is not None:
        xs = np.geomspace(curve.exposures[0], max(fit.linear_end_exposure, curve.exposures[0] * 1.01), 50)
        p.line(xs, fit.predict(xs), "linear fit")
    if dr is not None:
        p.scatter([dr.min_signal_exposure, dr.linear_end_exposure, dr.max_signal_exposure],
                  [dr.min_signal_dn, dr.linear_end_dn, dr.max_signal_dn], "range endpoints")
    return p


def _noise_plot(curve, snr_threshold: float) -> Plot:
    p = Plot(title=f"Noise versus signal, channel {curve.channel}",
             xlabel="mean signal, DN", ylabel="noise (std), DN", logx=True, logy=True)
    keep = curve.means > 0
    p.scatter(curve.means[keep], curve.stds[keep], "measured")
    if keep.any():
        xs = np.geomspace(curve.means[keep].min(), curve.means[keep].max(), 20)
        p.line(xs, xs / snr_threshold, f"SNR = {snr_threshold:g}")
    return p


def cmd_analyze(args) -> int:
    if not args.dark:
        raise UsageError("analyze needs a dark stack (--dark MANIFEST)")
    if not (args.flat or args.sweep):
        raise UsageError("analyze needs a flat stack (--flat) and/or an exposure sweep (--sweep)")
    dark = _load(args.dark, "dark")
    flat = _load(args.flat, "flat")
    sweep = _load(args.sweep, "sweep")
    if dark.kind != "dark":
        raise UsageError(f"--dark manifest holds a {dark.kind} stack")
    for name, st in (("flat", flat), ("sweep", sweep)):
        if st is not None and st.kind != "flat":
            raise UsageError(f"--{name} manifest holds a {st.kind} stack")
    out = _out_dir(args)
    h, w = dark.shape

    blo = args.blo if args.blo is not None else radiometry.estimate_blo(dark)
    config = {
        "dark": str(args.dark), "flat": args.flat and str(args.flat), "sweep": args.sweep and str(args.sweep),
        "channel": args.channel, "snr_threshold": args.snr_threshold,
        "linearity_tolerance": args.linearity_tol, "plateau_tolerance": args.plateau_tol,
        "roi": list((args.roi or noise.default_dark_roi(w, h)).as_tuple()),
        "light_roi": list((args.light_roi or noise.default_light_roi(w, h)).as_tuple()),
    }
    if flat is not None and len(flat.groups) != 1:
        raise UsageError("--flat must hold a single exposure; pass multi-exposure stacks with --sweep")
    nrep = noise.noise_report(dark, flat, dark_roi=args.roi, light_roi=args.light_roi)

    curve = fit = dr = None
    failure = None
    if sweep is not None:
        roi = args.roi or Roi.centered(w, h, 64)
        curve = radiometry.response_curve(sweep, roi, args.channel, blo)
        try:
            fit = radiometry.fit_linear_region(curve, args.linearity_tol, args.plateau_tol)
            dr = radiometry.dynamic_range(curve, args.snr_threshold, args.linearity_tol, args.plateau_tol)
        except radiometry.RadiometryError as exc:
            failure = str(exc)
    extra = {"analysis_error": failure} if failure else None
    doc = report.build_report(config, blo=blo, noise=nrep, curve=curve, linear_fit=fit,
                              dynamic_range=dr, timestamp=not args.no_timestamp, extra=extra)
    suffix = "json" if args.format == "json" else "csv"
    (out / f"report.{suffix}").write_text(report.render(doc, args.format), encoding="utf-8")
    if curve is not None:
        _curve_plot(curve, fit, dr).save(out / "radiometric_curve.svg")
        _noise_plot(curve, args.snr_threshold).save(out / "noise_vs_signal.svg")
    print(report.to_text({k: doc[k] for k in ("blo", "noise", "dynamic_range") if k in doc}), end="")
    if failure:
        print(f"analysis failed: {failure}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# sve
# ---------------------------------------------------------------------------
def _calibrate(args) -> sve.SveCalibration:
    flat = _load(args.flat, "flat")
    if flat.kind != "flat":
        raise UsageError(f"--flat manifest holds a {flat.kind} stack")
    if args.blo is not None:
        blo = args.blo
    elif args.dark:
        blo = radiometry.estimate_blo(_load(args.dark, "dark"))
    else:
        raise UsageError("calibration needs --dark MANIFEST or --blo DN")
    return sve.calibrate_exposure_ratios(
        flat, blo, roi=args.roi, wavelength_tag=args.wavelength_tag,
        linearity_tolerance=args.linearity_tol, saturation_fraction=args.sat_fraction)


def cmd_sve_calibrate(args) -> int:
    cal = _calibrate(args)
    target = Path(args.out) if args.out else None
    if target is None or target.suffix != ".json":
        target = _out_dir(args) / "sve_calibration.json"
    else:
        target.parent.mkdir(parents=True, exist_ok=True)
    cal.save(target)
    print(f"channel order {cal.channel_order}, ratios "
          + ", ".join(f"{r:.4f}" for r in cal.exposure_ratios)
          + f", q={cal.q}, Q={cal.quantization_levels()}")
    print(target)
    return 0


def cmd_sve_reconstruct(args) -> int:
    if args.calibration:
        if not Path(args.calibration).exists():
            raise UsageError(f"calibration file not found: {args.calibration}")
        cal = sve.SveCalibration.load(args.calibration)
    elif args.flat:
        cal = _calibrate(args)
    else:
        raise UsageError("reconstruct needs --calibration FILE or --flat MANIFEST")
    if not Path(args.frame).exists():
        raise UsageError(f"scene frame not found: {args.frame}")
    frame = load_frame(args.frame)
    blo = cal.blo if args.blo is None else args.blo
    out = _out_dir(args)
    hdr = sve.reconstruct(frame, cal, blo=blo)
    meta = dict(hdr.metadata, blo=float(blo), source=str(args.frame),
                wavelength_tag=cal.wavelength_tag)
    write_float_image(out / "hdr.f32", hdr.data, meta)
    finite = np.isfinite(hdr.data)
    peak = float(hdr.data[finite].max()) if finite.any() else 0.0
    preview = np.zeros(hdr.data.shape)
    if peak > 0:
        preview[finite] = np.clip(hdr.data[finite] / peak, 0, 1) * 65535
    write_pgm(out / "preview.pgm", np.rint(preview).astype(np.uint16))
    write_pgm(out / "validity.pgm", hdr.validity, maxval=255)
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"Q={meta['quantization_levels']} measured={meta['measured_fraction']:.4f} "
          f"reconstructed={meta['reconstructed_fraction']:.4f} "
          f"unrecoverable={meta['unrecoverable_fraction']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------
def cmd_report(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise UsageError(f"report not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    text = report.render(doc, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
def _add_thresholds(p):
    p.add_argument("--roi", type=_roi, help="analysis ROI as X,Y,W,H (default: centered 64x64)")
    p.add_argument("--snr-threshold", type=_positive, default=radiometry.DEFAULT_SNR_THRESHOLD)
    p.add_argument("--linearity-tol", type=_positive, default=radiometry.DEFAULT_LINEARITY_TOLERANCE)
    p.add_argument("--sat-fraction", type=_fraction, default=sve.DEFAULT_SATURATION_FRACTION)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensorcal", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write synthetic dark/flat/sweep stacks from a sensor model")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", default="canon400d-approx", choices=sorted(synthetic.PRESETS))
    src.add_argument("--model", help="sensor model JSON file")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV})")
    p.add_argument("--seed", type=int, help="override the model's rng_seed")
    p.add_argument("--dark-frames", type=int, default=64)
    p.add_argument("--flat-frames", type=int, default=64)
    p.add_argument("--flat-exposure", type=_positive, help="relative exposure of the flat stack")
    p.add_argument("--sweep-exposures", type=int, default=20)
    p.add_argument("--sweep-frames", type=int, default=1)
    p.add_argument("--scene", choices=["none", "ramp"], default="none")
    p.add_argument("--ramp-peak", type=_positive, default=3.0,
                   help="ramp peak in multiples of the saturation exposure")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="noise and dynamic-range report from dark/flat/sweep stacks")
    p.add_argument("--dark", help="dark stack manifest")
    p.add_argument("--flat", help="single-exposure flat stack manifest (noise, PRNU)")
    p.add_argument("--sweep", help="multi-exposure flat stack manifest (radiometry)")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV})")
    p.add_argument("--channel", default="B", choices=["R", "G1", "G2", "B", "G"])
    p.add_argument("--light-roi", type=_roi, help="light-noise ROI (default: centered 1024x1024)")
    p.add_argument("--plateau-tol", type=_positive, default=radiometry.DEFAULT_PLATEAU_TOLERANCE)
    p.add_argument("--blo", type=float, help="black level in DN (default: estimated from --dark)")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--no-timestamp", action="store_true")
    p.add_argument("--seed", type=int, help="accepted for symmetry; analysis is deterministic")
    _add_thresholds(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sve", help="spatially varying exposure HDR")
    sve_sub = p.add_subparsers(dest="sve_command", required=True)
    for name, func, helptext in (
        ("calibrate", cmd_sve_calibrate, "measure exposure ratios and correction maps"),
        ("reconstruct", cmd_sve_reconstruct, "reconstruct a linear HDR image from one frame"),
    ):
        q = sve_sub.add_parser(name, help=helptext)
        q.add_argument("--flat", help="multi-exposure flat stack under the calibration light")
        q.add_argument("--dark", help="dark stack manifest for the black level")
        q.add_argument("--blo", type=float, help="black level in DN")
        q.add_argument("--wavelength-tag", default="", help="free-text light source label")
        q.add_argument("--out", help=f"output path (default ${OUTPUT_ENV})")
        _add_thresholds(q)
        if name == "reconstruct":
            q.add_argument("--calibration", help="calibration JSON from 'sve calibrate'")
            q.add_argument("--frame", required=True, help="scene frame (PGM)")
        q.set_defaults(func=func)

    p = sub.add_parser("report", help="re-render a JSON report")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["json", "csv", "text"], default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, FrameFormatError, StackInconsistencyError) as exc:
        print(f"sensorcal: error: {exc}", file=sys.stderr)
        return 2
    except (radiometry.RadiometryError, noise.DegenerateSignalError, sve.CalibrationError,
            sve.CalibrationMismatchError) as exc:
        print(f"sensorcal: analysis failed: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"sensorcal: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
