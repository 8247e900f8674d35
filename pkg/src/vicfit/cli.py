"""Command-line entry point.

Subcommands tie the pipeline together: ``fit`` (trace, bootstrap, correlate,
optionally detect the fiber end and refit), ``synth`` (render a scene JSON),
``oracle`` (cantilever equilibrium to CSV), ``unwrap`` (resample a fitted
beam and report the asymmetry), and ``sweep-order`` (refit over a range of
series orders, each warm-started from the previous one).

Exit codes: 0 ok, 2 I/O error, 3 configuration error, 4 numeric failure.
Failures print a machine-readable JSON object {"error", "message"}.
All outputs are deterministic for identical inputs.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bootstrap, correlation, length_detect
from .basis import make_basis
from .beam_oracle import CantileverSpec, rescale_to_pixels, solve_elastica
from .errors import (ConfigError, DegenerateImage, DomainError, InitRankError,
                     IoError, MeshTooLarge, OrderTooHigh, VicError)
from .geometry import ShapeParams, mean_line, mean_line_to_csv
from .image import load, unwrap, write_png
from .synth import render
from .virtual_beam import build_mesh

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4

_CONFIG_ERRORS = (ConfigError, OrderTooHigh, MeshTooLarge, DomainError)
_IO_ERRORS = (IoError, DegenerateImage, OSError)

FIT_CONFIG_DEFAULTS = {
    "basis": "legendre",
    "order": 3,
    "half_width": 5.0,
    "refine": 3.0,
    "seed": None,
    "seed_angle_deg": 0.0,
    "segment_length": None,     # default: 4 * half_width
    "max_segments": 200,
    "trace_half_width": None,   # default: half_width
    "freeze": [],
    "polarity": "bright",
    "backtracking": True,
    "rel_tol": 1e-6,
    "max_iters": 100,
    "detect_end": False,
    "length": None,
}


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema_version {version}")
    return data


def _dump_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_fit_config(path: str | None, args) -> dict:
    cfg = dict(FIT_CONFIG_DEFAULTS)
    if path:
        data = _read_json(path)
        data.pop("schema_version", None)
        unknown = set(data) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg.update(data)
    # flag overrides
    if args.basis is not None:
        cfg["basis"] = args.basis
    if args.order is not None:
        cfg["order"] = args.order
    if args.half_width is not None:
        cfg["half_width"] = args.half_width
    if args.refine is not None:
        cfg["refine"] = args.refine
    if args.seed is not None:
        cfg["seed"] = [float(v) for v in args.seed.split(",")]
    if args.seed_angle is not None:
        cfg["seed_angle_deg"] = args.seed_angle
    if args.segment_length is not None:
        cfg["segment_length"] = args.segment_length
    if args.freeze:
        cfg["freeze"] = list(args.freeze)
    if args.polarity is not None:
        cfg["polarity"] = args.polarity
    if args.no_backtracking:
        cfg["backtracking"] = False
    if args.detect_end:
        cfg["detect_end"] = True
    if args.length is not None:
        cfg["length"] = args.length

    if cfg["seed"] is None or len(cfg["seed"]) != 2:
        raise ConfigError("a seed point is required: --seed x,y or config 'seed'")
    if cfg["segment_length"] is None:
        cfg["segment_length"] = 4.0 * cfg["half_width"]
    if cfg["trace_half_width"] is None:
        cfg["trace_half_width"] = cfg["half_width"]
    if not isinstance(cfg["order"], int) or cfg["order"] < 0:
        raise ConfigError(f"order must be a non-negative integer, got {cfg['order']}")
    return cfg


def _frozen_mask(names, params: ShapeParams) -> np.ndarray | None:
    if not names:
        return None
    valid = params.param_names()
    mask = np.zeros(params.n_params, dtype=bool)
    for name in names:
        if name not in valid:
            raise ConfigError(f"unknown parameter to freeze: {name!r} (use {valid})")
        mask[valid.index(name)] = True
    return mask


def _report_dict(report: correlation.FitReport, basename: dict) -> dict:
    p = report.params
    out = {
        "schema_version": SCHEMA_VERSION,
        "params": {
            "x0": [p.x0[0], p.x0[1]],
            "theta0": p.theta0,
            "A": list(p.A),
            "L": p.L,
        },
        "phi_history": list(report.phi_history),
        "iterations": report.iterations,
        "converged": report.converged,
        "condition_estimate": report.condition_estimate,
        "step_norms": list(report.step_norms),
        "failure": report.failure,
    }
    out.update(basename)
    return out


def _params_from_report(data: dict) -> tuple[ShapeParams, str, int, float, float]:
    try:
        pp = data["params"]
        p = ShapeParams(x0=pp["x0"], theta0=pp["theta0"], A=pp["A"], L=pp["L"])
        return (p, data["basis"], data["order"],
                data["half_width"], data.get("refine", 3.0))
    except KeyError as exc:
        raise ConfigError(f"report JSON missing field {exc}") from exc


def _overlay_png(path, raster, line) -> None:
    """Input image with the identified mean line drawn in white."""
    from PIL import Image as PILImage

    rgb = np.repeat(np.round(raster.f * 255).astype(np.uint8)[:, :, None], 3, axis=2)
    dense = np.linspace(0.0, 1.0, 4 * len(line.s))
    idx = np.minimum((dense * (len(line.s) - 1)).astype(int), len(line.s) - 1)
    pts = np.round(line.x[idx]).astype(int)
    ok = ((pts[:, 0] >= 0) & (pts[:, 0] < raster.width)
          & (pts[:, 1] >= 0) & (pts[:, 1] < raster.height))
    pts = pts[ok]
    rgb[pts[:, 1], pts[:, 0]] = 255
    PILImage.fromarray(rgb, mode="RGB").save(path)


def _bootstrap_params(poly, basis, cfg) -> ShapeParams:
    """Series bootstrap at the highest stable order the trace supports.

    The square system can be singular for the Fourier family (the midpoint
    stations are symmetric about the middle), so the order backs off until
    the solve succeeds.
    """
    order0 = min(cfg["order"], len(poly.angles) - 2)
    if order0 < 0:
        raise ConfigError(
            f"trace produced {len(poly.angles)} segments; not enough to start"
        )
    while True:
        try:
            p0 = bootstrap.fit_series(poly, basis, order0)
            break
        except InitRankError:
            order0 -= 1
            if order0 < 0:
                raise
    if cfg["length"] is not None:
        p0 = bootstrap.reparameterize(p0, basis, float(cfg["length"]))
    return p0


def _run_fit_pipeline(image_path: str, cfg: dict):
    """load -> trace -> series bootstrap -> fit [-> end detect -> refit]."""
    raster = load(image_path, cfg["polarity"])
    basis = make_basis(cfg["basis"], cfg["order"])
    poly = bootstrap.trace(
        raster, cfg["seed"], np.deg2rad(cfg["seed_angle_deg"]),
        cfg["segment_length"], cfg["max_segments"],
        R=cfg["trace_half_width"], refine=cfg["refine"],
    )
    p0 = _bootstrap_params(poly, basis, cfg)

    beam = build_mesh(p0.L, cfg["half_width"], cfg["refine"])
    opts = correlation.FitOptions(
        max_iters=cfg["max_iters"], rel_tol=cfg["rel_tol"],
        frozen=_frozen_mask(cfg["freeze"], p0),
        backtracking=cfg["backtracking"], refine=cfg["refine"],
    )
    report = correlation.fit(raster, p0, basis, beam, opts)

    detected_end = None
    profile = None
    if cfg["detect_end"] and report.failure is None:
        profile = length_detect.phi_profile(raster, report.params, basis, beam)
        detected_end = length_detect.detect_end(profile, beam.R)
        if detected_end is not None:
            p1 = bootstrap.reparameterize(report.params, basis, detected_end)
            beam = build_mesh(p1.L, cfg["half_width"], cfg["refine"])
            report = correlation.fit(raster, p1, basis, beam, opts)

    meta = {
        "basis": cfg["basis"], "order": cfg["order"],
        "half_width": cfg["half_width"], "refine": cfg["refine"],
        "detected_end": detected_end,
    }
    return raster, basis, beam, poly, report, meta, profile


def cmd_fit(args) -> int:
    cfg = _load_fit_config(args.config, args)
    prefix = args.out_prefix
    raster, basis, beam, poly, report, meta, profile = \
        _run_fit_pipeline(args.image, cfg)
    _dump_json(f"{prefix}_report.json", _report_dict(report, meta))
    line = mean_line(report.params, basis, beam.n_s)
    mean_line_to_csv(f"{prefix}_meanline.csv", line)
    poly.to_csv(f"{prefix}_trace.csv")
    _overlay_png(f"{prefix}_overlay.png", raster, line)
    if profile is not None:
        profile.to_csv(f"{prefix}_phiprofile.csv")
    if report.failure is not None:
        print(json.dumps({"error": report.failure,
                          "message": report.failure_detail or ""}))
        return EXIT_NUMERIC
    print(json.dumps({"converged": report.converged,
                      "iterations": report.iterations,
                      "phi": report.phi_history[-1]}, sort_keys=True))
    return EXIT_OK


def cmd_synth(args) -> int:
    scene = _read_json(args.scene)
    try:
        basis = make_basis(scene.get("basis", "legendre"), scene.get("order", 0))
        pp = scene["params"]
        p = ShapeParams(x0=pp["x0"], theta0=pp["theta0"], A=pp["A"], L=pp["L"])
        raster = render(
            p, basis,
            fiber_half_width=scene["fiber_half_width"],
            profile=scene.get("profile", "gaussian"),
            image_size=tuple(scene["image_size"]),
            background=scene.get("background", 0.0),
            noise_sigma=scene.get("noise_sigma", 0.0),
            rng_seed=scene.get("rng_seed", 0),
        )
    except KeyError as exc:
        raise ConfigError(f"scene JSON missing field {exc}") from exc
    write_png(args.out, raster.f)
    print(json.dumps({"written": args.out, "size": [raster.width, raster.height]},
                     sort_keys=True))
    return EXIT_OK


def cmd_oracle(args) -> int:
    data = _read_json(args.spec)
    try:
        spec = CantileverSpec(
            length=data["length"], radius=data["radius"],
            young_modulus=data["young_modulus"], density=data["density"],
            gravity=data.get("gravity", 9.81),
            n_nodes=data.get("n_nodes", 2001),
        )
    except KeyError as exc:
        raise ConfigError(f"oracle spec missing field {exc}") from exc
    shape = solve_elastica(spec)
    if args.px_per_meter is not None:
        origin = [float(v) for v in args.origin.split(",")] if args.origin else (0.0, 0.0)
        shape = rescale_to_pixels(shape, args.px_per_meter, origin)
    shape.to_csv(args.out)
    print(json.dumps({"written": args.out, "tip": list(shape.x[-1])}, sort_keys=True))
    return EXIT_OK


def cmd_unwrap(args) -> int:
    data = _read_json(args.report)
    p, family, order, half_width, refine = _params_from_report(data)
    raster = load(args.image, data.get("polarity", "bright"))
    basis = make_basis(family, order)
    beam = build_mesh(p.L, half_width, refine)
    result = unwrap(raster, p, basis, beam)
    write_png(args.out, result.strip.T)  # r vertical, s horizontal
    print(json.dumps({"asymmetry": result.asymmetry, "written": args.out},
                     sort_keys=True))
    return EXIT_OK


def cmd_sweep_order(args) -> int:
    cfg = _load_fit_config(args.config, args)
    if args.n_min < 0 or args.n_max < args.n_min:
        raise ConfigError(f"bad order range {args.n_min}..{args.n_max}")
    raster = load(args.image, cfg["polarity"])
    poly = bootstrap.trace(
        raster, cfg["seed"], np.deg2rad(cfg["seed_angle_deg"]),
        cfg["segment_length"], cfg["max_segments"],
        R=cfg["trace_half_width"], refine=cfg["refine"],
    )
    rows = []
    prev = None
    for order in range(args.n_min, args.n_max + 1):
        basis = make_basis(cfg["basis"], order)
        if prev is None:
            p0 = _bootstrap_params(poly, basis, {**cfg, "order": order})
        else:
            A = np.zeros(order + 1)
            A[: len(prev.A)] = prev.A
            p0 = ShapeParams(x0=prev.x0.copy(), theta0=prev.theta0, A=A, L=prev.L)
        beam = build_mesh(p0.L, cfg["half_width"], cfg["refine"])
        opts = correlation.FitOptions(
            max_iters=cfg["max_iters"], rel_tol=cfg["rel_tol"],
            frozen=_frozen_mask(cfg["freeze"], p0),
            backtracking=cfg["backtracking"], refine=cfg["refine"],
        )
        report = correlation.fit(raster, p0, basis, beam, opts)
        rows.append((order, report.phi_history[-1], report.converged,
                     report.condition_estimate, report.failure or ""))
        if report.failure == "IllConditioned":
            break
        if report.failure is None:
            prev = report.params
    with open(args.out, "w") as fh:
        fh.write("N,phi_final,converged,condition,failure\n")
        for order, phi_v, conv, cond, failure in rows:
            fh.write(f"{order},{phi_v:.9g},{int(conv)},{cond:.6g},{failure}\n")
    print(json.dumps({"written": args.out, "orders": len(rows)}, sort_keys=True))
    return EXIT_OK


def _add_fit_flags(sp) -> None:
    sp.add_argument("--config", help="fit configuration JSON")
    sp.add_argument("--basis", choices=["legendre", "fourier"])
    sp.add_argument("--order", type=int)
    sp.add_argument("--half-width", dest="half_width", type=float,
                    help="virtual beam half-width R in pixels")
    sp.add_argument("--refine", type=float, help="mesh nodes per pixel (default 3)")
    sp.add_argument("--seed", help="seed point 'x,y' on the fiber")
    sp.add_argument("--seed-angle", dest="seed_angle", type=float,
                    help="initial direction in degrees")
    sp.add_argument("--segment-length", dest="segment_length", type=float)
    sp.add_argument("--freeze", action="append", default=None,
                    metavar="NAME", help="freeze a parameter (e.g. x0_1)")
    sp.add_argument("--polarity", choices=["bright", "dark"])
    sp.add_argument("--no-backtracking", action="store_true")
    sp.add_argument("--detect-end", action="store_true")
    sp.add_argument("--length", type=float, help="override the traced beam length")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vicfit",
                                 description="Fiber centerline identification "
                                             "by virtual image correlation")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="identify a fiber in an image")
    sp.add_argument("image")
    _add_fit_flags(sp)
    sp.add_argument("--out-prefix", default="vicfit", help="output file prefix")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("synth", help="render a synthetic fiber scene")
    sp.add_argument("scene", help="scene JSON")
    sp.add_argument("--out", default="synth.png")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("oracle", help="cantilever equilibrium shape to CSV")
    sp.add_argument("spec", help="cantilever spec JSON (SI units)")
    sp.add_argument("--out", default="oracle.csv")
    sp.add_argument("--px-per-meter", dest="px_per_meter", type=float)
    sp.add_argument("--origin", help="pixel origin 'x,y' for rescaling")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("unwrap", help="resample the image in beam coordinates")
    sp.add_argument("image")
    sp.add_argument("report", help="fit report JSON")
    sp.add_argument("--out", default="unwrap.png")
    sp.set_defaults(func=cmd_unwrap)

    sp = sub.add_parser("sweep-order", help="refit over a range of series orders")
    sp.add_argument("image")
    _add_fit_flags(sp)
    sp.add_argument("--n-min", type=int, default=1)
    sp.add_argument("--n-max", type=int, default=8)
    sp.add_argument("--out", default="sweep.csv")
    sp.set_defaults(func=cmd_sweep_order)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return EXIT_CONFIG
    except _IO_ERRORS as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return EXIT_IO
    except VicError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
