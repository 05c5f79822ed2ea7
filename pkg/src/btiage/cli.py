"""Command-line entry point.

Exit codes: 0 ok, 2 config / schema / usage error, 3 simulation domain
error, 4 fit precondition failure, 5 TTF reference never crosses.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .analysis import NoBaselineError, ambient_cdf, dit_from_subthreshold, ttf_extension, ttf_project
from .fitting import FitError, fit_dutycycle, fit_powerlaw, fit_universal_relax
from .io import (
    FIT_SCHEMAS, ConfigError, SchemaError, _grid, device_from_config, digest, ensemble_from_config,
    fmt, gen_spec_from_config, load_config, read_columns, read_trace_csv, stderr, waveform_from_config,
    write_columns, write_ensemble_csv, write_trace_csv,
)
from .trapsim import gen_ensemble, simulate

EXIT_CONFIG, EXIT_DOMAIN, EXIT_FIT, EXIT_NO_BASELINE = 2, 3, 4, 5


def _load(path, lenient):
    cfg = load_config(path, strict=not lenient)
    for w in cfg.warnings:
        stderr(f"warning: {w}")
    return cfg


def cmd_simulate(args):
    try:
        cfg = _load(args.config, args.lenient)
        for section in ("device", "waveform", "ensemble"):
            if not cfg.has(section):
                raise ConfigError(f"missing [{section}] section")
        device = device_from_config(cfg)
        ensemble = ensemble_from_config(cfg)
        temperature = cfg.get("simulate", "temperature_k", device.temperature)
        workers = cfg.get("simulate", "workers", 1)
        grid = _grid(cfg, "simulate")
    except ConfigError as e:
        stderr(f"config error: {e}")
        return EXIT_CONFIG
    except (ValueError, SchemaError) as e:
        stderr(f"config error: {e}")
        return EXIT_CONFIG
    try:
        waveform = waveform_from_config(cfg)
        trace = simulate(ensemble, waveform, device, temperature, grid=grid, workers=workers)
    except ConfigError as e:
        stderr(f"config error: {e}")
        return EXIT_CONFIG
    except ValueError as e:
        stderr(f"simulation error: {e}")
        return EXIT_DOMAIN
    meta = {
        "config_hash": cfg.hash,
        "seed": ensemble.seed,
        "temperature_k": fmt(temperature),
        "waveform": waveform.kind,
    }
    if "relax_start_s" in trace.meta:
        meta["relax_start_s"] = fmt(trace.meta["relax_start_s"])
    write_trace_csv(args.out, trace, meta)
    print(f"seed={ensemble.seed}")
    print(f"config_hash={cfg.hash}")
    print(f"n_samples={len(trace)}")
    print(f"final_delta_vt_v={fmt(trace.delta_vt[-1])}")
    print(f"final_abs_delta_vt_mv={fmt(abs(trace.delta_vt[-1]) * 1e3)}")
    return 0


def cmd_gen_ensemble(args):
    try:
        cfg = _load(args.config, args.lenient)
        if not cfg.has("ensemble"):
            raise ConfigError("missing [ensemble] section")
        spec = gen_spec_from_config(cfg)
    except (ConfigError, ValueError) as e:
        stderr(f"config error: {e}")
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else cfg.get("ensemble", "seed", 0)
    ens = gen_ensemble(spec, seed)
    write_ensemble_csv(args.out, ens, {"config_hash": cfg.hash, "seed": seed})
    print(f"seed={seed}")
    print(f"config_hash={cfg.hash}")
    print(f"n_traps={len(ens)}")
    print(f"saturation_v={fmt(ens.saturation)}")
    return 0


def cmd_fit(args):
    required = FIT_SCHEMAS[args.kind]
    try:
        cols = read_columns(args.inp, required, warn=stderr)
    except (SchemaError, ValueError) as e:
        stderr(f"schema error: {e}")
        return EXIT_CONFIG
    n = len(cols[required[0]])
    try:
        if n == 0:
            raise FitError("input has no data rows")
        rows = list(zip(*(cols[c] for c in required)))
        if args.kind == "powerlaw":
            res = fit_powerlaw(rows, args.trim_fraction)
        elif args.kind == "duty":
            res = fit_dutycycle(rows, trim_fraction=args.trim_fraction)
        else:
            res = fit_universal_relax(rows, args.trim_fraction)
    except FitError as e:
        stderr(f"fit error: {e}")
        return EXIT_FIT
    out = {"model": args.kind, **res.to_dict(),
           "provenance": {"tool": f"btiage {__version__}", "input_hash": digest(Path(args.inp).read_bytes())}}
    Path(args.out).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    for k, v in res.params.to_dict().items():
        print(f"{k}={fmt(v)}")
    print(f"residual_rms={fmt(res.residual_rms)}")
    print(f"n_points={res.n_points}")
    print(f"converged={str(res.converged).lower()}")
    if res.flags:
        print(f"flags={','.join(res.flags)}")
    return 0


def _print_report(rep):
    print(f"tolerance_v={fmt(rep.tolerance)}")
    print(f"ttf_s={'not reached' if rep.ttf is None else fmt(rep.ttf)}")
    if rep.ttf_wall is not None:
        print(f"ttf_wall_s={fmt(rep.ttf_wall)}")
    print(f"crossing_method={rep.crossing_method}")
    if rep.reference_ttf is not None:
        print(f"reference_ttf_s={fmt(rep.reference_ttf)}")
    if rep.extension_ratio is not None:
        prefix = ">" if rep.ratio_is_lower_bound else ""
        print(f"extension_ratio={prefix}{fmt(rep.extension_ratio)}")


def cmd_ttf(args):
    if not args.tolerance_mv > 0:
        stderr("usage error: --tolerance-mv must be > 0")
        return EXIT_CONFIG
    tol = args.tolerance_mv * 1e-3
    try:
        trace = read_trace_csv(args.trace)
        ref = read_trace_csv(args.reference) if args.reference else None
    except (SchemaError, ValueError) as e:
        stderr(f"schema error: {e}")
        return EXIT_CONFIG
    try:
        rep = ttf_extension(trace, ref, tol) if ref is not None else ttf_project(trace, tol)
    except NoBaselineError as e:
        stderr(f"error: {e}")
        return EXIT_NO_BASELINE
    _print_report(rep)
    if args.out:
        Path(args.out).write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def _median_of(path, signed):
    cols = read_columns(path, ("delta_vt_v",), warn=stderr)
    return ambient_cdf(cols["delta_vt_v"], signed=signed)


def cmd_cdf(args):
    try:
        summary = _median_of(args.inp, args.signed)
        base = _median_of(args.baseline, args.signed) if args.baseline else None
    except (SchemaError, ValueError) as e:
        stderr(f"schema error: {e}")
        return EXIT_CONFIG
    meta = {"config_hash": digest(Path(args.inp).read_bytes()), "seed": "none",
            "n": summary.n, "median_v": fmt(summary.median)}
    write_columns(args.out, ("value_v", "fraction"), summary.cdf_points, meta)
    print(f"n={summary.n}")
    print(f"median_v={fmt(summary.median)}")
    print(f"median_mv={fmt(summary.median * 1e3)}")
    for p, v in summary.quantiles:
        print(f"q{round(p * 100):02d}_v={fmt(v)}")
    if base is not None:
        print(f"baseline_median_mv={fmt(base.median * 1e3)}")
        print(f"improvement_ratio={fmt(base.median / summary.median)}")
    return 0


def cmd_dit(args):
    try:
        est = dit_from_subthreshold(args.ss_mv_dec, args.temp_k, args.cox_f_cm2)
    except ValueError as e:
        stderr(f"error: {e}")
        return EXIT_DOMAIN
    print(f"ss_mv_dec={fmt(est.ss)}")
    print(f"temperature_k={fmt(est.temperature)}")
    print(f"c_ox_f_cm2={fmt(est.c_ox)}")
    print(f"d_it_cm2_ev={fmt(est.d_it)}")
    print(f"method: {est.method}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="btiage", description="BTI aging simulation, fitting and TTF projection")
    p.add_argument("--version", action="version", version=f"btiage {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a trap ensemble under a stress waveform")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--lenient", action="store_true", help="downgrade unknown config keys to warnings")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("gen-ensemble", help="sample a trap ensemble to CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--lenient", action="store_true")
    s.set_defaults(func=cmd_gen_ensemble)

    s = sub.add_parser("fit", help="fit an empirical model to CSV data")
    s.add_argument("kind", choices=sorted(FIT_SCHEMAS))
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--trim-fraction", type=float, default=0.0)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("ttf", help="project time-to-failure from a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--reference")
    s.add_argument("--tolerance-mv", type=float, required=True)
    s.add_argument("--out", help="also write the report as JSON")
    s.set_defaults(func=cmd_ttf)

    s = sub.add_parser("cdf", help="empirical CDF of threshold shifts")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--baseline", help="second sample file; prints median(baseline) / median(in)")
    s.add_argument("--signed", action="store_true")
    s.set_defaults(func=cmd_cdf)

    s = sub.add_parser("dit", help="interface trap density from subthreshold swing")
    s.add_argument("--ss-mv-dec", type=float, required=True)
    s.add_argument("--temp-k", type=float, required=True)
    s.add_argument("--cox-f-cm2", type=float, required=True)
    s.set_defaults(func=cmd_dit)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
