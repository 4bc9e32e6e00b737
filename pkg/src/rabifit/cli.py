"""Command-line front end.

Six workflows: simulate a detector-domain decay curve, fit a measured decay
curve, fit a spectrum (single peak or polariton triplet), extract an
oscillation period, generate synthetic noisy data, and sweep a parameter.
Exit codes: 0 success, 1 input/validation error, 2 numeric or convergence
failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import io as rio
from .errors import (ConfigError, DataFormatError, FitConvergenceError,
                     IntegrationError, NoOscillationError)
from .fitcore import (PARAM_NAMES, DecayFitParams, fit_decay, FitOptions,
                      initial_decay_guess, synthesize)
from .signal import (compose_model, extract_period, oscillation_contrast,
                     tail_amplitude)
from .spectral import fit_rabi_triplet, fit_single_voigt

DEFAULT_PERIOD_BAND = (40.0, 300.0)


def _simulate_curve(config: rio.RunConfig):
    return compose_model(config.system_params(), config.slow(), config.scale,
                         config.time_grid(), config.irf_fwhm_ps,
                         n_max=config.n_max)


def cmd_simulate(args) -> int:
    config = rio.load_config(args.config)
    curve = _simulate_curve(config)
    rio.write_decay_curve(args.out, curve)
    peak_idx = int(np.argmax(curve.values))
    try:
        period = extract_period(curve, DEFAULT_PERIOD_BAND)
    except (NoOscillationError, ValueError):
        period = None
    summary = {
        "out": str(args.out),
        "peak_time_ps": float(curve.times[peak_idx]),
        "peak_value": float(curve.values[peak_idx]),
        "period_ps": period,
    }
    sys.stdout.write(rio.dump_json(summary))
    return 0


def cmd_fit_decay(args) -> int:
    config = rio.load_config(args.config)
    data = rio.read_decay_curve(args.data)
    frozen = config.frozen_model()
    weights = None if config.weights == "uniform" else config.weights
    theta0 = initial_decay_guess(data, frozen)
    theta0 = replace(theta0, gamma_r=config.gamma_r_uev,
                     gamma_ph=config.gamma_ph_uev, delta=config.delta_uev)
    result = fit_decay(data, frozen, theta0=theta0, bounds=config.bounds,
                       weights=weights,
                       options=FitOptions(max_iter=config.max_iter))
    payload = {
        "status": result.status,
        "converged": result.converged,
        "cost": float(result.cost),
        "iterations": result.iterations,
        "n_fev": result.n_fev,
        "theta": {name: float(v) for name, v in zip(PARAM_NAMES, result.theta)},
        "sigma": (None if result.sigma is None else
                  {name: float(v) for name, v in zip(PARAM_NAMES, result.sigma)}),
        "frozen": result.diagnostics["frozen"],
        "warnings": result.diagnostics["warnings"],
    }
    text = rio.dump_json(payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0 if result.converged else 2


def _peak_payload(peak) -> dict:
    return {"center_uev": peak.center, "fwhm_lorentz_uev": peak.fwhm_lorentz,
            "fwhm_gauss_uev": peak.fwhm_gauss, "amplitude": peak.amplitude}


def cmd_fit_spectrum(args) -> int:
    if args.gauss_fwhm <= 0:
        raise ValueError(f"--gauss-fwhm must be > 0, got {args.gauss_fwhm}")
    spec = rio.read_spectrum(args.data)
    if args.mode == "single":
        fit = fit_single_voigt(spec, args.gauss_fwhm)
        payload = {
            "mode": "single",
            "peak": _peak_payload(fit.peak),
            "baseline": fit.baseline,
            "q_factor": fit.q_factor,
        }
    else:
        if args.center_lorentz_fwhm <= 0:
            raise ValueError("--center-lorentz-fwhm must be > 0")
        fit = fit_rabi_triplet(spec, args.gauss_fwhm, args.center_lorentz_fwhm)
        minus, center, plus = fit.peaks
        payload = {
            "mode": "triplet",
            "peaks": [_peak_payload(minus), _peak_payload(center),
                      _peak_payload(plus)],
            "baseline": fit.baseline,
            "splitting_uev": fit.splitting,
            "g_uev": fit.g,
        }
    text = rio.dump_json(payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def _parse_band(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"--band must be 'min,max' in ps, got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    if not 0 < lo < hi:
        raise ValueError(f"--band needs 0 < min < max, got {text!r}")
    return lo, hi


def cmd_period(args) -> int:
    band = _parse_band(args.band)
    curve = rio.read_decay_curve(args.data)
    period = extract_period(curve, band)
    sys.stdout.write(rio.dump_json({"period_ps": period,
                                    "band_ps": [band[0], band[1]]}))
    return 0


def cmd_synth(args) -> int:
    config = rio.load_config(args.config)
    if args.peak_counts < 1:
        raise ValueError(f"--peak-counts must be at least 1, got {args.peak_counts}")
    theta = DecayFitParams(delta=config.delta_uev, gamma_r=config.gamma_r_uev,
                           gamma_ph=config.gamma_ph_uev, a_i=config.A_i,
                           y0=config.y0, scale=config.scale, t0_shift=0.0)
    frozen = config.frozen_model(dt_internal=config.dt_ps)
    curve = synthesize(theta, frozen, config.time_grid(), args.peak_counts,
                       args.seed)
    rio.write_decay_curve(args.out, curve)
    sys.stdout.write(rio.dump_json({"out": str(args.out),
                                    "peak_counts": float(args.peak_counts),
                                    "seed": int(args.seed)}))
    return 0


_SWEEP_PARAMS = ("delta", "gamma_ph", "power-proxy")


def _parse_pair(text: str, flag: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(
            f"{flag} must be 'gamma_ph:A_i' for a power-proxy sweep, got {text!r}")
    return float(parts[0]), float(parts[1])


def _sweep_configs(config: rio.RunConfig, args):
    """Per-step (label value, config) pairs for the requested sweep."""
    steps = args.steps
    if args.param == "power-proxy":
        lo = _parse_pair(getattr(args, "from"), "--from")
        hi = _parse_pair(args.to, "--to")
        fractions = np.linspace(0.0, 1.0, steps)
        out = []
        for f in fractions:
            gamma_ph = lo[0] + f * (hi[0] - lo[0])
            a_i = lo[1] + f * (hi[1] - lo[1])
            out.append((float(f), replace(config, gamma_ph_uev=gamma_ph, A_i=a_i)))
        return out
    lo = float(getattr(args, "from"))
    hi = float(args.to)
    if not np.isfinite(lo) or not np.isfinite(hi) or lo >= hi:
        raise ValueError(f"bad sweep range: from {lo} to {hi}")
    values = np.linspace(lo, hi, steps)
    if args.param == "delta":
        return [(float(v), replace(config, delta_uev=float(v))) for v in values]
    if args.param == "gamma_ph":
        if lo < 0:
            raise ValueError("gamma_ph sweep values must be >= 0")
        return [(float(v), replace(config, gamma_ph_uev=float(v))) for v in values]
    raise ValueError(f"unknown sweep parameter {args.param!r}")


def _sweep_step(step_config: rio.RunConfig) -> tuple[float, float, float]:
    curve = _simulate_curve(step_config)
    try:
        period = extract_period(curve, DEFAULT_PERIOD_BAND)
    except (NoOscillationError, ValueError):
        period = float("nan")
    return period, oscillation_contrast(curve), tail_amplitude(curve)


def cmd_sweep(args) -> int:
    config = rio.load_config(args.config)
    if args.steps < 2:
        raise ValueError(f"--steps must be >= 2, got {args.steps}")
    plan = _sweep_configs(config, args)
    with ThreadPoolExecutor(max_workers=min(len(plan), args.workers)) as pool:
        results = list(pool.map(_sweep_step, [cfg for _, cfg in plan]))
    rows = ["param,period_ps,contrast,tail_amplitude"]
    for (value, _), (period, contrast, tail) in zip(plan, results):
        period_text = "nan" if np.isnan(period) else rio.format_float(period)
        rows.append(f"{rio.format_float(value)},{period_text},"
                    f"{rio.format_float(contrast)},{rio.format_float(tail)}")
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")
    sys.stdout.write(rio.dump_json({"out": str(args.out), "steps": len(plan)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rabifit",
        description="Simulate and fit time-resolved vacuum Rabi oscillations")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="write a model decay curve CSV")
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--out", required=True, help="output curve CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-decay", help="fit a measured decay curve")
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--data", required=True, help="input curve CSV")
    p.add_argument("--out", default=None, help="output fit-result JSON path")
    p.set_defaults(func=cmd_fit_decay)

    p = sub.add_parser("fit-spectrum", help="fit a PL spectrum")
    p.add_argument("--data", required=True, help="input spectrum CSV")
    p.add_argument("--mode", required=True, choices=("single", "triplet"))
    p.add_argument("--gauss-fwhm", type=float, required=True,
                   help="spectrometer Gaussian FWHM in ueV")
    p.add_argument("--center-lorentz-fwhm", type=float, default=16.22,
                   help="frozen Lorentzian FWHM of the center (bare cavity) "
                        "peak in ueV, triplet mode only")
    p.add_argument("--out", default=None, help="output JSON path")
    p.set_defaults(func=cmd_fit_spectrum)

    p = sub.add_parser("period", help="extract the oscillation period")
    p.add_argument("--data", required=True, help="input curve CSV")
    p.add_argument("--band", default="40,300",
                   help="search band 'min,max' in ps (default 40,300)")
    p.set_defaults(func=cmd_period)

    p = sub.add_parser("synth", help="generate a synthetic noisy decay curve")
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--peak-counts", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output curve CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="simulate and analyze across a parameter")
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--param", required=True, choices=_SWEEP_PARAMS)
    p.add_argument("--from", required=True,
                   help="start value (or 'gamma_ph:A_i' for power-proxy)")
    p.add_argument("--to", required=True,
                   help="end value (or 'gamma_ph:A_i' for power-proxy)")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--workers", type=int, default=4,
                   help="concurrent sweep workers (result order is fixed)")
    p.add_argument("--out", required=True, help="output sweep CSV path")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if not hasattr(args, "func"):
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NoOscillationError, FitConvergenceError, IntegrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
