"""Run configuration and CSV/JSON data exchange.

Config files are flat JSON with unit-suffixed keys; unknown keys are
rejected so typos cannot silently fall back to defaults.  Curve and spectrum
files are two-column CSV (UTF-8, LF, '.' decimal point) with fixed headers.
All floats are written with 9 significant digits so repeated runs produce
byte-identical files.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import SystemParams
from .dynamics import TimeGrid
from .errors import ConfigError, DataFormatError
from .fitcore import PARAM_NAMES, FrozenDecayModel
from .signal import DecayCurve, SlowComponent
from .spectral import Spectrum

CURVE_HEADER = "time_ps,value"
SPECTRUM_HEADER = "energy_uev,intensity"


def format_float(x: float) -> str:
    """Fixed 9-significant-digit formatting used in every output file."""
    return f"{float(x):.9g}"


def round_floats(obj):
    """Recursively round floats to 9 significant digits for JSON output."""
    if isinstance(obj, float):
        return float(format_float(obj))
    if isinstance(obj, np.floating):
        return float(format_float(float(obj)))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {k: round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def dump_json(obj) -> str:
    """Deterministic JSON text (insertion key order, rounded floats)."""
    return json.dumps(round_floats(obj), indent=2) + "\n"


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; defaults follow the measured device values."""

    g_uev: float = 18.0
    kappa_uev: float = 16.0
    gamma_uev: float = 0.13
    gamma_r_uev: float = 38.0
    gamma_ph_uev: float = 2.6
    delta_uev: float = 0.0
    p0: float = 0.1
    t0_ps: float = 5.0
    tau_fwhm_ps: float = 1.0
    t_end_ps: float = 1500.0
    dt_ps: float = 0.02
    out_dt_ps: float = 2.0
    irf_fwhm_ps: float = 25.6
    slow_T_ps: float = 360.0
    A_i: float = 0.0
    y0: float = 0.0
    scale: float = 1.0
    n_max: int = 1
    weights: str = "uniform"
    max_iter: int = 200
    bounds: dict | None = None

    def system_params(self) -> SystemParams:
        return SystemParams(g=self.g_uev, kappa=self.kappa_uev,
                            gamma=self.gamma_uev, gamma_r=self.gamma_r_uev,
                            gamma_ph=self.gamma_ph_uev, delta=self.delta_uev,
                            p0=self.p0, t0=self.t0_ps,
                            tau_fwhm=self.tau_fwhm_ps)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(t_start=0.0, t_end=self.t_end_ps,
                        dt_internal=self.dt_ps, dt_output=self.out_dt_ps)

    def slow(self) -> SlowComponent:
        return SlowComponent(a_i=self.A_i, decay_ps=self.slow_T_ps,
                             y0=self.y0, t_onset=self.t0_ps)

    def frozen_model(self, dt_internal: float = 0.05) -> FrozenDecayModel:
        return FrozenDecayModel(base=self.system_params(),
                                slow_decay_ps=self.slow_T_ps,
                                irf_fwhm=self.irf_fwhm_ps,
                                n_max=self.n_max, dt_internal=dt_internal)


_FLOAT_KEYS = ("g_uev", "kappa_uev", "gamma_uev", "gamma_r_uev", "gamma_ph_uev",
               "delta_uev", "p0", "t0_ps", "tau_fwhm_ps", "t_end_ps", "dt_ps",
               "out_dt_ps", "irf_fwhm_ps", "slow_T_ps", "A_i", "y0", "scale")
_INT_KEYS = ("n_max", "max_iter")


def load_config(path) -> RunConfig:
    """Load and validate a JSON config; reject unknown keys by name."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")

    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

    values = {}
    for key, value in raw.items():
        if key in _FLOAT_KEYS:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"config key {key} must be a number")
            values[key] = float(value)
        elif key in _INT_KEYS:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"config key {key} must be an integer")
            values[key] = value
        elif key == "weights":
            if value not in ("uniform", "poisson"):
                raise ConfigError(
                    f"config key weights must be 'uniform' or 'poisson', got {value!r}")
            values[key] = value
        elif key == "bounds":
            values[key] = _validate_bounds(value)
    config = RunConfig(**values)
    try:
        config.system_params()
        config.time_grid()
        config.slow()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if config.scale < 0:
        raise ConfigError(f"config key scale must be >= 0, got {config.scale}")
    if config.n_max < 1:
        raise ConfigError(f"config key n_max must be >= 1, got {config.n_max}")
    if config.max_iter < 1:
        raise ConfigError(f"config key max_iter must be >= 1, got {config.max_iter}")
    return config


def _validate_bounds(value) -> dict:
    if not isinstance(value, dict):
        raise ConfigError("config key bounds must be an object")
    out = {}
    for name, pair in value.items():
        if name not in PARAM_NAMES:
            raise ConfigError(
                f"bounds refers to unknown fit parameter {name!r} "
                f"(known: {', '.join(PARAM_NAMES)})")
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(v, (int, float)) for v in pair)):
            raise ConfigError(f"bounds[{name!r}] must be a [low, high] pair")
        out[name] = (float(pair[0]), float(pair[1]))
    return out


def _read_two_column(path, header: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    if lines[0].strip() != header:
        raise DataFormatError(
            f"{path}, line 1: expected header {header!r}, got {lines[0].strip()!r}")
    col_a, col_b = [], []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataFormatError(
                f"{path}, line {number}: expected 2 comma-separated values, "
                f"got {len(parts)}")
        try:
            col_a.append(float(parts[0]))
            col_b.append(float(parts[1]))
        except ValueError as exc:
            raise DataFormatError(f"{path}, line {number}: {exc}") from exc
    if len(col_a) < 2:
        raise DataFormatError(f"{path}: need at least two data rows")
    return np.array(col_a), np.array(col_b)


def read_decay_curve(path) -> DecayCurve:
    times, values = _read_two_column(path, CURVE_HEADER)
    try:
        return DecayCurve(times=times, values=values)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def write_decay_curve(path, curve: DecayCurve) -> None:
    rows = [CURVE_HEADER]
    rows += [f"{format_float(t)},{format_float(v)}"
             for t, v in zip(curve.times, curve.values)]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")


def read_spectrum(path) -> Spectrum:
    energies, intensities = _read_two_column(path, SPECTRUM_HEADER)
    try:
        return Spectrum(energies=energies, intensities=intensities)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def write_spectrum(path, spec: Spectrum) -> None:
    rows = [SPECTRUM_HEADER]
    rows += [f"{format_float(e)},{format_float(i)}"
             for e, i in zip(spec.energies, spec.intensities)]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")
