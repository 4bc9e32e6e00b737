"""Bounded nonlinear least squares and decay-curve parameter estimation.

The solver is a trust-region Gauss-Newton iteration with Levenberg-Marquardt
damping and reflective bound handling: a step that crosses a bound is folded
back at the bound surface, with projection onto the bound as a fallback when
the reflected point does not decrease the cost.  This mirrors the behavior
of classic trust-region-reflective least-squares implementations while
staying small enough to audit.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import SystemParams, energy_to_rate, HBAR_UEV_PS
from .dynamics import TimeGrid, evolve, photon_trace
from .signal import DecayCurve, SlowComponent, convolve_irf, slow_component
from .errors import FitConvergenceError

PARAM_NAMES = ("delta", "gamma_r", "gamma_ph", "a_i", "y0", "scale", "t0_shift")

_ACCEPT_RATIO = 1e-4
_MAX_LAMBDA = 1e12


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 200
    cost_tol: float = 1e-8
    grad_tol: float = 1e-8
    fd_rel_step: float = 1e-6


@dataclass
class FitProblem:
    """Residual function, starting point and per-parameter box bounds.

    theta0 is clamped strictly inside the box when it starts on a bound.
    """

    residual_fn: Callable[[np.ndarray], np.ndarray]
    theta0: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    options: FitOptions = field(default_factory=FitOptions)
    typical: np.ndarray | None = None

    def __post_init__(self):
        theta0 = np.asarray(self.theta0, dtype=float)
        n = theta0.size
        lower = (np.full(n, -np.inf) if self.lower is None
                 else np.asarray(self.lower, dtype=float))
        upper = (np.full(n, np.inf) if self.upper is None
                 else np.asarray(self.upper, dtype=float))
        if lower.shape != (n,) or upper.shape != (n,):
            raise ValueError("bounds must match theta0 in length")
        if np.any(lower >= upper):
            raise ValueError("each lower bound must be below its upper bound")
        if np.any(theta0 < lower) or np.any(theta0 > upper):
            raise ValueError("theta0 outside bounds")
        span = np.where(np.isfinite(upper - lower), upper - lower, 1.0)
        nudge = 1e-10 * np.maximum(np.abs(theta0), span)
        theta0 = np.where(theta0 <= lower, lower + nudge, theta0)
        theta0 = np.where(theta0 >= upper, upper - nudge, theta0)
        self.theta0 = theta0
        self.lower = lower
        self.upper = upper
        typical = (np.ones(n) if self.typical is None
                   else np.asarray(self.typical, dtype=float))
        if typical.shape != (n,):
            raise ValueError("typical scale must match theta0 in length")
        self.typical = typical


@dataclass
class FitResult:
    theta: np.ndarray
    cost: float
    covariance: np.ndarray | None
    sigma: np.ndarray | None
    iterations: int
    status: str  # converged_cost | converged_grad | max_iter | failed
    n_fev: int
    message: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status in ("converged_cost", "converged_grad")


def residuals(theta: np.ndarray, data: DecayCurve,
              model_fn: Callable[[np.ndarray], DecayCurve],
              weights: np.ndarray | str | None = None) -> np.ndarray:
    """Weighted residual vector w * (model(theta) - data) on the data grid."""
    model = model_fn(np.asarray(theta, dtype=float))
    if model.times.shape != data.times.shape or \
            np.max(np.abs(model.times - data.times)) > 1e-9:
        raise ValueError("model grid does not match data grid")
    w = _resolve_weights(weights, data)
    return w * (model.values - data.values)


def _resolve_weights(weights, data: DecayCurve) -> np.ndarray:
    if weights is None:
        return np.ones_like(data.values)
    if isinstance(weights, str):
        if weights == "poisson":
            return 1.0 / np.sqrt(np.maximum(data.values, 1.0))
        raise ValueError(f"unknown weights mode {weights!r}")
    w = np.asarray(weights, dtype=float)
    if w.shape != data.values.shape:
        raise ValueError("weight array must match data length")
    return w


def jacobian_fd(residual_fn: Callable[[np.ndarray], np.ndarray],
                theta: np.ndarray,
                bounds: tuple[np.ndarray, np.ndarray] | None = None,
                rel_step: float = 1e-6,
                typical: np.ndarray | None = None,
                r0: np.ndarray | None = None) -> np.ndarray:
    """Forward-difference Jacobian that never evaluates outside the bounds.

    The step for parameter j is rel_step * max(|theta_j|, typical_j); it is
    flipped backward when the forward point would exceed the upper bound.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    lower = np.full(n, -np.inf) if bounds is None else np.asarray(bounds[0], float)
    upper = np.full(n, np.inf) if bounds is None else np.asarray(bounds[1], float)
    typ = np.ones(n) if typical is None else np.asarray(typical, dtype=float)
    if r0 is None:
        r0 = np.asarray(residual_fn(theta), dtype=float)
    m = r0.size
    jac = np.empty((m, n))
    for j in range(n):
        h = rel_step * max(abs(theta[j]), typ[j])
        if theta[j] + h > upper[j]:
            h = -h
        if theta[j] + h < lower[j]:
            raise ValueError(
                f"bounds too tight for finite-difference step on parameter {j}")
        pert = theta.copy()
        pert[j] += h
        r = np.asarray(residual_fn(pert), dtype=float)
        if not np.all(np.isfinite(r)):
            raise ValueError(
                f"non-finite residual at finite-difference point (parameter {j})")
        jac[:, j] = (r - r0) / h
    return jac


def _reflect_into_box(raw: np.ndarray, lower: np.ndarray,
                      upper: np.ndarray) -> np.ndarray:
    out = raw.copy()
    below = out < lower
    out[below] = 2.0 * lower[below] - out[below]
    above = out > upper
    out[above] = 2.0 * upper[above] - out[above]
    return np.clip(out, lower, upper)


def _projected_gradient(theta, grad, lower, upper) -> np.ndarray:
    gp = grad.copy()
    gp[(theta <= lower) & (grad > 0)] = 0.0
    gp[(theta >= upper) & (grad < 0)] = 0.0
    return gp


def least_squares_trf(problem: FitProblem) -> FitResult:
    """Minimize 0.5 ||r(theta)||^2 subject to box bounds.

    Each iteration solves the damped normal equations
    (J^T J + lambda * diag(d^2)) p = -J^T r with the scaling d taken from the
    running maximum of the Jacobian column norms, then tries the reflected
    step and, failing that, the step projected onto the box.  Accepted steps
    keep the cost non-increasing; termination on relative cost reduction
    (cost_tol), projected gradient (grad_tol) or max_iter.
    """
    opts = problem.options
    lower, upper = problem.lower, problem.upper
    theta = problem.theta0.copy()
    n_fev = 0
    used_projection = False

    def call(th):
        nonlocal n_fev
        n_fev += 1
        return np.asarray(problem.residual_fn(th), dtype=float)

    def make_result(status, cost, cov, sigma, it, grad_norm, message=""):
        diag = {"projected_gradient_norm": grad_norm,
                "used_projection_fallback": used_projection}
        return FitResult(theta=theta, cost=cost, covariance=cov, sigma=sigma,
                         iterations=it, status=status, n_fev=n_fev,
                         message=message, diagnostics=diag)

    r = call(theta)
    if not np.all(np.isfinite(r)):
        return make_result("failed", np.inf, None, None, 0, np.inf,
                           "non-finite residual at starting point")
    cost = 0.5 * float(r @ r)

    try:
        jac = jacobian_fd(problem.residual_fn, theta, (lower, upper),
                          opts.fd_rel_step, problem.typical, r0=r)
    except ValueError as exc:
        return make_result("failed", cost, None, None, 0, np.inf, str(exc))
    n_fev += theta.size
    grad = jac.T @ r
    d_scale = np.maximum(np.linalg.norm(jac, axis=0), 1e-12)
    lam = 1e-3

    status = "max_iter"
    message = ""
    iteration = 0
    for iteration in range(1, opts.max_iter + 1):
        gp_norm = float(np.max(np.abs(_projected_gradient(theta, grad, lower, upper))))
        if gp_norm < opts.grad_tol:
            status = "converged_grad"
            break

        jtj = jac.T @ jac
        accepted = False
        while lam <= _MAX_LAMBDA:
            try:
                p = np.linalg.solve(jtj + lam * np.diag(d_scale ** 2), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            raw = theta + p
            reflected = _reflect_into_box(raw, lower, upper)
            clipped = np.clip(raw, lower, upper)
            candidates = [reflected]
            if not np.array_equal(clipped, reflected):
                candidates.append(clipped)
            for idx, cand in enumerate(candidates):
                p_act = cand - theta
                if not np.any(p_act):
                    continue
                jp = jac @ p_act
                predicted = -float(grad @ p_act) - 0.5 * float(jp @ jp)
                if predicted <= 0:
                    continue
                r_trial = call(cand)
                if not np.all(np.isfinite(r_trial)):
                    continue
                cost_trial = 0.5 * float(r_trial @ r_trial)
                ratio = (cost - cost_trial) / predicted
                if ratio > _ACCEPT_RATIO:
                    if idx == 1:
                        used_projection = True
                    theta = cand
                    actual_reduction = cost - cost_trial
                    r, cost = r_trial, cost_trial
                    lam = max(lam * max(1.0 / 3.0, 1.0 - (2.0 * ratio - 1.0) ** 3),
                              1e-12)
                    accepted = True
                    break
            if accepted:
                break
            lam *= 4.0
        if not accepted:
            status = "failed"
            message = "no acceptable step found (trust region collapsed)"
            break

        try:
            jac = jacobian_fd(problem.residual_fn, theta, (lower, upper),
                              opts.fd_rel_step, problem.typical, r0=r)
        except ValueError as exc:
            status = "failed"
            message = str(exc)
            break
        n_fev += theta.size
        grad = jac.T @ r
        d_scale = np.maximum(d_scale, np.linalg.norm(jac, axis=0))

        if actual_reduction < opts.cost_tol * max(cost, 1.0):
            status = "converged_cost"
            break

    gp_norm = float(np.max(np.abs(_projected_gradient(theta, grad, lower, upper))))
    cov, sigma, cov_note = _covariance(jac, cost, r.size, theta.size)
    result = make_result(status, cost, cov, sigma, iteration, gp_norm, message)
    if cov_note:
        result.diagnostics["covariance_note"] = cov_note
    return result


def _covariance(jac, cost, m, n):
    """(J^T J)^-1 * 2 cost / (m - n); pseudo-inverted and flagged when the
    normal matrix is ill-conditioned."""
    if m <= n:
        return None, None, "underdetermined (m <= n)"
    jtj = jac.T @ jac
    variance = 2.0 * cost / (m - n)
    eigval, eigvec = np.linalg.eigh(jtj)
    if eigval[-1] <= 0:
        return None, None, "zero Jacobian"
    good = eigval > eigval[-1] * 1e-14
    note = "" if good.all() else "ill-conditioned; pseudo-inverse over stable directions"
    inv_eig = np.where(good, 1.0 / np.where(good, eigval, 1.0), 0.0)
    cov = (eigvec * inv_eig) @ eigvec.T * variance
    sigma = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return cov, sigma, note


@dataclass(frozen=True)
class DecayFitParams:
    """Free parameters of a decay-curve fit (detuning in ueV, rates in ueV,
    amplitudes in curve units, time shift in ps)."""

    delta: float = 0.0
    gamma_r: float = 30.0
    gamma_ph: float = 3.0
    a_i: float = 0.0
    y0: float = 0.0
    scale: float = 1.0
    t0_shift: float = 0.0

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_NAMES])

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "DecayFitParams":
        return cls(**dict(zip(PARAM_NAMES, map(float, vec))))


@dataclass(frozen=True)
class FrozenDecayModel:
    """Quantities held fixed during a decay fit: the coupling/decay constants
    and pulse of `base` (its delta/gamma_r/gamma_ph are overridden by the fit
    vector), the background decay constant, the IRF width, and the grid
    resolution used for the model integration."""

    base: SystemParams = field(default_factory=SystemParams)
    slow_decay_ps: float = 360.0
    irf_fwhm: float = 25.6
    n_max: int = 1
    dt_internal: float = 0.05

    def params_for(self, theta: DecayFitParams) -> SystemParams:
        return replace(self.base,
                       delta=theta.delta,
                       gamma_r=theta.gamma_r,
                       gamma_ph=max(theta.gamma_ph, 0.0),
                       t0=self.base.t0 + theta.t0_shift)


DEFAULT_DECAY_BOUNDS = {
    "delta": (-200.0, 200.0),
    "gamma_r": (0.0, 500.0),
    "gamma_ph": (0.0, 500.0),
    "a_i": (0.0, np.inf),
    "y0": (0.0, np.inf),
    "scale": (0.0, np.inf),
    "t0_shift": (-50.0, 50.0),
}


def decay_model_fn(data: DecayCurve, frozen: FrozenDecayModel,
                   cache_size: int = 64) -> Callable[[np.ndarray], DecayCurve]:
    """Model evaluator on the data grid with a small trajectory cache.

    The composed model is linear in (a_i, y0, scale), so the expensive
    integration plus IRF convolution is cached on the remaining coordinates
    (delta, gamma_r, gamma_ph, t0_shift); evaluations that only move the
    linear parameters are nearly free.  The assembled curve is identical to
    :func:`rabifit.signal.compose_model` by linearity of the convolution.
    """
    from .core import HilbertSpace, pure_state_dm, G

    times = data.times
    dt_out = data.dt
    tau_limit = frozen.base.tau_fwhm / 20.0 if frozen.base.p0 > 0 else np.inf
    dt_target = min(frozen.dt_internal, tau_limit)
    substeps = max(1, int(np.ceil(dt_out / dt_target - 1e-9)))
    grid = TimeGrid(t_start=float(times[0]), t_end=float(times[-1]),
                    dt_internal=dt_out / substeps, dt_output=dt_out)
    space = HilbertSpace(n_max=frozen.n_max)
    rho0 = pure_state_dm(space, G, 0)
    cache: OrderedDict = OrderedDict()

    def components(delta, gamma_r, gamma_ph, t0_shift):
        key = (delta, gamma_r, gamma_ph, t0_shift)
        hit = cache.get(key)
        if hit is not None:
            cache.move_to_end(key)
            return hit
        params = frozen.params_for(DecayFitParams(
            delta=delta, gamma_r=gamma_r, gamma_ph=gamma_ph, t0_shift=t0_shift))
        traj = evolve(rho0, params, grid)
        fast = photon_trace(traj, params.kappa)
        unit_slow = slow_component(times, SlowComponent(
            a_i=1.0, decay_ps=frozen.slow_decay_ps, y0=0.0, t_onset=params.t0))
        fast_conv = convolve_irf(fast, frozen.irf_fwhm).values
        slow_conv = convolve_irf(DecayCurve(times=times, values=unit_slow),
                                 frozen.irf_fwhm).values
        cache[key] = (fast_conv, slow_conv)
        if len(cache) > cache_size:
            cache.popitem(last=False)
        return cache[key]

    def model(theta: np.ndarray) -> DecayCurve:
        delta, gamma_r, gamma_ph, a_i, y0, scale, t0_shift = map(float, theta)
        fast_conv, slow_conv = components(delta, gamma_r, gamma_ph, t0_shift)
        return DecayCurve(times=times,
                          values=scale * fast_conv + a_i * slow_conv + y0)

    return model


def initial_decay_guess(data: DecayCurve, frozen: FrozenDecayModel) -> DecayFitParams:
    """Starting point: tail pre-fit for (a_i, y0), peak matching for scale.

    The late tail (after the fast dynamics has decayed) is linear in
    (a_i, y0) for the known decay constant, so a 2x2 linear solve gives the
    background; the overall scale then matches the data peak.
    """
    times, values = data.times, data.values
    t0 = frozen.base.t0
    tail_start = t0 + max(4.0 * HBAR_UEV_PS / max(frozen.base.kappa, 1.0),
                          0.4 * (times[-1] - times[0]))
    mask = times >= tail_start
    if mask.sum() < 8:
        mask = times >= times[0] + 0.6 * (times[-1] - times[0])
    basis = np.column_stack([np.exp(-(times[mask] - t0) / frozen.slow_decay_ps),
                             np.ones(mask.sum())])
    coeff, *_ = np.linalg.lstsq(basis, values[mask], rcond=None)
    a_i0 = max(float(coeff[0]), 0.0)
    y00 = max(float(coeff[1]), 0.0)

    guess = DecayFitParams(delta=frozen.base.delta, gamma_r=30.0, gamma_ph=3.0,
                           a_i=a_i0, y0=y00, scale=1.0, t0_shift=0.0)
    model = decay_model_fn(data, frozen)
    unit = model(guess.to_vector())
    residual_peak = float(np.max(values) - a_i0 - y00)
    unit_peak = float(np.max(unit.values) - a_i0 - y00)
    scale0 = max(residual_peak / unit_peak, 1e-12) if unit_peak > 0 else 1.0

    shift0 = (times[int(np.argmax(values))] - times[int(np.argmax(unit.values))])
    lo, hi = DEFAULT_DECAY_BOUNDS["t0_shift"]
    shift0 = float(np.clip(shift0, lo + 1.0, hi - 1.0))
    return replace(guess, scale=scale0, t0_shift=shift0)


def fit_decay(data: DecayCurve, frozen: FrozenDecayModel,
              theta0: DecayFitParams | None = None,
              bounds: dict[str, tuple[float, float]] | None = None,
              weights: np.ndarray | str | None = None,
              options: FitOptions | None = None) -> FitResult:
    """Fit (delta, gamma_r, gamma_ph, a_i, y0, scale, t0_shift) to a decay curve.

    Residual is model(theta) - data on the data grid (optionally weighted);
    frozen quantities are echoed into the result diagnostics.
    """
    if theta0 is None:
        theta0 = initial_decay_guess(data, frozen)
    bound_map = dict(DEFAULT_DECAY_BOUNDS)
    if bounds:
        unknown = set(bounds) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown fit parameters in bounds: {sorted(unknown)}")
        bound_map.update(bounds)
    lower = np.array([bound_map[name][0] for name in PARAM_NAMES])
    upper = np.array([bound_map[name][1] for name in PARAM_NAMES])

    model = decay_model_fn(data, frozen)
    w = _resolve_weights(weights, data)

    def residual_fn(theta):
        return w * (model(theta).values - data.values)

    peak = float(np.max(data.values))
    typical = np.array([10.0, 10.0, 1.0,
                        max(0.1 * peak, 1e-6), max(0.01 * peak, 1e-6),
                        max(theta0.scale, 1e-6), 1.0])
    problem = FitProblem(residual_fn=residual_fn, theta0=theta0.to_vector(),
                         lower=lower, upper=upper,
                         options=options or FitOptions(), typical=typical)
    result = least_squares_trf(problem)

    result.diagnostics["frozen"] = {
        "g_uev": frozen.base.g, "kappa_uev": frozen.base.kappa,
        "gamma_uev": frozen.base.gamma, "p0": frozen.base.p0,
        "t0_ps": frozen.base.t0, "tau_fwhm_ps": frozen.base.tau_fwhm,
        "slow_T_ps": frozen.slow_decay_ps, "irf_fwhm_ps": frozen.irf_fwhm,
        "n_max": frozen.n_max,
    }
    result.diagnostics["param_names"] = list(PARAM_NAMES)
    warnings = []
    span = data.times[-1] - data.times[0]
    period = np.pi * HBAR_UEV_PS / max(frozen.base.g, 1e-9)
    if span < 5.0 * period:
        warnings.append(
            f"data span {span:.0f} ps is shorter than 5 oscillation periods "
            f"({5 * period:.0f} ps)")
    result.diagnostics["warnings"] = warnings
    return result


def synthesize(theta_true: DecayFitParams, frozen: FrozenDecayModel,
               grid: TimeGrid, peak_counts: float, seed: int) -> DecayCurve:
    """Deterministic synthetic detector curve with Poisson counting noise.

    The noiseless model is rescaled so its maximum equals peak_counts, then
    every bin is drawn from a Poisson law with that mean.  The generator is
    the counter-based 64-bit Philox generator (numpy), so a given seed yields
    a bit-identical curve on every run.
    """
    if peak_counts < 1:
        raise ValueError(f"peak_counts must be at least 1, got {peak_counts}")
    from .signal import compose_model

    params = frozen.params_for(theta_true)
    sc = SlowComponent(a_i=theta_true.a_i, decay_ps=frozen.slow_decay_ps,
                       y0=theta_true.y0, t_onset=params.t0)
    model = compose_model(params, sc, theta_true.scale, grid,
                          frozen.irf_fwhm, n_max=frozen.n_max)
    mean = model.values * (peak_counts / float(np.max(model.values)))
    rng = np.random.Generator(np.random.Philox(seed))
    counts = rng.poisson(np.maximum(mean, 0.0)).astype(float)
    return DecayCurve(times=model.times, values=counts)
