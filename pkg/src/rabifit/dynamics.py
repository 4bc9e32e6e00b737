"""Pulsed-pump master-equation integration and photon-number trajectories.

The density matrix is propagated with a fixed-step classical Runge-Kutta
scheme (RK4).  Because the generator is linear in rho, the right-hand side is
applied as a sparse matrix acting on the row-major vectorization of rho; a
numba kernel keeps the inner loop fast enough for fitting campaigns.  The
vectorized generator is checked against :func:`rabifit.core.liouvillian_apply`
in the test suite, so both routes stay consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg
import scipy.sparse

from . import core
from .core import HBAR_UEV_PS, HilbertSpace, SystemParams
from .errors import IntegrationError
from .signal import DecayCurve

# FWHM of a Gaussian = 2*sqrt(2*ln 2) standard deviations.
FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class TimeGrid:
    """Integration window with internal step and output sampling step (ps)."""

    t_start: float = 0.0
    t_end: float = 1500.0
    dt_internal: float = 0.02
    dt_output: float = 2.0

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"t_end {self.t_end} must exceed t_start {self.t_start}")
        if not 0 < self.dt_internal <= self.dt_output:
            raise ValueError(
                f"need 0 < dt_internal <= dt_output, got {self.dt_internal}, {self.dt_output}")
        ratio = self.dt_output / self.dt_internal
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(
                f"dt_output {self.dt_output} is not an integer multiple of "
                f"dt_internal {self.dt_internal}")

    @property
    def steps_per_output(self) -> int:
        return int(round(self.dt_output / self.dt_internal))

    @property
    def n_output(self) -> int:
        return int(math.floor((self.t_end - self.t_start) / self.dt_output + 1e-9)) + 1

    def output_times(self) -> np.ndarray:
        return self.t_start + self.dt_output * np.arange(self.n_output)


@dataclass(frozen=True)
class Trajectory:
    """Observables sampled on the output grid of an :func:`evolve` run."""

    times: np.ndarray
    photon_number: np.ndarray
    pop_g: np.ndarray
    pop_e: np.ndarray
    pop_u: np.ndarray
    trace_error: float
    states: np.ndarray | None = field(default=None, repr=False)


def pump_rate(t, p0: float, t0: float, tau_fwhm: float):
    """Gaussian pump rate in 1/ps with total time integral p0.

    tau_fwhm is the FWHM of the pulse; the Gaussian sigma is
    tau_fwhm / (2*sqrt(2 ln 2)).
    """
    if tau_fwhm <= 0:
        raise ValueError(f"tau_fwhm must be > 0, got {tau_fwhm}")
    if p0 < 0:
        raise ValueError(f"p0 must be >= 0, got {p0}")
    tau = tau_fwhm / FWHM_TO_SIGMA
    amp = p0 / (tau * math.sqrt(2.0 * math.pi))
    x = (np.asarray(t, dtype=float) - t0) / tau
    return amp * np.exp(-0.5 * x * x)


def _vectorized_generator(params: SystemParams, space: HilbertSpace):
    """Dense superoperators (M0, M1) on the row-major vectorization of rho.

    d vec(rho)/dt = (M0 + pump_now * M1) vec(rho), in 1/ps.  Uses
    vec(A rho B) = (A kron B^T) vec(rho).
    """
    dim = space.dim
    eye = np.eye(dim)

    def left_right(a, b):
        return np.kron(a, b.T)

    def dissipator(L):
        LdL = L.conj().T @ L
        return (left_right(L, L.conj().T)
                - 0.5 * (left_right(LdL, eye) + left_right(eye, LdL)))

    h = core.hamiltonian(params, space)
    m0 = (1j / HBAR_UEV_PS) * (left_right(eye, h) - left_right(h, eye))
    if params.kappa > 0:
        m0 = m0 + core.energy_to_rate(params.kappa) * dissipator(core.annihilation(space))
    if params.gamma > 0:
        m0 = m0 + core.energy_to_rate(params.gamma) * dissipator(
            core.transition(space, core.G, core.E))
    if params.gamma_r > 0:
        m0 = m0 + core.energy_to_rate(params.gamma_r) * dissipator(
            core.transition(space, core.E, core.U))
    if params.gamma_ph > 0:
        sz = core.sigma_z(space)
        sz2 = sz @ sz
        m0 = m0 + 0.5 * core.energy_to_rate(params.gamma_ph) * (
            left_right(sz, sz) - 0.5 * (left_right(sz2, eye) + left_right(eye, sz2)))
    m1 = dissipator(core.transition(space, core.U, core.G))
    return m0, m1


@numba.njit(cache=True, nogil=True)
def _rk4_lindblad(v, n_out, steps_per_out, h, t_start,
                  indptr, indices, data, p_indptr, p_indices, p_data,
                  pump_amp, pump_t0, pump_inv_tau, dim, out_states):
    """Fixed-step RK4 on vec(rho) with the pump evaluated at substage times.

    rho is re-Hermitized ((rho + rho^dagger)/2) after every internal step.
    Returns the maximum |tr rho - 1| seen over all internal steps.
    """
    n = dim * dim
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    tmp = np.empty(n, np.complex128)
    out_states[0, :] = v
    trace_err = 0.0
    step = 0
    for io in range(1, n_out):
        for _ in range(steps_per_out):
            t = t_start + step * h
            xa = (t - pump_t0) * pump_inv_tau
            pa = pump_amp * np.exp(-0.5 * xa * xa)
            xb = (t + 0.5 * h - pump_t0) * pump_inv_tau
            pb = pump_amp * np.exp(-0.5 * xb * xb)
            xc = (t + h - pump_t0) * pump_inv_tau
            pc = pump_amp * np.exp(-0.5 * xc * xc)

            for row in range(n):
                acc = 0j
                for k in range(indptr[row], indptr[row + 1]):
                    acc += data[k] * v[indices[k]]
                k1[row] = acc
            if pa != 0.0:
                for row in range(n):
                    acc = 0j
                    for k in range(p_indptr[row], p_indptr[row + 1]):
                        acc += p_data[k] * v[p_indices[k]]
                    k1[row] += pa * acc
            for i in range(n):
                tmp[i] = v[i] + 0.5 * h * k1[i]

            for row in range(n):
                acc = 0j
                for k in range(indptr[row], indptr[row + 1]):
                    acc += data[k] * tmp[indices[k]]
                k2[row] = acc
            if pb != 0.0:
                for row in range(n):
                    acc = 0j
                    for k in range(p_indptr[row], p_indptr[row + 1]):
                        acc += p_data[k] * tmp[p_indices[k]]
                    k2[row] += pb * acc
            for i in range(n):
                tmp[i] = v[i] + 0.5 * h * k2[i]

            for row in range(n):
                acc = 0j
                for k in range(indptr[row], indptr[row + 1]):
                    acc += data[k] * tmp[indices[k]]
                k3[row] = acc
            if pb != 0.0:
                for row in range(n):
                    acc = 0j
                    for k in range(p_indptr[row], p_indptr[row + 1]):
                        acc += p_data[k] * tmp[p_indices[k]]
                    k3[row] += pb * acc
            for i in range(n):
                tmp[i] = v[i] + h * k3[i]

            for row in range(n):
                acc = 0j
                for k in range(indptr[row], indptr[row + 1]):
                    acc += data[k] * tmp[indices[k]]
                k4[row] = acc
            if pc != 0.0:
                for row in range(n):
                    acc = 0j
                    for k in range(p_indptr[row], p_indptr[row + 1]):
                        acc += p_data[k] * tmp[p_indices[k]]
                    k4[row] += pc * acc

            for i in range(n):
                v[i] = v[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

            tr = 0.0
            for i in range(dim):
                ii = i * dim + i
                v[ii] = complex(v[ii].real, 0.0)
                tr += v[ii].real
                for j in range(i + 1, dim):
                    ij = i * dim + j
                    ji = j * dim + i
                    avg = 0.5 * (v[ij] + np.conj(v[ji]))
                    v[ij] = avg
                    v[ji] = np.conj(avg)
            err = abs(tr - 1.0)
            if err > trace_err:
                trace_err = err
            step += 1
        out_states[io, :] = v
    return trace_err


def evolve(rho0: np.ndarray, params: SystemParams, grid: TimeGrid,
           store_states: bool = False) -> Trajectory:
    """Integrate the master equation from rho0 and sample observables.

    The internal step must resolve the pump pulse: dt_internal <=
    tau_fwhm / 20 is enforced whenever p0 > 0.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    core.check_density_matrix(rho0)
    space = HilbertSpace.from_dim(rho0.shape[0])
    if params.p0 > 0 and grid.dt_internal > params.tau_fwhm / 20 + 1e-12:
        raise ValueError(
            f"dt_internal {grid.dt_internal} ps too coarse for a pulse of FWHM "
            f"{params.tau_fwhm} ps (need <= tau_fwhm/20)")

    m0, m1 = _vectorized_generator(params, space)
    m0_csr = scipy.sparse.csr_matrix(m0)
    m0_csr.eliminate_zeros()
    m1_csr = scipy.sparse.csr_matrix(m1)
    m1_csr.eliminate_zeros()

    tau = params.tau_fwhm / FWHM_TO_SIGMA
    pump_amp = params.p0 / (tau * math.sqrt(2.0 * math.pi))

    n_out = grid.n_output
    states = np.empty((n_out, space.dim * space.dim), dtype=complex)
    trace_error = _rk4_lindblad(
        rho0.reshape(-1).copy(), n_out, grid.steps_per_output,
        grid.dt_internal, grid.t_start,
        m0_csr.indptr, m0_csr.indices, m0_csr.data,
        m1_csr.indptr, m1_csr.indices, m1_csr.data,
        pump_amp, params.t0, 1.0 / tau, space.dim, states)

    times = grid.output_times()
    if not np.all(np.isfinite(states)):
        bad = np.where(~np.isfinite(states).all(axis=1))[0][0]
        raise IntegrationError(
            f"non-finite density matrix at t = {times[bad]:.6g} ps "
            f"(dt_internal = {grid.dt_internal} ps); reduce the step size")

    states = states.reshape(n_out, space.dim, space.dim)
    diag = np.einsum("tii->ti", states).real
    n_ph = space.n_photon_states
    photon_weights = np.tile(np.arange(n_ph, dtype=float), 3)
    photon_number = diag @ photon_weights
    pops = diag.reshape(n_out, 3, n_ph).sum(axis=2)

    return Trajectory(
        times=times,
        photon_number=photon_number,
        pop_g=pops[:, core.G],
        pop_e=pops[:, core.E],
        pop_u=pops[:, core.U],
        trace_error=float(trace_error),
        states=states if store_states else None,
    )


def photon_trace(traj: Trajectory, kappa: float) -> DecayCurve:
    """Cavity emission rate (kappa/hbar) * <adag a>(t) in photons/ps."""
    return DecayCurve(times=traj.times.copy(),
                      values=core.energy_to_rate(kappa) * traj.photon_number)


def single_excitation_oracle(params: SystemParams, grid: TimeGrid,
                             initial: tuple[complex, complex] = (1.0, 0.0)) -> DecayCurve:
    """Independent reference for the single-excitation decay problem.

    Valid only without pumping and pure dephasing; then, starting from
    |E, 0> (amplitudes initial=(c_E, c_1)), the full master equation closes
    on the two amplitudes

        c_E' = -(gamma/2hbar) c_E - i (g/hbar) c_1
        c_1' = -(i delta/hbar + kappa/2hbar) c_1 - i (g/hbar) c_E

    which are propagated exactly with a matrix exponential per output step.
    Returns the emission rate (kappa/hbar) |c_1|^2.
    """
    if params.p0 != 0:
        raise ValueError("oracle requires p0 = 0 (no incoherent pumping)")
    if params.gamma_ph != 0:
        raise ValueError("oracle requires gamma_ph = 0 (no pure dephasing)")
    g = core.energy_to_rate(params.g)
    kappa = core.energy_to_rate(params.kappa)
    gamma = core.energy_to_rate(params.gamma)
    delta = core.energy_to_rate(params.delta)
    a = np.array([[-0.5 * gamma, -1j * g],
                  [-1j * g, -1j * delta - 0.5 * kappa]], dtype=complex)
    step = scipy.linalg.expm(a * grid.dt_output)
    n_out = grid.n_output
    c = np.array(initial, dtype=complex)
    emission = np.empty(n_out)
    for k in range(n_out):
        emission[k] = core.energy_to_rate(params.kappa) * abs(c[1]) ** 2
        c = step @ c
    return DecayCurve(times=grid.output_times(), values=emission)
