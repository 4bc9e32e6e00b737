"""Hilbert space, operators and Lindblad generator for a three-level emitter
coupled to a single cavity mode.

The emitter is a ladder system with levels G (ground), E (radiative excited
state) and U (upper carrier-capture level).  The E-G transition couples
coherently to the cavity mode; U feeds E by incoherent relaxation and is
itself filled by an incoherent pump pulse.

Conventions used throughout the package:

* Basis ordering is emitter-major, photon-minor: index(s, n) = s*(n_max+1) + n
  with s in {G=0, E=1, U=2}.  For n_max=1 the basis reads
  (G0, G1, E0, E1, U0, U1).
* All energies and rate *parameters* are stored in ueV.  Conversion to
  angular rates in 1/ps happens only where the equation of motion is
  evaluated, via hbar = 658.2119569 ueV*ps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Reduced Planck constant in ueV*ps.  An energy E couples to the dynamics as
# the angular rate E / HBAR_UEV_PS; multiplying that rate by 1000 expresses it
# in GHz (rad/ns).
HBAR_UEV_PS = 658.2119569

# Emitter level indices.
G, E, U = 0, 1, 2

_LEVEL_NAMES = {"G": G, "E": E, "U": U}


def energy_to_rate(energy_uev: float) -> float:
    """Convert an energy in ueV to an angular rate in 1/ps (divide by hbar)."""
    return energy_uev / HBAR_UEV_PS


def rate_to_energy(rate_per_ps: float) -> float:
    """Inverse of :func:`energy_to_rate`."""
    return rate_per_ps * HBAR_UEV_PS


def kappa_from_q(cavity_energy_uev: float, q_factor: float) -> float:
    """Cavity decay rate kappa = E_c / Q, both inputs strictly positive."""
    if cavity_energy_uev <= 0:
        raise ValueError(f"cavity energy must be > 0, got {cavity_energy_uev}")
    if q_factor <= 0:
        raise ValueError(f"Q factor must be > 0, got {q_factor}")
    return cavity_energy_uev / q_factor


@dataclass(frozen=True)
class HilbertSpace:
    """Truncated emitter (x) photon space.

    n_max is the highest retained Fock state; the weak-pumping regime is well
    described already by n_max=1, larger values serve convergence checks.
    """

    n_max: int = 1

    def __post_init__(self):
        if not isinstance(self.n_max, int) or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max}")

    @property
    def n_photon_states(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return 3 * (self.n_max + 1)

    def index(self, level: int, n: int) -> int:
        """Flat basis index of |level, n>."""
        if level not in (G, E, U):
            raise ValueError(f"level must be one of G={G}, E={E}, U={U}")
        if not 0 <= n <= self.n_max:
            raise ValueError(f"photon number {n} outside [0, {self.n_max}]")
        return level * (self.n_max + 1) + n

    @classmethod
    def from_dim(cls, dim: int) -> "HilbertSpace":
        if dim % 3 != 0 or dim < 6:
            raise ValueError(f"dimension {dim} is not 3*(n_max+1) with n_max >= 1")
        return cls(n_max=dim // 3 - 1)


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the coupled system.

    Energies/rates in ueV: g (coupling), kappa (cavity decay), gamma
    (spontaneous emission), gamma_r (U->E relaxation), gamma_ph (pure
    dephasing), delta (cavity minus E-G transition energy).  The incoherent
    pump pulse has integrated area p0 (dimensionless), center t0 (ps) and
    FWHM tau_fwhm (ps).
    """

    g: float = 18.0
    kappa: float = 16.0
    gamma: float = 0.13
    gamma_r: float = 38.0
    gamma_ph: float = 2.6
    delta: float = 0.0
    p0: float = 0.1
    t0: float = 5.0
    tau_fwhm: float = 1.0

    def __post_init__(self):
        for name in ("g", "kappa", "gamma", "gamma_r", "gamma_ph", "p0"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not np.isfinite(self.delta):
            raise ValueError(f"delta must be finite, got {self.delta}")
        if not np.isfinite(self.tau_fwhm) or self.tau_fwhm <= 0:
            raise ValueError(f"tau_fwhm must be > 0, got {self.tau_fwhm}")


def annihilation(space: HilbertSpace) -> np.ndarray:
    """Photon annihilation operator a in the full space.

    Note the truncation artifact: at finite n_max, a@adag - adag@a equals
    diag(1, ..., 1, -n_max) on the photon factor instead of the identity.
    """
    m = space.n_photon_states
    a_ph = np.diag(np.sqrt(np.arange(1, m, dtype=float)), k=1)
    return np.kron(np.eye(3), a_ph).astype(complex)


def creation(space: HilbertSpace) -> np.ndarray:
    return annihilation(space).conj().T


def number_operator(space: HilbertSpace) -> np.ndarray:
    m = space.n_photon_states
    return np.kron(np.eye(3), np.diag(np.arange(m, dtype=float))).astype(complex)


def transition(space: HilbertSpace, i: int, j: int) -> np.ndarray:
    """Emitter pseudo-spin operator sigma_ij = |i><j| (x) identity."""
    if i not in (G, E, U) or j not in (G, E, U):
        raise ValueError(f"levels must be in {{G, E, U}}, got ({i}, {j})")
    e = np.zeros((3, 3))
    e[i, j] = 1.0
    return np.kron(e, np.eye(space.n_photon_states)).astype(complex)


def sigma_z(space: HilbertSpace) -> np.ndarray:
    """Dephasing operator |E><E| - |G><G| (x) identity (zero on U)."""
    return transition(space, E, E) - transition(space, G, G)


def operator_matrix(kind: str, space: HilbertSpace, i: int | str | None = None,
                    j: int | str | None = None) -> np.ndarray:
    """Dispatch by name: 'a', 'a_dagger', 'n_photon', 'sigma', 'sigma_z'.

    For kind='sigma' the levels i, j are required (index or letter).
    """
    if kind == "a":
        return annihilation(space)
    if kind == "a_dagger":
        return creation(space)
    if kind == "n_photon":
        return number_operator(space)
    if kind == "sigma_z":
        return sigma_z(space)
    if kind == "sigma":
        if i is None or j is None:
            raise ValueError("kind='sigma' requires levels i and j")
        if isinstance(i, str):
            i = _LEVEL_NAMES[i]
        if isinstance(j, str):
            j = _LEVEL_NAMES[j]
        return transition(space, i, j)
    raise ValueError(f"unknown operator kind {kind!r}")


def hamiltonian(params: SystemParams, space: HilbertSpace) -> np.ndarray:
    """Rotating-frame Hamiltonian delta*adag@a + g*(sigma_GE@adag + h.c.), in ueV."""
    a = annihilation(space)
    s_ge = transition(space, G, E)
    h = params.delta * number_operator(space)
    coupling = params.g * (s_ge @ a.conj().T)
    return h + coupling + coupling.conj().T


def pure_state_dm(space: HilbertSpace, level: int, n: int) -> np.ndarray:
    """Density matrix |level, n><level, n|."""
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    k = space.index(level, n)
    rho[k, k] = 1.0
    return rho


def check_density_matrix(rho: np.ndarray, herm_tol: float = 1e-12,
                         trace_tol: float = 1e-12, eig_tol: float = 1e-9) -> None:
    """Raise if rho is not a valid (numerically) physical state."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm >= herm_tol:
        raise ValueError(f"density matrix not Hermitian: max deviation {herm:.3e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) >= trace_tol:
        raise ValueError(f"density matrix trace {tr} != 1")
    min_eig = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if min_eig < -eig_tol:
        raise ValueError(f"density matrix has negative eigenvalue {min_eig:.3e}")


def _dissipator(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """D[L]rho = L rho Ldag - (Ldag L rho + rho Ldag L)/2."""
    Ld = L.conj().T
    LdL = Ld @ L
    return L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)


def liouvillian_apply(rho: np.ndarray, params: SystemParams,
                      pump_now: float = 0.0) -> np.ndarray:
    """Right-hand side d(rho)/dt in 1/ps for the master equation.

    Includes the coherent evolution under :func:`hamiltonian` plus cavity
    decay, spontaneous emission, U->E relaxation, G->U incoherent pumping at
    the instantaneous rate pump_now (1/ps), and pure dephasing.  The
    dephasing channel uses the trace-preserving form
    (gamma_ph/2) * (sz rho sz - {sz^2, rho}/2), which leaves all populations
    (including U) untouched and acts on coherences only.
    """
    rho = np.asarray(rho, dtype=complex)
    space = HilbertSpace.from_dim(rho.shape[0])
    if rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if pump_now < 0:
        raise ValueError(f"pump rate must be >= 0, got {pump_now}")

    h = hamiltonian(params, space)
    out = (1j / HBAR_UEV_PS) * (rho @ h - h @ rho)

    if params.kappa > 0:
        out += energy_to_rate(params.kappa) * _dissipator(annihilation(space), rho)
    if params.gamma > 0:
        out += energy_to_rate(params.gamma) * _dissipator(transition(space, G, E), rho)
    if params.gamma_r > 0:
        out += energy_to_rate(params.gamma_r) * _dissipator(transition(space, E, U), rho)
    if pump_now > 0:
        out += pump_now * _dissipator(transition(space, U, G), rho)
    if params.gamma_ph > 0:
        sz = sigma_z(space)
        sz2 = sz @ sz
        rate = 0.5 * energy_to_rate(params.gamma_ph)
        out += rate * (sz @ rho @ sz - 0.5 * (sz2 @ rho + rho @ sz2))
    return out


def expectation(rho: np.ndarray, observable: np.ndarray,
                imag_tol: float = 1e-10) -> float:
    """Re tr(rho @ O) for Hermitian O; rejects large imaginary residue."""
    rho = np.asarray(rho)
    observable = np.asarray(observable)
    if rho.shape != observable.shape:
        raise ValueError(
            f"shape mismatch: rho {rho.shape} vs observable {observable.shape}")
    value = np.trace(rho @ observable)
    if abs(value.imag) >= imag_tol:
        raise ValueError(f"expectation has imaginary residue {value.imag:.3e}")
    return float(value.real)
