"""Spectral-domain analysis: Voigt peaks, Q-factor and polariton-triplet fits.

The measured lineshape is a Voigt profile: a Lorentzian physical line
convolved with the Gaussian spectrometer response.  Q factors follow from
the fitted Lorentzian width; coupling strength from the polariton splitting
of the on-resonance triplet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.signal
from scipy.special import wofz

from .core import HBAR_UEV_PS
from .errors import FitConvergenceError
from .fitcore import FitOptions, FitProblem, least_squares_trf

_FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class Spectrum:
    """Energy-resolved intensity data (energies ascending, in ueV)."""

    energies: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        energies = np.asarray(self.energies, dtype=float)
        intensities = np.asarray(self.intensities, dtype=float)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "intensities", intensities)
        if energies.ndim != 1 or energies.size < 2:
            raise ValueError("spectrum needs at least two samples")
        if intensities.shape != energies.shape:
            raise ValueError("energies and intensities differ in length")
        if np.any(np.diff(energies) <= 0):
            raise ValueError("energies must be strictly ascending")
        if not (np.all(np.isfinite(energies)) and np.all(np.isfinite(intensities))):
            raise ValueError("spectrum values must be finite")


@dataclass(frozen=True)
class VoigtPeak:
    """One Voigt component: center and widths in ueV, amplitude in area units."""

    center: float
    fwhm_lorentz: float
    fwhm_gauss: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.fwhm_lorentz < 0 or self.fwhm_gauss < 0:
            raise ValueError("widths must be >= 0")
        if self.fwhm_lorentz == 0 and self.fwhm_gauss == 0:
            raise ValueError("Lorentzian and Gaussian widths cannot both be zero")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")


def voigt(x, peak: VoigtPeak):
    """Voigt profile scaled by peak.amplitude (unit area at amplitude 1).

    Evaluated through the Faddeeva function, with the exact Lorentzian and
    Gaussian limits when one width vanishes.
    """
    x = np.asarray(x, dtype=float)
    dx = x - peak.center
    gamma = 0.5 * peak.fwhm_lorentz
    sigma = peak.fwhm_gauss / _FWHM_TO_SIGMA
    if peak.fwhm_gauss == 0:
        profile = gamma / (np.pi * (dx * dx + gamma * gamma))
    elif peak.fwhm_lorentz == 0:
        profile = np.exp(-0.5 * (dx / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    else:
        z = (dx + 1j * gamma) / (sigma * math.sqrt(2.0))
        profile = wofz(z).real / (sigma * math.sqrt(2 * math.pi))
    return peak.amplitude * profile


def rabi_frequency(g: float, delta: float) -> float:
    """Oscillation energy scale sqrt(g^2 + delta^2/4) in ueV (damping ignored)."""
    if g < 0:
        raise ValueError(f"coupling must be >= 0, got {g}")
    return math.sqrt(g * g + 0.25 * delta * delta)


def rabi_period(g: float, delta: float) -> float:
    """Oscillation period pi*hbar/Omega in ps."""
    omega = rabi_frequency(g, delta)
    if omega == 0:
        return math.inf
    return math.pi * HBAR_UEV_PS / omega


def polariton_energies(e_qd: float, e_cav: float, g: float) -> tuple[float, float]:
    """Dressed-state branch energies (E_minus, E_plus) in ueV.

    E+- = (E_qd + E_cav)/2 +- sqrt(g^2 + delta^2/4) with delta = E_cav - E_qd,
    so the branch splitting always equals 2*rabi_frequency(g, delta).
    """
    if not (np.isfinite(e_qd) and np.isfinite(e_cav) and np.isfinite(g)):
        raise ValueError("inputs must be finite")
    mid = 0.5 * (e_qd + e_cav)
    omega = rabi_frequency(g, e_cav - e_qd)
    return mid - omega, mid + omega


def _voigt_fwhm_to_lorentz(total_fwhm: float, fwhm_gauss: float) -> float:
    """Invert the Olivero-Longbothum width formula for the Lorentzian part."""
    f, wg = total_fwhm, fwhm_gauss
    if f <= wg:
        return 0.1 * max(f, 1.0)
    disc = (1.0692 * f) ** 2 - 4.0 * 0.0692 * (f * f - wg * wg)
    wl = (1.0692 * f - math.sqrt(max(disc, 0.0))) / (2.0 * 0.0692)
    return max(wl, 1e-3)


def _data_fwhm(energies, intensities, baseline) -> float:
    height = np.max(intensities) - baseline
    above = intensities - baseline > 0.5 * height
    if not np.any(above):
        return float(energies[-1] - energies[0]) / 10.0
    idx = np.where(above)[0]
    return float(energies[idx[-1]] - energies[idx[0]]) or float(np.diff(energies).mean())


@dataclass(frozen=True)
class SingleVoigtResult:
    peak: VoigtPeak
    baseline: float
    q_factor: float
    fit: object


def fit_single_voigt(spec: Spectrum, fixed_fwhm_gauss: float,
                     max_iter: int = 200) -> SingleVoigtResult:
    """Fit one Voigt peak with a frozen Gaussian width, plus a constant baseline.

    Free parameters: center, Lorentzian FWHM, amplitude, baseline.  The
    quality factor is center / fwhm_lorentz.
    """
    if fixed_fwhm_gauss <= 0:
        raise ValueError(f"fixed Gaussian FWHM must be > 0, got {fixed_fwhm_gauss}")
    x, y = spec.energies, spec.intensities
    span = float(x[-1] - x[0])

    baseline0 = float(np.min(y))
    center0 = float(x[int(np.argmax(y))])
    wl0 = _voigt_fwhm_to_lorentz(_data_fwhm(x, y, baseline0), fixed_fwhm_gauss)
    height0 = float(np.max(y)) - baseline0
    unit_peak = voigt(np.array([0.0]),
                      VoigtPeak(0.0, wl0, fixed_fwhm_gauss, 1.0))[0]
    amp0 = max(height0 / unit_peak, 1e-12)

    def residual_fn(theta):
        center, wl, amp, base = theta
        model = voigt(x, VoigtPeak(center, max(wl, 1e-12), fixed_fwhm_gauss,
                                   max(amp, 0.0))) + base
        return model - y

    problem = FitProblem(
        residual_fn=residual_fn,
        theta0=np.array([center0, wl0, amp0, baseline0]),
        lower=np.array([float(x[0]), 1e-3, 0.0, -np.inf]),
        upper=np.array([float(x[-1]), span, np.inf, np.inf]),
        options=FitOptions(max_iter=max_iter),
        typical=np.array([span, max(wl0, 1.0), amp0, max(abs(baseline0), height0)]))
    result = least_squares_trf(problem)
    if not result.converged:
        raise FitConvergenceError(
            f"single-Voigt fit did not converge (status {result.status})")
    center, wl, amp, base = result.theta
    edge = 2.0 * float(np.diff(x).mean())
    if center < x[0] + edge or center > x[-1] - edge:
        raise FitConvergenceError("fitted peak sits at the spectrum edge")
    peak = VoigtPeak(center=float(center), fwhm_lorentz=float(wl),
                     fwhm_gauss=fixed_fwhm_gauss, amplitude=float(amp))
    return SingleVoigtResult(peak=peak, baseline=float(base),
                             q_factor=float(center / wl), fit=result)


def _find_triplet_centers(spec: Spectrum) -> np.ndarray:
    """Initial guesses from the three largest local maxima after light smoothing."""
    y = np.convolve(spec.intensities, np.ones(5) / 5.0, mode="same")
    x = spec.energies
    prominence = 0.02 * (np.max(y) - np.min(y))
    peaks, props = scipy.signal.find_peaks(y, prominence=prominence)
    if peaks.size >= 3:
        best = peaks[np.argsort(y[peaks])[-3:]]
        return np.sort(x[best])
    if peaks.size == 2:
        centers = np.sort(x[peaks])
        return np.array([centers[0], 0.5 * (centers[0] + centers[1]), centers[1]])
    # Merged hump: place side guesses at the half-height edges.
    center = x[int(np.argmax(y))]
    half_width = 0.5 * _data_fwhm(x, y, float(np.min(y)))
    return np.array([center - half_width, center, center + half_width])


@dataclass(frozen=True)
class TripletResult:
    peaks: tuple[VoigtPeak, VoigtPeak, VoigtPeak]  # (minus, center, plus)
    baseline: float
    splitting: float
    g: float
    fit: object


def fit_rabi_triplet(spec: Spectrum, fixed_fwhm_gauss: float,
                     fixed_center_fwhm_lorentz: float,
                     initial_centers: np.ndarray | None = None,
                     max_iter: int = 300) -> TripletResult:
    """Simultaneous three-Voigt fit of an on-resonance polariton spectrum.

    The Gaussian (spectrometer) width is shared by all three peaks; the
    middle peak is the bare-cavity line with its Lorentzian width frozen to
    the far-detuned value.  Splitting is E_plus - E_minus of the two side
    peaks and g = splitting / 2.
    """
    if fixed_fwhm_gauss <= 0:
        raise ValueError(f"fixed Gaussian FWHM must be > 0, got {fixed_fwhm_gauss}")
    if fixed_center_fwhm_lorentz <= 0:
        raise ValueError("fixed center Lorentzian FWHM must be > 0")
    x, y = spec.energies, spec.intensities
    span = float(x[-1] - x[0])

    if initial_centers is None:
        centers0 = _find_triplet_centers(spec)
    else:
        centers0 = np.sort(np.asarray(initial_centers, dtype=float))
        if centers0.size != 3:
            raise ValueError("initial_centers must hold three energies")

    baseline0 = float(np.min(y))
    wl_side0 = max(0.5 * fixed_center_fwhm_lorentz, 2.0)
    heights = np.interp(centers0, x, y) - baseline0
    heights = np.maximum(heights, 0.05 * (np.max(y) - baseline0))
    unit_side = voigt(np.array([0.0]),
                      VoigtPeak(0.0, wl_side0, fixed_fwhm_gauss, 1.0))[0]
    unit_center = voigt(np.array([0.0]),
                        VoigtPeak(0.0, fixed_center_fwhm_lorentz,
                                  fixed_fwhm_gauss, 1.0))[0]
    amps0 = heights / np.array([unit_side, unit_center, unit_side])

    def build(theta):
        c_m, c_0, c_p, wl_m, wl_p, a_m, a_0, a_p, base = theta
        minus = VoigtPeak(c_m, max(wl_m, 1e-12), fixed_fwhm_gauss, max(a_m, 0.0))
        center = VoigtPeak(c_0, fixed_center_fwhm_lorentz, fixed_fwhm_gauss,
                           max(a_0, 0.0))
        plus = VoigtPeak(c_p, max(wl_p, 1e-12), fixed_fwhm_gauss, max(a_p, 0.0))
        return (minus, center, plus), base

    def residual_fn(theta):
        (minus, center, plus), base = build(theta)
        model = voigt(x, minus) + voigt(x, center) + voigt(x, plus) + base
        return model - y

    theta0 = np.array([centers0[0], centers0[1], centers0[2],
                       wl_side0, wl_side0, amps0[0], amps0[1], amps0[2],
                       baseline0])
    amp_typ = max(float(np.max(amps0)), 1e-9)
    problem = FitProblem(
        residual_fn=residual_fn,
        theta0=theta0,
        lower=np.array([x[0], x[0], x[0], 1e-3, 1e-3, 0.0, 0.0, 0.0, -np.inf]),
        upper=np.array([x[-1], x[-1], x[-1], span, span,
                        np.inf, np.inf, np.inf, np.inf]),
        options=FitOptions(max_iter=max_iter),
        typical=np.array([span, span, span, 5.0, 5.0,
                          amp_typ, amp_typ, amp_typ,
                          max(abs(baseline0), 1e-9)]))
    result = least_squares_trf(problem)
    if not result.converged:
        raise FitConvergenceError(
            f"triplet fit did not converge (status {result.status})")

    (minus, center, plus), base = build(result.theta)
    if minus.center >= plus.center:
        raise FitConvergenceError(
            f"polariton ordering violation: E- = {minus.center:.3f} >= "
            f"E+ = {plus.center:.3f}")
    splitting = plus.center - minus.center
    return TripletResult(peaks=(minus, center, plus), baseline=float(base),
                         splitting=float(splitting), g=float(0.5 * splitting),
                         fit=result)
