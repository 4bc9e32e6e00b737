"""Detector-domain model curves and decay-curve analysis.

A physical emission trajectory becomes a measurable model curve by adding the
slowly decaying background emission of the bare cavity mode, convolving with
the Gaussian instrument response of the detection chain, and adding a
constant offset.  This module also provides the curve-analysis helpers used
on both measured and simulated data: smoothing, rebinning and FFT-based
oscillation period extraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoOscillationError

_FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class DecayCurve:
    """Uniformly binned time series: times in ps, intensity values.

    Values are typically non-negative (photons/ps for models, counts per bin
    for data) but are not forced to be, so that detrended or constructed
    signals can reuse the type.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("decay curve needs at least two samples")
        if values.shape != times.shape:
            raise ValueError(
                f"times and values differ in length: {times.shape} vs {values.shape}")
        spacing = np.diff(times)
        if spacing[0] <= 0 or np.max(np.abs(spacing - spacing[0])) > 1e-9:
            raise ValueError("time grid must be uniform and increasing (within 1e-9 ps)")
        if not np.all(np.isfinite(values)):
            raise ValueError("curve values must be finite")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class SlowComponent:
    """Bare-cavity background emission: amplitude, decay constant, offset, onset."""

    a_i: float = 0.0
    decay_ps: float = 360.0
    y0: float = 0.0
    t_onset: float = 0.0

    def __post_init__(self):
        if self.decay_ps <= 0:
            raise ValueError(f"decay constant must be > 0, got {self.decay_ps}")
        if self.a_i < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.a_i}")
        if self.y0 < 0:
            raise ValueError(f"offset must be >= 0, got {self.y0}")


def slow_component(times: np.ndarray, sc: SlowComponent) -> np.ndarray:
    """A_i * exp(-(t - t_onset)/T) for t >= t_onset, zero before the onset.

    The constant offset y0 is *not* included here; it is invariant under the
    IRF convolution and gets added at the end of :func:`compose_model`.
    """
    times = np.asarray(times, dtype=float)
    dt = times - sc.t_onset
    out = np.zeros_like(times)
    after = dt >= 0
    out[after] = sc.a_i * np.exp(-dt[after] / sc.decay_ps)
    return out


def convolve_irf(curve: DecayCurve, irf_fwhm: float) -> DecayCurve:
    """Convolve with a unit-area Gaussian instrument response of given FWHM.

    The kernel is sampled on the curve grid, truncated at +-6 sigma and
    renormalized to unit discrete sum; edges are zero-padded.
    """
    if irf_fwhm <= 0:
        raise ValueError(f"irf_fwhm must be > 0, got {irf_fwhm}")
    sigma = irf_fwhm / _FWHM_TO_SIGMA
    dt = curve.dt
    if dt > sigma:
        raise ValueError(
            f"grid spacing {dt} ps too coarse for IRF sigma {sigma:.4g} ps")
    half = int(math.ceil(6.0 * sigma / dt))
    x = np.arange(-half, half + 1) * dt
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    kernel /= kernel.sum()
    return DecayCurve(times=curve.times.copy(),
                      values=np.convolve(curve.values, kernel, mode="same"))


def compose_model(params, sc: SlowComponent, scale: float, grid,
                  irf_fwhm: float, n_max: int = 1) -> DecayCurve:
    """Full detector-domain model curve on the output grid.

    m(t) = IRF conv [ scale * (kappa/hbar) <adag a>(t) + slow_component(t) ] + y0

    starting from the ground state |G, 0> with the pump pulse of params.
    """
    from .core import HilbertSpace, pure_state_dm, G
    from .dynamics import evolve, photon_trace

    space = HilbertSpace(n_max=n_max)
    traj = evolve(pure_state_dm(space, G, 0), params, grid)
    fast = photon_trace(traj, params.kappa)
    total = scale * fast.values + slow_component(fast.times, sc)
    convolved = convolve_irf(DecayCurve(times=fast.times, values=total), irf_fwhm)
    return DecayCurve(times=convolved.times, values=convolved.values + sc.y0)


def moving_average(curve: DecayCurve, window: int) -> DecayCurve:
    """Centered boxcar mean with an odd window; edges use a truncated window."""
    n = curve.values.size
    if window % 2 == 0 or window < 1 or window > n:
        raise ValueError(f"window must be odd, >= 1 and <= {n}, got {window}")
    ones = np.ones(window)
    sums = np.convolve(curve.values, ones, mode="same")
    counts = np.convolve(np.ones(n), ones, mode="same")
    return DecayCurve(times=curve.times.copy(), values=sums / counts)


def rebin(curve: DecayCurve, factor: int) -> DecayCurve:
    """Sum counts in groups of `factor` bins; time is the left edge of a group."""
    n = curve.values.size
    if factor < 1 or not isinstance(factor, int):
        raise ValueError(f"factor must be an integer >= 1, got {factor}")
    if n % factor != 0:
        raise ValueError(f"factor {factor} does not divide curve length {n}")
    if factor == 1:
        return DecayCurve(times=curve.times.copy(), values=curve.values.copy())
    values = curve.values.reshape(n // factor, factor).sum(axis=1)
    times = curve.times[::factor].copy()
    return DecayCurve(times=times, values=values)


def extract_period(curve: DecayCurve,
                   search_band: tuple[float, float] = (40.0, 300.0)) -> float:
    """Oscillation period in ps from the FFT magnitude peak inside a band.

    Pipeline: subtract a moving-average baseline (window roughly 1.5x the
    longest searched period), keep the leading segment where the detrended
    envelope is significant (damped oscillations die out long before a decay
    curve ends, and a window centered on the dead tail would drown them),
    apply a Hann window, zero-pad 8x, locate the largest magnitude inside the
    band and refine it by three-point parabolic interpolation.  Raises
    :class:`NoOscillationError` when the in-band peak does not rise at least
    3x above the median in-band magnitude.
    """
    band_min, band_max = search_band
    if not 0 < band_min < band_max:
        raise ValueError(f"invalid search band {search_band}")
    n = curve.values.size
    if n < 64:
        raise ValueError(f"need at least 64 samples, got {n}")
    dt = curve.dt
    if band_min < 2 * dt:
        raise ValueError(
            f"band minimum {band_min} ps not resolvable at {dt} ps sampling")

    window_bins = int(round(1.5 * band_max / dt)) | 1
    largest_odd = n if n % 2 == 1 else n - 1
    window_bins = max(3, min(window_bins, largest_odd))
    detrended = curve.values - moving_average(curve, window_bins).values

    # Trim the dead tail: keep everything up to the last point where the
    # smoothed |detrended| envelope is still >= 2% of its maximum, but never
    # less than two of the longest searched periods (or 64 samples).
    env_window = max(3, int(round(0.5 * band_max / dt)) | 1)
    envelope = moving_average(
        DecayCurve(times=curve.times, values=np.abs(detrended)), env_window).values
    env_max = float(np.max(envelope))
    if env_max > 0:
        significant = np.where(envelope >= 0.02 * env_max)[0]
        n_seg = int(significant[-1]) + 1
    else:
        n_seg = n
    n_seg = max(n_seg, min(n, max(64, int(math.ceil(2.0 * band_max / dt)))))
    segment = detrended[:n_seg]

    tapered = segment * np.hanning(n_seg)
    n_fft = 8 * n_seg
    magnitude = np.abs(np.fft.rfft(tapered, n=n_fft))
    freqs = np.fft.rfftfreq(n_fft, d=dt)

    in_band = (freqs >= 1.0 / band_max) & (freqs <= 1.0 / band_min)
    if not np.any(in_band):
        raise ValueError(f"search band {search_band} outside resolvable range")
    band_idx = np.where(in_band)[0]
    k = band_idx[np.argmax(magnitude[band_idx])]

    median = np.median(magnitude[band_idx])
    if median <= 0 or magnitude[k] < 3.0 * median:
        raise NoOscillationError("no oscillation detected")

    # Parabolic refinement around the peak bin (guarded at the array ends).
    if 0 < k < magnitude.size - 1:
        y0, y1, y2 = magnitude[k - 1], magnitude[k], magnitude[k + 1]
        denom = y0 - 2.0 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    f_peak = (k + shift) / (n_fft * dt)
    return 1.0 / f_peak


def oscillation_contrast(curve: DecayCurve) -> float:
    """Contrast (p2 - d1)/(p2 + d1) of the second peak vs the first dip.

    Scans the curve after its global maximum for the first local minimum and
    the following local maximum.  Returns 0.0 when the curve has no
    oscillation after the main peak.
    """
    v = curve.values
    i_peak = int(np.argmax(v))
    i = i_peak
    n = v.size
    while i + 1 < n and v[i + 1] <= v[i]:
        i += 1
    if i + 1 >= n:
        return 0.0
    dip = v[i]
    while i + 1 < n and v[i + 1] >= v[i]:
        i += 1
    peak2 = v[i]
    if peak2 + dip <= 0 or peak2 <= dip:
        return 0.0
    return float((peak2 - dip) / (peak2 + dip))


def tail_amplitude(curve: DecayCurve, fraction: float = 0.2) -> float:
    """Mean intensity over the trailing `fraction` of the curve."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    n = curve.values.size
    start = max(0, n - int(round(fraction * n)))
    return float(np.mean(curve.values[start:]))
