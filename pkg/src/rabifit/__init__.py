"""Simulation and parameter estimation for time-resolved vacuum Rabi
oscillations of a quantum dot strongly coupled to a nanocavity."""

from .core import (HBAR_UEV_PS, HilbertSpace, SystemParams, energy_to_rate,
                   kappa_from_q, hamiltonian, liouvillian_apply, expectation,
                   pure_state_dm)
from .dynamics import (TimeGrid, Trajectory, evolve, photon_trace, pump_rate,
                       single_excitation_oracle)
from .signal import (DecayCurve, SlowComponent, compose_model, convolve_irf,
                     extract_period, moving_average, rebin, slow_component)
from .spectral import (Spectrum, VoigtPeak, fit_rabi_triplet, fit_single_voigt,
                       polariton_energies, rabi_frequency, rabi_period, voigt)
from .fitcore import (DecayFitParams, FitOptions, FitProblem, FitResult,
                      FrozenDecayModel, fit_decay, jacobian_fd,
                      least_squares_trf, residuals, synthesize)

__version__ = "0.1.0"
