"""Numerical toolkit for Fourier decay of measures on limsup sets of linear forms."""

__version__ = "0.1.0"

from .bump import BumpSpec, cutoff_bump
from .dimension import (
    DimensionReport, box_counting, cover_sum, eta_estimate, fit_fourier_exponent, lambda_estimate, predict_dims,
)
from .divisors import DivisorQuery, divisor_candidates, tau, tau_sieve, wigert_sweep
from .errors import (
    BoxTooLargeError, DomainError, EmptyWindowError, InputError, InsufficientDataError, MsetExhaustedError,
    SalemError,
)
from .measure import build_measure, convergence_check, g_envelope
from .qsets import (
    HSpec, PsiSpec, QSetSpec, Scenario, certify_scenario, epsilon, load_scenario, preset_scenario, q_window,
)
from .spectrum import envelope_check, fm_eval, fm_hat, fm_hat_table, windowed_spectrum

__all__ = [
    "BoxTooLargeError", "BumpSpec", "DimensionReport", "DivisorQuery", "DomainError", "EmptyWindowError",
    "HSpec", "InputError", "InsufficientDataError", "MsetExhaustedError", "PsiSpec", "QSetSpec", "SalemError",
    "Scenario", "box_counting", "build_measure", "certify_scenario", "convergence_check", "cover_sum",
    "cutoff_bump", "divisor_candidates", "envelope_check", "epsilon", "eta_estimate", "fit_fourier_exponent",
    "fm_eval", "fm_hat", "fm_hat_table", "g_envelope", "lambda_estimate", "load_scenario", "predict_dims",
    "preset_scenario", "q_window", "tau", "tau_sieve", "wigert_sweep", "windowed_spectrum",
]
