"""Photon-counting readout of a single trapped atom.

Counting statistics with a bright-to-dark transition, Monte Carlo trial
records, time-resolved fidelity analysis, fits of the bright-state error
and a rate-equation model of optical pumping during the probe.
"""
from .analysis import (FidelityCurve, OperatingPoint, error_curves, error_curves_from_stream,
                       histogram_at, optimal_operating_point, retention_rate, wilson_interval)
from .counting import (BrightModel, CountPMF, RateSet, bright_error, dark_error, model_fidelity,
                       p_bright_closed, p_no_transition, p_total, p_with_transition,
                       peak_fidelity, total_pmf)
from .exceptions import (AnalysisError, ConfigError, DataError, DegenerateParameterError,
                         DomainError, FitError, IntegrationError, QuadratureError)
from .fitting import FitResult, confidence_band, fit_bright_error, fit_report
from .io import RunConfig, iter_trials, load_trials, save_trials
from .simulation import PrepState, SimConfig, TrialRecord, simulate_dataset

__version__ = "0.1.0"
