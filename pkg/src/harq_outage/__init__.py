"""Outage probability of HARQ-IR over time-correlated Nakagami-m fading.

The exact outage is a negative-multinomial mixture of product CDFs, each a
Mellin-Barnes integral; ``outage_truncated`` sums it to a chosen order with
an error bound, ``asymptotic_outage`` gives the high-SNR factorization, and
``optimize`` builds power allocation and rate selection on top of both.
"""

from .asymptotic import AsymptoticBreakdown, asymptotic_outage, correlation_factor, coding_modulation_gain
from .channel import PowerAllocation, SystemModel, derive_params, mc_outage, mc_outage_sequence
from .errors import ConvergenceError, DomainError, InfeasibleError, PoleError
from .optimize import PowerProblem, RateProblem, optimize_equal_power, optimize_power, optimize_rate
from .outage import OutageResult, outage_quasi_static, outage_truncated, truncation_bound

__version__ = "0.1.0"

__all__ = [
    "AsymptoticBreakdown",
    "ConvergenceError",
    "DomainError",
    "InfeasibleError",
    "OutageResult",
    "PoleError",
    "PowerAllocation",
    "PowerProblem",
    "RateProblem",
    "SystemModel",
    "asymptotic_outage",
    "coding_modulation_gain",
    "correlation_factor",
    "derive_params",
    "mc_outage",
    "mc_outage_sequence",
    "optimize_equal_power",
    "optimize_power",
    "optimize_rate",
    "outage_quasi_static",
    "outage_truncated",
    "truncation_bound",
]
