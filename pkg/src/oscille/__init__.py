"""Homogenization verification toolkit for locally periodic elliptic problems.

Solve oscillatory and effective problems on structured grids, assemble
smoothed first-order correctors from periodic cell solutions, and measure
the empirical convergence rates against the guaranteed exponents.
"""

from .core import (
    BoundarySpec,
    CoefficientField,
    Scenario,
    audit_ellipticity,
    preset_coefficient,
    tau_eps,
)
from .study import ConvergenceReport, RateTarget, fit_rate, run_study, verdict

__all__ = [
    "BoundarySpec",
    "CoefficientField",
    "ConvergenceReport",
    "RateTarget",
    "Scenario",
    "audit_ellipticity",
    "fit_rate",
    "preset_coefficient",
    "run_study",
    "tau_eps",
    "verdict",
]

__version__ = "0.1.0"
