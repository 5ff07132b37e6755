"""Energy- and charge-conserving implicit lattice scheme for U(1)-invariant
nonlinear wave and Klein-Gordon equations."""

from .errors import AdmissibilityError, ClassificationError, ConfigError, DomainError, StepFailure
from .lattice import LatticeShape, SimState, l2_norm_sq, laplacian
from .observables import ObservableRecord, apriori_check, charge, energy, energy_sv, observe
from .potential import PolynomialPotential, potential_from_config
from .stepper import SiteSolveResult, SolverParams, Stepper, compute_xi, eval_f, eval_fprime, solve_site, step, step_backward
from .wellposed import (
    StabilityReport,
    check_uniqueness_criterion,
    compute_k1,
    compute_k3_tau3,
    estimate_k2,
    lower_bound_c,
    scan_arc_inequality,
    stability_report,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError",
    "ClassificationError",
    "ConfigError",
    "DomainError",
    "StepFailure",
    "LatticeShape",
    "SimState",
    "l2_norm_sq",
    "laplacian",
    "ObservableRecord",
    "apriori_check",
    "charge",
    "energy",
    "energy_sv",
    "observe",
    "PolynomialPotential",
    "potential_from_config",
    "SiteSolveResult",
    "SolverParams",
    "Stepper",
    "compute_xi",
    "eval_f",
    "eval_fprime",
    "solve_site",
    "step",
    "step_backward",
    "StabilityReport",
    "check_uniqueness_criterion",
    "compute_k1",
    "compute_k3_tau3",
    "estimate_k2",
    "lower_bound_c",
    "scan_arc_inequality",
    "stability_report",
]
