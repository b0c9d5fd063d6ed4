"""Cahn-Hilliard flows with a non-convex potential and their Stefan limit.

Spectral solvers on the unit torus, the convex envelope machinery they
rely on, well-prepared initial data, and numerical audits of the eps -> 0
limit.
"""

from .analysis import (AuditReport, ConvergenceTable, EmpiricalYoungMeasure, audit_correlation,
                       audit_support_dichotomy, convergence_study, convergence_verdict,
                       gamma_liminf_probe, neighborhood_audit, oscillation_audit, young_measure)
from .dynamics import (SolverConfig, SolverError, Trajectory, dissipation_residual,
                       run_cahn_hilliard, run_stefan)
from .energy import (EnergyReport, chemical_potential, energy_eps, energy_report, energy_star,
                     slope_eps, slope_star)
from .field import PeriodicField, h_minus1_norm
from .potential import PotentialModel, build_custom, build_double_well, omega, psi
from .preparation import RecoveryPlan, classify_regions, prepare_recovery, wrinkle

__all__ = [
    "AuditReport", "ConvergenceTable", "EmpiricalYoungMeasure", "EnergyReport", "PeriodicField",
    "PotentialModel", "RecoveryPlan", "SolverConfig", "SolverError", "Trajectory",
    "audit_correlation", "audit_support_dichotomy", "build_custom", "build_double_well",
    "chemical_potential", "classify_regions", "convergence_study", "convergence_verdict",
    "dissipation_residual", "energy_eps", "energy_report", "energy_star", "gamma_liminf_probe",
    "h_minus1_norm", "neighborhood_audit", "omega", "oscillation_audit", "prepare_recovery", "psi",
    "run_cahn_hilliard", "run_stefan", "slope_eps", "slope_star", "wrinkle", "young_measure",
]
__version__ = "0.1.0"
