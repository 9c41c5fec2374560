"""Simulator and verification workbench for the two-parameter generalized
Chinese restaurant process (GCRP).

The package simulates the partition-valued chain at scale, computes its
exact martingale decompositions and closed-form normalizing constants, and
confronts the finite-n concentration statements for the number of parts and
the size-class counts with Monte Carlo evidence (see README.md).
"""

from .engine import SimConfig, Trajectory, default_checkpoints, simulate
from .errors import CapExceeded, DomainError, GcrpError, IllegalMove, InvalidRegime
from .model import (
    JoinSize,
    ModelParams,
    NEW_PART,
    NewPart,
    Regime,
    SizeClassState,
    TransitionLaw,
    apply_move,
    initial_state,
    transition_law,
    validate_params,
)
from .normalizers import (
    CoefficientSeries,
    ConstantsTable,
    coefficients,
    compute_constants,
    f_n_k,
    k_epsilon_n,
    log_phi,
    log_psi,
    theta_inf,
    theta_seq_1,
    theta_seq_V,
)

__version__ = "0.1.0"

__all__ = [
    "CapExceeded", "CoefficientSeries", "ConstantsTable", "DomainError",
    "GcrpError", "IllegalMove", "InvalidRegime", "JoinSize", "ModelParams",
    "NEW_PART", "NewPart", "Regime", "SimConfig", "SizeClassState",
    "Trajectory", "TransitionLaw", "apply_move", "coefficients",
    "compute_constants", "default_checkpoints", "f_n_k", "initial_state",
    "k_epsilon_n", "log_phi", "log_psi", "simulate", "theta_inf",
    "theta_seq_1", "theta_seq_V", "transition_law", "validate_params",
]
