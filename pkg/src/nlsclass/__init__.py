"""Lie symmetries and group classification of 1+1-D nonlinear Schrodinger equations

    i psi_t + psi_xx + |psi|^gamma psi + V(t, x) psi = 0.
"""
from .classifier import ClassificationResult, StationaryConstraint, classify, classify_stationary, classify_timedep
from .equiv import (
    EquivMap,
    InfinitesimalGen,
    action_residual,
    apply_to_potential,
    compose,
    finite_infinitesimal_consistency,
    infinitesimal_action,
    invert,
    pullback,
)
from .errors import (
    ConstraintViolation,
    DomainViolation,
    NLSClassError,
    NotLaurentInX,
    ParseError,
    RankDeficientSampling,
    SingularityError,
    SnapFailure,
    TemplateRejection,
    UnknownIdentifier,
    UnregisteredInverse,
)
from .exprcore import SamplePlan, format_expr, is_zero, parse
from .invariance import AnsatzSpace, ModelParams, Potential, is_symmetry, solve_symmetries
from .liealg import VectorField, bracket, onedim_normal_form, verify_structure_constants
from .tables import ClassCase, case_catalog, get_case, verify_all, verify_case

__version__ = "0.1.0"
