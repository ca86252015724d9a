"""Martingale approximations for causal processes: simulation, dependence
measures, decompositions and Monte Carlo checks of moment and almost-sure
bounds."""

from .coefficients import CoefficientKind, CoefficientSequence
from .config import ExperimentConfig, load_config, parse_config
from .coupling import CoupledWindow, CouplingKind, coupled_g_values, coupled_h_values
from .dependence import (
    DependenceProfile,
    build_profiles,
    check_condition,
    estimate_alpha,
    estimate_beta,
    estimate_omega,
    fit_gmc,
    profile_from_coefficients,
    theta_sandwich,
)
from .errors import ConditionFailure, ConfigError, HorizonLimitedError, UnsupportedMomentError
from .innovations import Family, IndexedInnovationStream, InnovationSpec
from .martingale import (
    b_q,
    linear_decomposition,
    nested_decomposition,
    rhs_eq1,
    rhs_eq3,
    rhs_eq4,
    xi_n,
)
from .models import (
    IteratedRandomFunction,
    Kernel,
    LinearDependentInnovations,
    LinearIID,
    LipschitzTransform,
    Transform,
    generate_path,
    generate_paths,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientKind", "CoefficientSequence", "ExperimentConfig", "load_config", "parse_config",
    "CoupledWindow", "CouplingKind", "coupled_g_values", "coupled_h_values",
    "DependenceProfile", "build_profiles", "check_condition", "estimate_alpha", "estimate_beta",
    "estimate_omega", "fit_gmc", "profile_from_coefficients", "theta_sandwich",
    "ConditionFailure", "ConfigError", "HorizonLimitedError", "UnsupportedMomentError",
    "Family", "IndexedInnovationStream", "InnovationSpec",
    "b_q", "linear_decomposition", "nested_decomposition", "rhs_eq1", "rhs_eq3", "rhs_eq4", "xi_n",
    "IteratedRandomFunction", "Kernel", "LinearDependentInnovations", "LinearIID",
    "LipschitzTransform", "Transform", "generate_path", "generate_paths",
]
