"""Rough path numerics: truncated tensor algebra, signatures, CC norms, step-N schemes and experiments."""
__version__ = "0.1.0"

from .tensor_group import AlgebraShape, ShapeError, Tensor, exp, inverse, is_group_like, log, multiply
from .path_signature import PiecewiseLinearPath, RoughPathGrid, lift, path_signature
from .geodesic import GeodesicFamilyConfig, cc_norm_lower, cc_norm_upper, geodesic_family, heisenberg_cc_norm
from .euler_scheme import euler_increment, get_family
from .rde_lab import davie_rate_experiment, euler_scheme_solve, geodesic_scheme_solve, ode_solve_reference

__all__ = [
    "AlgebraShape", "ShapeError", "Tensor", "exp", "inverse", "is_group_like", "log", "multiply",
    "PiecewiseLinearPath", "RoughPathGrid", "lift", "path_signature",
    "GeodesicFamilyConfig", "cc_norm_lower", "cc_norm_upper", "geodesic_family", "heisenberg_cc_norm",
    "euler_increment", "get_family",
    "davie_rate_experiment", "euler_scheme_solve", "geodesic_scheme_solve", "ode_solve_reference",
]
