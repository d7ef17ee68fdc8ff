"""Finite-difference laboratory for Monge-Ampere and affine mean curvature problems on convex planar domains."""

__version__ = "0.1.0"

from .amc_solver import AMCProblem, ContinuationConfig, continuation_solve, fixed_point_step, solve_linearized
from .discretization import Grid, ScalarField, cofactor, gradient, hessian, ma_determinant, ma_monotone
from .errors import *  # noqa: F401,F403
from .functional import affine_area, amc_energy, concavity_check, variational_gradient_check
from .geometry import ConvexDomain, boundary_frame, distance_to_boundary, make_domain, parallel_sets
from .ma_solver import MAProblem, SolverConfig, comparison_check, solve_dirichlet_ma
from .sections import extract_section, john_ellipsoid, shape_metrics, volume_scaling_fit

__all__ = [
    "AMCProblem", "ContinuationConfig", "continuation_solve", "fixed_point_step", "solve_linearized",
    "Grid", "ScalarField", "cofactor", "gradient", "hessian", "ma_determinant", "ma_monotone",
    "affine_area", "amc_energy", "concavity_check", "variational_gradient_check",
    "ConvexDomain", "boundary_frame", "distance_to_boundary", "make_domain", "parallel_sets",
    "MAProblem", "SolverConfig", "comparison_check", "solve_dirichlet_ma",
    "extract_section", "john_ellipsoid", "shape_metrics", "volume_scaling_fit",
]
