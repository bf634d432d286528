"""Green's matrices of 2D divergence-form elliptic systems.

Construction by direct sparse solves and by time integration of the Dirichlet
heat kernel, plus a verification harness for the quantitative estimates the
construction satisfies (log bounds, decay rates, gradient integrability,
boundary decay on Lipschitz graph domains, renormalized fundamental matrix).
"""

from .coefficients import (CoefficientField, checkerboard, identity_system, laplace,
                           random_spd, skew, transpose_field, validate_ellipticity)
from .domain import (Domain, GraphProfile, build_graph_domain, compute_gamma,
                     dist_to_boundary)
from .elliptic import (DiscreteField, GreenColumn, SolveError, StiffnessOperator,
                       assemble_mass, assemble_stiffness, discrete_delta,
                       gradient_field, green_column_direct, solve_dirichlet,
                       solve_source)
from .estimates import (EstimateReport, admissible_mask, ball_lp_norm,
                        convolution_at_source, convolution_check,
                        fit_decay_exponent, fit_decay_from_samples,
                        gradient_weak_type_profile, log_bound_value,
                        min_form_bound, near_field_slope, superlevel_area,
                        symmetry_defect, verify_log_bound)
from .cli import run_config
from .config import ConfigError, RunConfig, load_config
from .fundamental import (FundamentalColumn, FundamentalEval, apply_fundamental,
                          fundamental_column, mean_oscillation_profile,
                          renormalized_fundamental)
from .heatkernel import (KernelColumn, KernelSlice, TimeGrid,
                         accumulate_time_integral, effective_gamma,
                         green_column_parabolic, heat_kernel_column,
                         kbar_norm_history, measure_decay_rate, parabolic_step,
                         truncation_time)
from .io import export_table, read_table, write_csv
from .meshing import Mesh, MeshQualityError, triangulate
from .oracles import (disk_green, disk_green_gradient, halfplane_green,
                      oracle_selfcheck)

__all__ = [
    "CoefficientField",
    "checkerboard",
    "identity_system",
    "laplace",
    "random_spd",
    "skew",
    "transpose_field",
    "validate_ellipticity",
    "Domain",
    "GraphProfile",
    "build_graph_domain",
    "compute_gamma",
    "dist_to_boundary",
    "DiscreteField",
    "GreenColumn",
    "SolveError",
    "StiffnessOperator",
    "assemble_mass",
    "assemble_stiffness",
    "discrete_delta",
    "gradient_field",
    "green_column_direct",
    "solve_dirichlet",
    "solve_source",
    "EstimateReport",
    "admissible_mask",
    "ball_lp_norm",
    "convolution_at_source",
    "convolution_check",
    "fit_decay_exponent",
    "fit_decay_from_samples",
    "gradient_weak_type_profile",
    "log_bound_value",
    "min_form_bound",
    "near_field_slope",
    "superlevel_area",
    "symmetry_defect",
    "verify_log_bound",
    "FundamentalColumn",
    "FundamentalEval",
    "apply_fundamental",
    "fundamental_column",
    "mean_oscillation_profile",
    "renormalized_fundamental",
    "KernelColumn",
    "KernelSlice",
    "TimeGrid",
    "accumulate_time_integral",
    "effective_gamma",
    "green_column_parabolic",
    "heat_kernel_column",
    "kbar_norm_history",
    "measure_decay_rate",
    "parabolic_step",
    "truncation_time",
    "Mesh",
    "MeshQualityError",
    "triangulate",
    "ConfigError",
    "RunConfig",
    "load_config",
    "export_table",
    "read_table",
    "write_csv",
    "disk_green",
    "disk_green_gradient",
    "halfplane_green",
    "oracle_selfcheck",
    "run_config",
]
