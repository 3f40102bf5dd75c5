"""Kernel-based surrogate models of dynamical systems with verification tooling."""

from .control import (
    ControlAffineSurrogate,
    ControlDataset,
    DegenerateClusterError,
    control_error_map,
    error_diagnostic,
    fit_control_surrogate,
    sample_control_data,
)
from .geometry import (
    Box,
    build_clusters,
    chebyshev_grid,
    dist_to_cloud,
    fill_distance,
    nearest_neighbors,
    staggered_grid,
    uniform_grid,
)
from .interpolation import (
    FactorizationError,
    KernelInterpolator,
    assemble_kernel_matrix,
    native_norm,
    verify_regularizer_identities,
)
from .kernels import WendlandKernel
from .stability import (
    LyapunovSpec,
    MarginReport,
    check_decrease,
    check_powerform_transfer,
    closed_loop_check,
    margin_transfer_check,
    practical_region_estimate,
    sublevel_filter,
)
from .surrogates import (
    KoopmanSurrogate,
    check_equilibrium_preservation,
    fit_autonomous_surrogate,
    one_step_errors,
    proportionality_profile,
)
from .systems import duffing, euler_discretize, from_config, get_system, kellett

__version__ = "0.1.0"

__all__ = [
    "Box",
    "ControlAffineSurrogate",
    "ControlDataset",
    "DegenerateClusterError",
    "FactorizationError",
    "KernelInterpolator",
    "KoopmanSurrogate",
    "LyapunovSpec",
    "MarginReport",
    "WendlandKernel",
    "assemble_kernel_matrix",
    "build_clusters",
    "chebyshev_grid",
    "check_decrease",
    "check_equilibrium_preservation",
    "check_powerform_transfer",
    "closed_loop_check",
    "control_error_map",
    "dist_to_cloud",
    "duffing",
    "error_diagnostic",
    "euler_discretize",
    "fill_distance",
    "fit_autonomous_surrogate",
    "fit_control_surrogate",
    "from_config",
    "get_system",
    "kellett",
    "margin_transfer_check",
    "native_norm",
    "nearest_neighbors",
    "one_step_errors",
    "practical_region_estimate",
    "proportionality_profile",
    "sample_control_data",
    "staggered_grid",
    "sublevel_filter",
    "uniform_grid",
    "verify_regularizer_identities",
]
