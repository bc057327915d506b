"""Weight-balanced k-means with partial membership and power-diagram certificates."""
from .balanced_kmeans import (
    RunConfig,
    RunResult,
    classical_kmeans,
    init_sites,
    multi_start,
    run,
)
from .constraints import MustLinkGroups, expand_assignment, merge_must_link, within_group_dispersion
from .core import (
    Assignment,
    ClusterBounds,
    EmptyClusterError,
    InfeasibleBoundsError,
    SiteSet,
    WeightedDataset,
    centroid,
    centroids,
    objective_theta,
    shape,
    squared_error,
)
from .kernel import KernelFunction, gaussian_kernel, kernel_run, linear_kernel, polynomial_kernel
from .lp_assign import PartitionLP, build_lp, solve_vertex, weight_balanced_assignment
from .power_diagram import (
    FeasibilityCertificate,
    PowerDiagram,
    sigma_feasibility_lp,
    sigma_from_duals,
    verify_feasible,
    verify_strongly_feasible,
)

__all__ = [
    "Assignment", "ClusterBounds", "EmptyClusterError", "FeasibilityCertificate",
    "InfeasibleBoundsError", "KernelFunction", "MustLinkGroups", "PartitionLP", "PowerDiagram",
    "RunConfig", "RunResult", "SiteSet", "WeightedDataset", "build_lp", "centroid", "centroids",
    "classical_kmeans", "expand_assignment", "gaussian_kernel", "init_sites", "kernel_run",
    "linear_kernel", "merge_must_link", "multi_start", "objective_theta", "polynomial_kernel", "run",
    "shape", "sigma_feasibility_lp", "sigma_from_duals", "solve_vertex", "squared_error",
    "verify_feasible", "verify_strongly_feasible", "weight_balanced_assignment",
    "within_group_dispersion",
]
