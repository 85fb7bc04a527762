"""Hierarchical kernel matrix compression and fast direct solves.

The pipeline: partition points with a balanced spatial tree, compress the
kernel matrix into nested skeleton form (dense leaf diagonal blocks plus
low-rank sibling couplings through shared skeleton bases), then factor
the compressed operator plus a ridge term with a recursive
Sherman-Morrison-Woodbury sweep. A solve against K~ + lambda*I then costs
small dense work per tree node, which is what makes kernel ridge
regression practical well past the dense O(n^3) wall.
"""

from .compress import (
    CompressedKernel,
    CompressParams,
    Skeleton,
    apply_prolongation,
    compress,
    hss_matvec,
    sample_rows,
    skel_project,
    skeletonize_node,
)
from .errors import (
    ConfigError,
    DataFormatError,
    IllConditionedError,
    InvalidArgumentError,
    KernelSolveError,
    NotSPDError,
    SingularMatrixError,
)
from .kernels import (
    KernelSpec,
    kernel_block,
    kernel_eval,
    kernel_trace,
    median_pairwise_distance,
    min_pairwise_distance,
)
from .linalg import (
    DenseFactor,
    IDResult,
    cond1_estimate,
    dense_factor,
    dense_solve,
    pivoted_qr_id,
    solve_transposed,
)
from .oracle import dense_kernel_matrix, dense_matvec, dense_oracle
from .points import PointSet, gen_synthetic, load_points, save_points
from .rng import derive_seed, generator
from .solver import (
    HierFactor,
    LeafFactor,
    NodeFactor,
    factorize,
    krr_fit,
    krr_predict,
    solve,
    solve_many,
)
from .tree import (
    NeighborLists,
    PartitionTree,
    TreeNode,
    build_tree,
    knn,
    node_exterior,
    tree_to_json,
)

__version__ = "0.1.0"

__all__ = [
    "CompressedKernel",
    "CompressParams",
    "ConfigError",
    "DataFormatError",
    "DenseFactor",
    "HierFactor",
    "IDResult",
    "IllConditionedError",
    "InvalidArgumentError",
    "KernelSolveError",
    "KernelSpec",
    "LeafFactor",
    "NeighborLists",
    "NodeFactor",
    "NotSPDError",
    "PartitionTree",
    "PointSet",
    "SingularMatrixError",
    "Skeleton",
    "TreeNode",
    "apply_prolongation",
    "build_tree",
    "compress",
    "cond1_estimate",
    "dense_factor",
    "dense_kernel_matrix",
    "dense_matvec",
    "dense_oracle",
    "dense_solve",
    "derive_seed",
    "factorize",
    "gen_synthetic",
    "generator",
    "hss_matvec",
    "kernel_block",
    "kernel_eval",
    "kernel_trace",
    "knn",
    "krr_fit",
    "krr_predict",
    "load_points",
    "median_pairwise_distance",
    "min_pairwise_distance",
    "node_exterior",
    "pivoted_qr_id",
    "sample_rows",
    "save_points",
    "skel_project",
    "skeletonize_node",
    "solve",
    "solve_many",
    "solve_transposed",
    "tree_to_json",
]
