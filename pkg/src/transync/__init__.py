"""Transformation synchronisation and generalised Procrustes analysis.

Noisy pairwise transforms between ``k`` objects are made transitively
consistent by extracting the null space of ``W - k I`` (``W`` the stacked
pairwise matrices), then optionally projected onto similarity, euclidean
or rigid transforms.  The same machinery aligns many landmark shapes at
once from all pairwise absolute-orientation solutions.
"""

from transync.errors import (
    ConfigError,
    ContractError,
    DegenerateCloudError,
    DegenerateSolutionError,
    IncompleteSetError,
    InfeasibleDrawError,
    SingularTransformError,
    TransyncError,
    UnderdeterminedError,
)
from transync.kernels import BACKEND
from transync.procrustes import (
    GpaMethod,
    GpaOutcome,
    PointCloud,
    apply,
    gpa_iterative_mean,
    gpa_reference,
    gpa_sync,
    shape_error,
    solve_aop,
)
from transync.sync import (
    PairwiseTransformSet,
    SyncResult,
    append_homogeneous_row,
    build_z,
    consistency_residual,
    extract_null_basis,
    fix_gauge,
    reconstruct_pairwise,
    synchronise,
)
from transync.transform import (
    Kind,
    ScaleMode,
    SimilarityParts,
    Transform,
    TransformClass,
    compose,
    decompose_similarity,
    identity,
    invert,
    project_class,
    project_orthogonal,
    scale_arithmetic,
    scale_geometric,
)

__version__ = "0.1.0"
