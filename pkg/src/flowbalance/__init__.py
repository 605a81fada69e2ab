"""Bi-stochastic balancing of flow matrices and strong-component clustering."""
from .bistochastic import (
    BalancingError,
    ConvergenceReport,
    DivergenceKind,
    Method,
    Variant,
    bistochastic_deviation,
    bregman_divergence,
    project_affine_doubly_stochastic,
    sinkhorn_knopp,
    squared_norm_bistochastize,
)
from .flowmatrix import (
    FlowDataError,
    FlowMatrix,
    MatrixStats,
    RegionId,
    UndefinedCorrelationError,
    correlation,
    load_flows,
    load_matrix,
    matrix_power,
    matrix_stats,
    save_matrix,
)
from .graphcluster import (
    ComponentCensus,
    Dendrogram,
    IsolatedClass,
    Partition,
    ThresholdDigraph,
    component_census,
    cosmopolitan_ranking,
    cut_dendrogram,
    strong_component_hierarchy,
    strong_components,
    threshold_digraph,
    unit_entry_digraph,
    weak_components,
)
from .spectral import SpectrumError, SpectrumReport, leading_eigenvalues

__version__ = "0.1.0"
