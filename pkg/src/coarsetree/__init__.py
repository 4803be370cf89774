"""Hierarchical data coarsening via maximum-weight separated subsets."""

from .coarsen import (
    ClusterNode,
    ClusterTree,
    ClusteringAssignment,
    build_tree,
    coarsen_level,
    collapse_chunk,
    estimate_eps0,
    labels_at_level,
    load_tree,
    save_tree,
)
from .dataset import (
    METRICS,
    WeightedDataset,
    WeightedPoint,
    dedupe,
    distance,
    load_csv,
    pairwise_distances,
)
from .errors import CoarseTreeError, GuardError, ParseError, ValidationError
from .graph import NeighborhoodGraph, average_weighted_degree, build_graph, weighted_degree
from .mwis import IndependentSet, exact_mwis, greedy_mwis, is_eps_dense, is_eps_separated
from .partition import Chunk, PartitionConfig, partition, split_chunk
from .qubo import (
    AnnealSchedule,
    IsingModel,
    QuboProblem,
    build_msc_qubo,
    build_mwis_qubo,
    decode_selection,
    energy,
    reduce_qubo,
    slack_coeffs,
    solve_qubo_anneal,
    solve_qubo_exact,
    to_ising,
    write_qubo_text,
)
from .validity import ScoreReport, calinski_harabasz, davies_bouldin, score

__version__ = "0.1.0"
