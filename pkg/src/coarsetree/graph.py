"""Proximity graphs: two points are adjacent iff their distance is < epsilon.

Adjacency is strict, so a pair at distance exactly epsilon is NOT connected.
Graphs are built per chunk and stay small (kappa <= 4096), so a dense
boolean matrix is used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import WeightedDataset, pairwise_distances
from .errors import ValidationError

MAX_GRAPH_SIZE = 4096


@dataclass(frozen=True)
class NeighborhoodGraph:
    """Undirected proximity graph over one chunk.

    Attributes:
        epsilon: the adjacency radius.
        adjacency: (n, n) symmetric boolean matrix, zero diagonal.
        weights: (n,) positive vertex weights.
        vertex_ids: ids of the underlying dataset rows, so graph-local
            vertex v corresponds to row vertex_ids[v].
    """

    epsilon: float
    adjacency: np.ndarray
    weights: np.ndarray
    vertex_ids: np.ndarray

    @property
    def n(self) -> int:
        return int(self.weights.size)

    def degree(self, v: int) -> int:
        return int(self.adjacency[v].sum())


def build_graph(ds: WeightedDataset, chunk, epsilon: float) -> NeighborhoodGraph:
    """Build the epsilon-neighborhood graph of one chunk.

    Raises ValidationError on a non-positive epsilon, an oversized chunk,
    or duplicate coordinates inside the chunk (callers dedupe first).
    """
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    ids = np.asarray(getattr(chunk, "member_ids", chunk), dtype=np.int64).ravel()
    if ids.size > MAX_GRAPH_SIZE:
        raise ValidationError(f"chunk of {ids.size} exceeds the graph size cap {MAX_GRAPH_SIZE}")
    dist = pairwise_distances(ds.metric, ds.coords[ids])
    off_diag = ~np.eye(ids.size, dtype=bool)
    if np.any(dist[off_diag] == 0.0):
        raise ValidationError("chunk contains duplicate coordinates; dedupe the data first")
    adjacency = (dist < epsilon) & off_diag
    adjacency.setflags(write=False)
    weights = ds.weights[ids].copy()
    weights.setflags(write=False)
    ids = ids.copy()
    ids.setflags(write=False)
    return NeighborhoodGraph(float(epsilon), adjacency, weights, ids)


def weighted_degree(g: NeighborhoodGraph, v: int) -> float:
    """Neighborhood weight of v divided by its own weight."""
    if not 0 <= v < g.n:
        raise ValidationError(f"vertex {v} out of range for graph of size {g.n}")
    return float(g.adjacency[v] @ g.weights) / float(g.weights[v])


def average_weighted_degree(g: NeighborhoodGraph) -> float:
    """Weighted mean of the weighted degrees, weights summing over vertices."""
    per_vertex = (g.adjacency @ g.weights) / g.weights
    return float(g.weights @ per_vertex) / float(g.weights.sum())
