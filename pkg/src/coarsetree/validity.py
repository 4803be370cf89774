"""Internal cluster validity scores over labeled point sets.

Both scores treat points as unweighted and use Euclidean geometry, whatever
metric drove the clustering. The between-cluster reference point is the
unweighted mean of the cluster centroids, not the global data mean, so
implementations built around the latter convention will disagree on
unbalanced clusterings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coarsen import ClusteringAssignment
from .dataset import WeightedDataset
from .errors import ValidationError


@dataclass(frozen=True)
class ScoreReport:
    name: str
    value: float
    n_clusters: int


def _cluster_matrix(ds: WeightedDataset, labels) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(labels, ClusteringAssignment):
        labels = labels.labels
    labels = np.asarray(labels).ravel()
    if labels.size != ds.n:
        raise ValidationError(f"{ds.n} points but {labels.size} labels")
    _, dense = np.unique(labels, return_inverse=True)
    return ds.coords, dense.ravel()


def calinski_harabasz(ds: WeightedDataset, labels) -> float:
    """Variance-ratio score; higher is better.

    Ratio of between-cluster dispersion (cluster sizes times squared
    centroid distances to the mean of centroids) to within-cluster
    dispersion (squared point distances to their centroid), scaled by
    (n - 1) / (n_clusters - 1).

    Requires 2 <= n_clusters < n and at least one cluster with spread;
    a zero within-cluster dispersion is an error rather than an infinite
    score.
    """
    coords, dense = _cluster_matrix(ds, labels)
    n = coords.shape[0]
    n_clusters = int(dense.max()) + 1
    if not 2 <= n_clusters < n:
        raise ValidationError(f"need 2 <= n_clusters < n, got {n_clusters} of {n}")
    sizes = np.bincount(dense)
    centroids = np.zeros((n_clusters, coords.shape[1]))
    for axis in range(coords.shape[1]):
        centroids[:, axis] = np.bincount(dense, weights=coords[:, axis]) / sizes
    center = centroids.mean(axis=0)
    between = float(sizes @ ((centroids - center) ** 2).sum(axis=1))
    within = float(((coords - centroids[dense]) ** 2).sum())
    if within == 0.0:
        raise ValidationError("zero within-cluster dispersion; score undefined")
    return (n - 1) / (n_clusters - 1) * between / within


def davies_bouldin(ds: WeightedDataset, labels) -> float:
    """Mean worst-case cluster similarity; lower is better.

    Cluster scatter is the mean (not squared) distance to the centroid;
    each cluster is scored by its worst ratio (S_i + S_j) / centroid
    distance against the other clusters. Coincident centroids are an error.
    """
    coords, dense = _cluster_matrix(ds, labels)
    n_clusters = int(dense.max()) + 1
    if n_clusters < 2:
        raise ValidationError(f"need at least 2 clusters, got {n_clusters}")
    sizes = np.bincount(dense)
    centroids = np.zeros((n_clusters, coords.shape[1]))
    for axis in range(coords.shape[1]):
        centroids[:, axis] = np.bincount(dense, weights=coords[:, axis]) / sizes
    spread = np.sqrt(((coords - centroids[dense]) ** 2).sum(axis=1))
    scatter = np.bincount(dense, weights=spread) / sizes
    diff = centroids[:, None, :] - centroids[None, :, :]
    gaps = np.sqrt((diff**2).sum(axis=2))
    off_diag = ~np.eye(n_clusters, dtype=bool)
    if np.any(gaps[off_diag] == 0.0):
        raise ValidationError("coincident cluster centroids; score undefined")
    ratios = (scatter[:, None] + scatter[None, :]) / np.where(gaps > 0, gaps, np.inf)
    ratios[~off_diag] = -np.inf
    return float(ratios.max(axis=1).mean())


def score(ds: WeightedDataset, labels, which: str) -> ScoreReport:
    """Compute one named score; which is 'calinski-harabasz' or 'davies-bouldin'."""
    if isinstance(labels, ClusteringAssignment):
        n_clusters = labels.n_clusters
    else:
        n_clusters = int(np.unique(np.asarray(labels)).size)
    if which == "calinski-harabasz":
        return ScoreReport(which, calinski_harabasz(ds, labels), n_clusters)
    if which == "davies-bouldin":
        return ScoreReport(which, davies_bouldin(ds, labels), n_clusters)
    raise ValidationError(f"unknown score {which!r}")
