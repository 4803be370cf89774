"""Weighted point sets: CSV ingestion, metrics, duplicate merging."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ParseError, ValidationError

METRICS = ("euclidean", "manhattan", "chebyshev")

# cdist spells the L1 metric "cityblock"
_CDIST_NAME = {"euclidean": "euclidean", "manhattan": "cityblock", "chebyshev": "chebyshev"}


@dataclass(frozen=True)
class WeightedPoint:
    """A single point with its positive multiplicity weight."""

    id: int
    coords: np.ndarray
    weight: float


@dataclass(frozen=True)
class WeightedDataset:
    """Immutable weighted point set in d dimensions.

    Attributes:
        coords: (n, d) float64 array, one row per point. Point ids are row
            indices.
        weights: (n,) float64 array of positive weights.
        metric: one of METRICS; every proximity query in the pipeline goes
            through this metric.
    """

    coords: np.ndarray
    weights: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64, copy=True)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2:
            raise ValidationError(f"coords must be 2-d, got shape {coords.shape}")
        weights = np.array(self.weights, dtype=np.float64, copy=True).ravel()
        if weights.shape[0] != coords.shape[0]:
            raise ValidationError(
                f"{coords.shape[0]} points but {weights.shape[0]} weights"
            )
        if coords.shape[0] == 0:
            raise ValidationError("dataset is empty")
        if not np.all(np.isfinite(coords)):
            raise ValidationError("coords contain non-finite values")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValidationError("weights must be finite and positive")
        if self.metric not in METRICS:
            raise ValidationError(f"unknown metric {self.metric!r}; choose from {METRICS}")
        coords.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_points(cls, points: list[WeightedPoint], metric: str = "euclidean") -> "WeightedDataset":
        coords = np.array([p.coords for p in points], dtype=np.float64)
        weights = np.array([p.weight for p in points], dtype=np.float64)
        return cls(coords, weights, metric)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def points(self) -> list[WeightedPoint]:
        return [self.point(i) for i in range(self.n)]

    def point(self, i: int) -> WeightedPoint:
        return WeightedPoint(id=int(i), coords=self.coords[i], weight=float(self.weights[i]))

    def total_weight(self) -> float:
        return float(self.weights.sum())


def distance(metric: str, x, y) -> float:
    """Distance between two points under the named metric."""
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}; choose from {METRICS}")
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValidationError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    diff = x - y
    if metric == "euclidean":
        return float(np.sqrt(np.sum(diff * diff)))
    if metric == "manhattan":
        return float(np.sum(np.abs(diff)))
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def pairwise_distances(metric: str, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """All-pairs distance matrix between rows of a and rows of b (or a itself)."""
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}; choose from {METRICS}")
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=np.float64))
    return cdist(a, b, metric=_CDIST_NAME[metric])


def load_csv(
    path,
    weight_column: str | None = None,
    drop_columns: list[str] | None = None,
    metric: str = "euclidean",
) -> WeightedDataset:
    """Read a numeric CSV into a WeightedDataset.

    The first row is treated as a header when any of its fields fails to
    parse as a number. Selecting columns by name (weight_column or
    drop_columns) requires a header. Without a weight column every point
    gets weight 1. Point ids are assigned in row order starting at 0.

    Raises:
        ParseError: malformed row (message carries the 1-based row number).
        ValidationError: empty file, missing column, or non-positive weight.
    """
    drop_columns = list(drop_columns or [])
    rows: list[list[str]] = []
    with open(path, newline="") as fh:
        for raw in csv.reader(fh):
            if raw and any(field.strip() for field in raw):
                rows.append([field.strip() for field in raw])
    if not rows:
        raise ValidationError(f"{path}: empty input file")

    header: list[str] | None = None
    if not _all_numeric(rows[0]):
        header = rows[0]
        rows = rows[1:]
        if not rows:
            raise ValidationError(f"{path}: no data rows after header")

    wanted = ([weight_column] if weight_column is not None else []) + drop_columns
    if wanted and header is None:
        raise ValidationError(f"{path}: column selection by name requires a header row")
    for name in wanted:
        if name not in header:
            raise ValidationError(f"{path}: no column named {name!r} in header {header}")

    weight_idx = header.index(weight_column) if weight_column is not None else None
    skip = {header.index(name) for name in drop_columns} if header else set()
    if weight_idx is not None:
        skip.add(weight_idx)

    n_fields = len(header) if header is not None else len(rows[0])
    coord_idx = [j for j in range(n_fields) if j not in skip]
    if not coord_idx:
        raise ValidationError(f"{path}: no coordinate columns left")

    first_data_row = 2 if header is not None else 1
    coords = np.empty((len(rows), len(coord_idx)))
    weights = np.ones(len(rows))
    for i, row in enumerate(rows):
        rownum = first_data_row + i
        if len(row) != n_fields:
            raise ParseError(f"{path}: row {rownum}: expected {n_fields} fields, got {len(row)}")
        try:
            for k, j in enumerate(coord_idx):
                coords[i, k] = float(row[j])
            if weight_idx is not None:
                weights[i] = float(row[weight_idx])
        except ValueError as exc:
            raise ParseError(f"{path}: row {rownum}: {exc}") from None
        if weights[i] <= 0:
            raise ValidationError(f"{path}: row {rownum}: non-positive weight {weights[i]}")
    return WeightedDataset(coords, weights, metric)


def _all_numeric(fields: list[str]) -> bool:
    try:
        for field in fields:
            float(field)
    except ValueError:
        return False
    return True


def dedupe(ds: WeightedDataset, return_map: bool = False):
    """Merge points with exactly equal coordinates (no tolerance).

    The surviving representative of each group is the member with the
    smallest id and carries the group's summed weight. Output order follows
    the representatives' original ids, so total weight is preserved and ids
    of distinct points keep their relative order.

    With return_map=True also returns an (n_original,) array mapping each
    original point id to the row index of its representative in the result.
    """
    _, inverse = np.unique(ds.coords, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    n_groups = int(inverse.max()) + 1
    rep = np.full(n_groups, ds.n, dtype=np.int64)
    np.minimum.at(rep, inverse, np.arange(ds.n))
    group_weight = np.bincount(inverse, weights=ds.weights, minlength=n_groups)

    order = np.argsort(rep)  # restore original id order
    rank = np.empty(n_groups, dtype=np.int64)
    rank[order] = np.arange(n_groups)

    out = WeightedDataset(ds.coords[rep[order]], group_weight[order], ds.metric)
    if return_map:
        return out, rank[inverse]
    return out
