"""Recursive median-cut partitioning into bounded-size chunks.

Each split picks the coordinate axis of maximum variance and divides the
points into two halves of balanced cardinality at the median of that axis.
Splitting continues until every chunk holds at most kappa points, so a
partition of n points costs O(d * n * log(n / kappa)) distance-free work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import WeightedDataset
from .errors import ValidationError


@dataclass(frozen=True)
class Chunk:
    """Indices of the dataset rows (or level nodes) forming one cell."""

    member_ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.member_ids, dtype=np.int64).ravel()
        if ids.size == 0:
            raise ValidationError("chunk must be non-empty")
        if np.unique(ids).size != ids.size:
            raise ValidationError("chunk member ids must be distinct")
        ids.setflags(write=False)
        object.__setattr__(self, "member_ids", ids)

    def __len__(self) -> int:
        return int(self.member_ids.size)


@dataclass(frozen=True)
class PartitionConfig:
    kappa: int = 1000

    def __post_init__(self):
        if self.kappa < 1:
            raise ValidationError(f"kappa must be >= 1, got {self.kappa}")


def split_chunk(ds: WeightedDataset, chunk: Chunk) -> tuple[Chunk, Chunk]:
    """Split one chunk at the median of its maximum-variance axis.

    Returns halves of sizes ceil(n/2) and floor(n/2). The low half contains
    only values <= the median on the split axis, the high half only values
    >= it; points equal to the median fill the low half first, lower ids
    first. Variance ties pick the lowest axis index.
    """
    ids = chunk.member_ids
    if ids.size < 2:
        raise ValidationError("cannot split a chunk with fewer than 2 points")
    values = ds.coords[ids]
    axis = int(np.argmax(np.var(values, axis=0)))
    # stable sort keeps ascending-id order among equal values
    order = np.argsort(values[:, axis], kind="stable")
    low = (ids.size + 1) // 2
    return Chunk(np.sort(ids[order[:low]])), Chunk(np.sort(ids[order[low:]]))


def partition(ds: WeightedDataset, node_ids: np.ndarray, cfg: PartitionConfig) -> list[Chunk]:
    """Partition the given rows into chunks of at most cfg.kappa members.

    Splitting proceeds depth-first, low half first, so the resulting chunk
    order is deterministic and roughly follows the spatial sort order.
    """
    node_ids = np.asarray(node_ids, dtype=np.int64).ravel()
    if node_ids.size == 0:
        raise ValidationError("cannot partition an empty id list")
    stack = [Chunk(node_ids)]
    out: list[Chunk] = []
    while stack:
        chunk = stack.pop()
        if len(chunk) <= cfg.kappa:
            out.append(chunk)
            continue
        low, high = split_chunk(ds, chunk)
        stack.append(high)
        stack.append(low)  # popped next: depth-first, low side first
    return out
