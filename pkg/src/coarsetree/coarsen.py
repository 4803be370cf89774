"""Multilevel coarsening pipeline and the resulting cluster tree.

Each pass partitions the current nodes into chunks, picks a separated
subset per chunk, and collapses every node onto its nearest representative.
The radius grows geometrically between passes until a single node remains,
so the tree records a full clustering hierarchy.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import WeightedDataset, dedupe, pairwise_distances
from .errors import ValidationError
from .graph import MAX_GRAPH_SIZE, build_graph
from .mwis import IndependentSet, exact_mwis, greedy_mwis, is_eps_separated
from .partition import Chunk, PartitionConfig, partition
from .qubo import AnnealSchedule, build_mwis_qubo, decode_selection, reduce_qubo, solve_qubo_anneal

SOLVERS = ("greedy", "exact", "anneal")


@dataclass(frozen=True)
class ClusterNode:
    """One node of the cluster tree.

    members lists the ids of the nodes one level down that collapsed into
    this node; leaves have no members. A node's weight is the summed weight
    of its members (its own input weight at level 0).
    """

    id: int
    coords: np.ndarray
    weight: float
    members: list[int]
    level: int


@dataclass(frozen=True)
class ClusteringAssignment:
    """Labels for the original points at one tree level.

    labels[i] is the id of the level node whose cell point i belongs to, so
    every original point gets exactly one label.
    """

    level: int
    labels: np.ndarray
    n_clusters: int


@dataclass
class ClusterTree:
    """All nodes of a coarsening run, column-stored and globally indexed.

    Node ids are assigned level by level, so each level occupies a
    contiguous id range; levels[k] lists the ids at level k. point_leaf
    maps each original point (pre-dedupe) to its leaf node.
    """

    coords: np.ndarray
    weights: np.ndarray
    node_level: np.ndarray
    member_offsets: np.ndarray
    member_children: np.ndarray
    levels: list
    point_leaf: np.ndarray
    params: dict
    dataset_hash: str
    status: str
    level_stats: list = field(default_factory=list, repr=False)  # not serialized

    @property
    def n_nodes(self) -> int:
        return int(self.weights.size)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def root_id(self) -> int:
        return int(self.levels[-1][0])

    def members_of(self, node_id: int) -> np.ndarray:
        lo, hi = self.member_offsets[node_id], self.member_offsets[node_id + 1]
        return self.member_children[lo:hi]

    def node(self, node_id: int) -> ClusterNode:
        if not 0 <= node_id < self.n_nodes:
            raise ValidationError(f"node id {node_id} out of range")
        return ClusterNode(
            id=int(node_id),
            coords=self.coords[node_id],
            weight=float(self.weights[node_id]),
            members=[int(c) for c in self.members_of(node_id)],
            level=int(self.node_level[node_id]),
        )

    def level_weight(self, level: int) -> float:
        return float(self.weights[self.levels[level]].sum())


def _tie_break_assign(dist: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise argmin with seeded uniform draws among exact ties.

    Rows are processed in ascending order, which is ascending node id
    because chunk member lists are kept sorted.
    """
    mins = dist.min(axis=1)
    at_min = dist == mins[:, None]
    assign = np.argmax(at_min, axis=1)
    counts = at_min.sum(axis=1)
    for row in np.flatnonzero(counts > 1):
        options = np.flatnonzero(at_min[row])
        assign[row] = options[rng.integers(options.size)]
    return assign


def _collapse_arrays(coords, weights, metric, member_rows, rep_local, use_centroids, rng):
    """Collapse one chunk onto its representatives.

    member_rows are level-local row indices of the chunk, rep_local indexes
    into member_rows. Returns (new_coords, new_weights, assign) with assign
    mapping each chunk member to a representative position.
    """
    chunk_coords = coords[member_rows]
    rep_rows = member_rows[rep_local]
    dist = pairwise_distances(metric, chunk_coords, coords[rep_rows])
    assign = _tie_break_assign(dist, rng)
    chunk_weights = weights[member_rows]
    new_weights = np.bincount(assign, weights=chunk_weights, minlength=rep_local.size)
    if use_centroids:
        new_coords = np.empty((rep_local.size, coords.shape[1]))
        for axis in range(coords.shape[1]):
            new_coords[:, axis] = np.bincount(
                assign, weights=chunk_weights * chunk_coords[:, axis], minlength=rep_local.size
            )
        new_coords /= new_weights[:, None]
    else:
        new_coords = coords[rep_rows].copy()
    return new_coords, new_weights, assign


def _group_members(member_rows: np.ndarray, assign: np.ndarray, n_groups: int) -> list:
    order = np.argsort(assign, kind="stable")  # keeps ascending ids per group
    sizes = np.bincount(assign, minlength=n_groups)
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    grouped = member_rows[order]
    return [grouped[bounds[k] : bounds[k + 1]] for k in range(n_groups)]


def collapse_chunk(
    ds: WeightedDataset,
    chunk,
    reps: IndependentSet,
    epsilon: float,
    use_centroids: bool = True,
    rng=None,
    level: int = 1,
    id_start: int = 0,
) -> list[ClusterNode]:
    """Collapse a chunk onto a separated representative subset.

    reps holds chunk-local vertex indices, as produced by the solvers on
    the chunk's graph. Every chunk member is assigned to its nearest
    representative (equidistant ties drawn uniformly from the seeded rng,
    in ascending member order), and each representative becomes a new node
    carrying its cell's total weight. Node coordinates are the weighted
    centroid of the cell, or the representative's own coordinates when
    use_centroids is false.
    """
    member_rows = np.asarray(getattr(chunk, "member_ids", chunk), dtype=np.int64).ravel()
    rep_local = np.asarray(reps.vertex_ids, dtype=np.int64).ravel()
    if rep_local.size == 0:
        raise ValidationError("need at least one representative")
    if rep_local.min() < 0 or rep_local.max() >= member_rows.size:
        raise ValidationError("representative index outside the chunk")
    if not is_eps_separated(ds, member_rows[rep_local], epsilon):
        raise ValidationError("representatives are not epsilon-separated")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    new_coords, new_weights, assign = _collapse_arrays(
        ds.coords, ds.weights, ds.metric, member_rows, rep_local, use_centroids, rng
    )
    members = _group_members(member_rows, assign, rep_local.size)
    return [
        ClusterNode(
            id=id_start + k,
            coords=new_coords[k],
            weight=float(new_weights[k]),
            members=[int(c) for c in members[k]],
            level=level,
        )
        for k in range(rep_local.size)
    ]


def _solve_chunk(g, solver, solver_seq, anneal_sweeps, anneal_restarts) -> IndependentSet:
    if solver == "greedy":
        return greedy_mwis(g, np.random.default_rng(solver_seq))
    if solver == "exact":
        return exact_mwis(g)
    problem = reduce_qubo(build_mwis_qubo(g))
    schedule = AnnealSchedule(
        sweeps=anneal_sweeps,
        restarts=anneal_restarts,
        seed=int(solver_seq.generate_state(1)[0]),
    )
    bits, _ = solve_qubo_anneal(problem, schedule)
    vertices = decode_selection(problem, bits)
    return IndependentSet(vertices, float(g.weights[list(vertices)].sum()))


def _coarsen_arrays(
    coords,
    weights,
    metric,
    epsilon,
    kappa,
    solver,
    seed,
    level_index,
    use_centroids,
    threads,
    anneal_sweeps,
    anneal_restarts,
):
    level_ds = WeightedDataset(coords, weights, metric)
    chunks = partition(level_ds, np.arange(level_ds.n), PartitionConfig(kappa))

    def run_chunk(c: int):
        chunk = chunks[c]
        g = build_graph(level_ds, chunk, epsilon)
        solver_seq, tie_seq = np.random.SeedSequence(
            entropy=seed, spawn_key=(level_index, c)
        ).spawn(2)
        reps = _solve_chunk(g, solver, solver_seq, anneal_sweeps, anneal_restarts)
        rep_local = np.asarray(reps.vertex_ids, dtype=np.int64)
        return _collapse_arrays(
            coords,
            weights,
            metric,
            chunk.member_ids,
            rep_local,
            use_centroids,
            np.random.default_rng(tie_seq),
        ) + (chunk.member_ids,)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, range(len(chunks))))
    else:
        results = [run_chunk(c) for c in range(len(chunks))]

    new_coords = np.concatenate([r[0] for r in results])
    new_weights = np.concatenate([r[1] for r in results])
    members: list[np.ndarray] = []
    for rep_coords, rep_weights, assign, member_rows in results:
        members.extend(_group_members(member_rows, assign, rep_weights.size))
    return new_coords, new_weights, members


def coarsen_level(
    nodes: list[ClusterNode],
    epsilon: float,
    kappa: int,
    solver: str = "greedy",
    seed: int = 0,
    use_centroids: bool = True,
    metric: str = "euclidean",
    threads: int = 1,
    anneal_sweeps: int = 2000,
    anneal_restarts: int = 10,
) -> list[ClusterNode]:
    """Run one coarsening pass over a list of same-level nodes.

    Returns the next level's nodes; their members reference the input
    nodes' ids and ids continue after the largest input id. Total weight is
    conserved.
    """
    if solver not in SOLVERS:
        raise ValidationError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    if not nodes:
        raise ValidationError("need at least one node")
    coords = np.array([n.coords for n in nodes], dtype=np.float64)
    weights = np.array([n.weight for n in nodes], dtype=np.float64)
    input_ids = np.array([n.id for n in nodes], dtype=np.int64)
    level = nodes[0].level
    level_index = level + 1
    new_coords, new_weights, members = _coarsen_arrays(
        coords, weights, metric, epsilon, kappa, solver, seed, level_index,
        use_centroids, threads, anneal_sweeps, anneal_restarts,
    )
    id_start = int(input_ids.max()) + 1
    return [
        ClusterNode(
            id=id_start + k,
            coords=new_coords[k],
            weight=float(new_weights[k]),
            members=[int(input_ids[c]) for c in members[k]],
            level=level_index,
        )
        for k in range(new_weights.size)
    ]


def estimate_eps0(ds: WeightedDataset, fraction: float = 0.1, seed: int = 0) -> float:
    """Starting radius that collapses roughly the given fraction of nodes.

    Estimated as the fraction-quantile of nearest-neighbor distances over a
    sample of at most 1024 points: that many points then see a neighbor
    inside the radius and get absorbed in the first pass.
    """
    if not 0 < fraction <= 1:
        raise ValidationError(f"fraction must be in (0, 1], got {fraction}")
    if ds.n < 2:
        return 1.0
    rng = np.random.default_rng(seed)
    size = min(ds.n, 1024)
    sample = rng.choice(ds.n, size=size, replace=False) if size < ds.n else np.arange(ds.n)
    dist = pairwise_distances(ds.metric, ds.coords[sample])
    np.fill_diagonal(dist, np.inf)
    nearest = dist.min(axis=1)
    value = float(np.quantile(nearest, fraction))
    if value <= 0:
        positive = nearest[nearest > 0]
        value = float(positive.min()) if positive.size else 1.0
    return value


def build_tree(
    ds: WeightedDataset,
    eps0: float | None = None,
    alpha: float = 1.3,
    kappa: int = 1000,
    solver: str = "greedy",
    seed: int = 0,
    max_levels: int = 64,
    use_centroids: bool = True,
    threads: int = 1,
    anneal_sweeps: int = 2000,
    anneal_restarts: int = 10,
    collapse_fraction: float = 0.1,
    on_level=None,
) -> ClusterTree:
    """Build the full coarsening tree for a dataset.

    Exact duplicates are merged first (summed weights), and the merged
    points become the level-0 leaves. Each pass collapses with the current
    radius, then the radius grows by alpha, until one node remains or
    max_levels passes ran (the latter sets status "max_levels_reached" and
    warns). eps0=None picks the starting radius via estimate_eps0.

    on_level, when given, is called after each pass with
    (level_index, epsilon, n_nodes, seconds).
    """
    if solver not in SOLVERS:
        raise ValidationError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    if alpha <= 1:
        raise ValidationError(f"alpha must exceed 1, got {alpha}")
    if not 2 <= kappa <= MAX_GRAPH_SIZE:
        raise ValidationError(f"kappa must be in [2, {MAX_GRAPH_SIZE}], got {kappa}")
    if max_levels < 1:
        raise ValidationError(f"max_levels must be >= 1, got {max_levels}")
    if eps0 is not None and eps0 <= 0:
        raise ValidationError(f"eps0 must be positive, got {eps0}")
    if threads < 1:
        raise ValidationError(f"threads must be >= 1, got {threads}")

    digest = hashlib.sha256()
    digest.update(ds.coords.tobytes())
    digest.update(ds.weights.tobytes())
    digest.update(ds.metric.encode())
    dataset_hash = "sha256:" + digest.hexdigest()

    deduped, point_leaf = dedupe(ds, return_map=True)
    if eps0 is None:
        eps0 = estimate_eps0(deduped, collapse_fraction, seed)

    coords_blocks = [deduped.coords]
    weights_blocks = [deduped.weights]
    child_counts: list[int] = [0] * deduped.n
    children_blocks: list[np.ndarray] = []
    levels = [np.arange(deduped.n, dtype=np.int64)]
    level_stats = []

    current_ids = levels[0]
    current_coords = deduped.coords
    current_weights = deduped.weights
    next_id = deduped.n
    epsilon = float(eps0)
    level_index = 1
    while current_ids.size > 1 and level_index <= max_levels:
        started = time.perf_counter()
        new_coords, new_weights, members = _coarsen_arrays(
            current_coords, current_weights, ds.metric, epsilon, kappa, solver,
            seed, level_index, use_centroids, threads, anneal_sweeps, anneal_restarts,
        )
        ids = np.arange(next_id, next_id + new_weights.size, dtype=np.int64)
        coords_blocks.append(new_coords)
        weights_blocks.append(new_weights)
        for local_members in members:
            child_counts.append(len(local_members))
            children_blocks.append(current_ids[local_members])
        levels.append(ids)
        elapsed = time.perf_counter() - started
        level_stats.append((level_index, epsilon, int(ids.size), elapsed))
        if on_level is not None:
            on_level(level_index, epsilon, int(ids.size), elapsed)
        next_id += new_weights.size
        current_ids = ids
        current_coords = new_coords
        current_weights = new_weights
        epsilon *= alpha
        level_index += 1

    status = "collapsed" if current_ids.size == 1 else "max_levels_reached"
    if status == "max_levels_reached":
        warnings.warn(
            f"stopped at max_levels={max_levels} with {current_ids.size} nodes left",
            stacklevel=2,
        )

    offsets = np.zeros(len(child_counts) + 1, dtype=np.int64)
    np.cumsum(child_counts, out=offsets[1:])
    children = (
        np.concatenate(children_blocks) if children_blocks else np.zeros(0, dtype=np.int64)
    )
    params = {
        "eps0": float(eps0),
        "alpha": float(alpha),
        "kappa": int(kappa),
        "solver": solver,
        "seed": int(seed),
        "max_levels": int(max_levels),
        "use_centroids": bool(use_centroids),
        "metric": ds.metric,
        "anneal_sweeps": int(anneal_sweeps),
        "anneal_restarts": int(anneal_restarts),
    }
    return ClusterTree(
        coords=np.concatenate(coords_blocks),
        weights=np.concatenate(weights_blocks),
        node_level=np.concatenate(
            [np.full(ids.size, k, dtype=np.int64) for k, ids in enumerate(levels)]
        ),
        member_offsets=offsets,
        member_children=children,
        levels=levels,
        point_leaf=point_leaf,
        params=params,
        dataset_hash=dataset_hash,
        status=status,
        level_stats=level_stats,
    )


def labels_at_level(tree: ClusterTree, level: int) -> ClusteringAssignment:
    """Label every original point with its ancestor node id at the level."""
    if not 0 <= level < tree.n_levels:
        raise ValidationError(
            f"level {level} out of range; tree has levels 0..{tree.n_levels - 1}"
        )
    node_label = np.full(tree.n_nodes, -1, dtype=np.int64)
    ids = tree.levels[level]
    node_label[ids] = ids
    for lvl in range(level, 0, -1):
        lvl_ids = tree.levels[lvl]
        # a level's nodes are contiguous in id order, so their member rows
        # form one contiguous slice of the children array
        lo = tree.member_offsets[lvl_ids[0]]
        hi = tree.member_offsets[lvl_ids[-1] + 1]
        counts = np.diff(tree.member_offsets[lvl_ids[0] : lvl_ids[-1] + 2])
        node_label[tree.member_children[lo:hi]] = np.repeat(node_label[lvl_ids], counts)
    leaf_labels = node_label[tree.levels[0]]
    return ClusteringAssignment(
        level=level,
        labels=leaf_labels[tree.point_leaf],
        n_clusters=int(tree.levels[level].size),
    )


def save_tree(tree: ClusterTree, path) -> None:
    """Serialize a tree to JSON (stable layout, byte-identical across runs)."""
    nodes = []
    for node_id in range(tree.n_nodes):
        nodes.append(
            {
                "id": node_id,
                "level": int(tree.node_level[node_id]),
                "coords": [float(c) for c in tree.coords[node_id]],
                "weight": float(tree.weights[node_id]),
                "member_ids": [int(c) for c in tree.members_of(node_id)],
            }
        )
    payload = {
        "format": "coarsetree-v1",
        "metadata": {
            "params": tree.params,
            "dataset_hash": tree.dataset_hash,
            "n_levels": tree.n_levels,
            "n_points": int(tree.point_leaf.size),
            "status": tree.status,
            "point_leaf": [int(i) for i in tree.point_leaf],
        },
        "nodes": nodes,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, separators=(",", ":"))
        fh.write("\n")


def load_tree(path) -> ClusterTree:
    """Rebuild a ClusterTree from its JSON serialization."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "coarsetree-v1":
        raise ValidationError(f"{path}: not a coarsetree tree file")
    nodes = payload["nodes"]
    meta = payload["metadata"]
    n = len(nodes)
    if n == 0:
        raise ValidationError(f"{path}: tree has no nodes")
    if [node["id"] for node in nodes] != list(range(n)):
        raise ValidationError(f"{path}: node ids must be 0..n-1 in order")
    dim = len(nodes[0]["coords"])
    coords = np.array([node["coords"] for node in nodes], dtype=np.float64).reshape(n, dim)
    weights = np.array([node["weight"] for node in nodes], dtype=np.float64)
    node_level = np.array([node["level"] for node in nodes], dtype=np.int64)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum([len(node["member_ids"]) for node in nodes], out=offsets[1:])
    children = np.array(
        [c for node in nodes for c in node["member_ids"]], dtype=np.int64
    )
    n_levels = int(meta["n_levels"])
    levels = [np.flatnonzero(node_level == k).astype(np.int64) for k in range(n_levels)]
    return ClusterTree(
        coords=coords,
        weights=weights,
        node_level=node_level,
        member_offsets=offsets,
        member_children=children,
        levels=levels,
        point_leaf=np.array(meta["point_leaf"], dtype=np.int64),
        params=dict(meta["params"]),
        dataset_hash=str(meta["dataset_hash"]),
        status=str(meta["status"]),
    )
