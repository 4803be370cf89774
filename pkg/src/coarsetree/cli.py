"""Command-line interface: dataset generation, runs, labels, scores, export.

Exit codes: 0 on success, 2 on invalid input or configuration, 1 on any
other runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coarsen import SOLVERS, build_tree, labels_at_level, load_tree, save_tree
from .dataset import METRICS, WeightedDataset, dedupe, load_csv
from .errors import CoarseTreeError, ValidationError
from .graph import build_graph
from .partition import PartitionConfig, partition
from .qubo import build_mwis_qubo, reduce_qubo, write_qubo_text
from .validity import score

CELL_SPACING = 10.0
CELL_OFFSET = 5.0


@dataclass(frozen=True)
class GridSpec:
    """Synthetic benchmark: a square (or cubic) lattice of Gaussian blobs.

    Cell (i, j) draws `samples` points from an isotropic normal centered at
    (10 i + 5, 10 j + 5), extended with a third axis for dim=3. sigma is
    the standard deviation; sigma=0 puts every sample exactly at its cell
    center.
    """

    dim: int = 2
    side: int = 10
    samples: int = 100
    sigma: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValidationError(f"dim must be 2 or 3, got {self.dim}")
        if self.side < 1 or self.samples < 1:
            raise ValidationError("side and samples must be >= 1")
        if self.sigma < 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")


def gen_grid(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sample the grid dataset; returns (coords, ground-truth cell index).

    Cells are generated in lexicographic index order and labeled by their
    flattened index, so the draw is reproducible for a given seed.
    """
    rng = np.random.default_rng(spec.seed)
    coords = np.empty((spec.side**spec.dim * spec.samples, spec.dim))
    cells = np.empty(coords.shape[0], dtype=np.int64)
    row = 0
    for flat, idx in enumerate(itertools.product(range(spec.side), repeat=spec.dim)):
        mu = CELL_SPACING * np.asarray(idx, dtype=np.float64) + CELL_OFFSET
        coords[row : row + spec.samples] = rng.normal(mu, spec.sigma, (spec.samples, spec.dim))
        cells[row : row + spec.samples] = flat
        row += spec.samples
    return coords, cells


def write_grid_csv(path, coords: np.ndarray, cells: np.ndarray) -> None:
    header = [f"x{k}" for k in range(coords.shape[1])] + ["cell"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for point, cell in zip(coords, cells):
            writer.writerow([repr(float(v)) for v in point] + [int(cell)])


def _load_dataset(args) -> WeightedDataset:
    return load_csv(
        args.input,
        weight_column=args.weight_column,
        drop_columns=args.drop_column,
        metric=getattr(args, "metric", "euclidean"),
    )


def cmd_gen_grid(args) -> int:
    spec = GridSpec(args.dim, args.side, args.samples, args.sigma, args.seed)
    coords, cells = gen_grid(spec)
    write_grid_csv(args.out, coords, cells)
    print(f"wrote {coords.shape[0]} points ({spec.side**spec.dim} cells) to {args.out}")
    return 0


def cmd_run(args) -> int:
    ds = _load_dataset(args)

    def report(level, epsilon, n_nodes, seconds):
        print(f"level {level}: epsilon={epsilon:.6g} nodes={n_nodes} elapsed={seconds:.3f}s")

    tree = build_tree(
        ds,
        eps0=args.eps0,
        alpha=args.alpha,
        kappa=args.kappa,
        solver=args.solver,
        seed=args.seed,
        max_levels=args.max_levels,
        use_centroids=not args.representatives,
        threads=args.threads,
        anneal_sweeps=args.sweeps,
        anneal_restarts=args.restarts,
        collapse_fraction=args.collapse_fraction,
        on_level=report,
    )
    save_tree(tree, args.out)
    print(
        f"{tree.status}: {tree.n_levels} levels, {tree.n_nodes} nodes, "
        f"eps0={tree.params['eps0']:.6g}, tree written to {args.out}"
    )
    return 0


def cmd_labels(args) -> int:
    tree = load_tree(args.tree)
    assignment = labels_at_level(tree, args.level)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["point_id", "label"])
        for point_id, label in enumerate(assignment.labels):
            writer.writerow([point_id, int(label)])
    print(f"wrote {assignment.labels.size} labels ({assignment.n_clusters} clusters) to {args.out}")
    return 0


def _read_labels_csv(path, n_points: int) -> np.ndarray:
    labels = np.full(n_points, -1, dtype=np.int64)
    seen = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head is None:
            raise ValidationError(f"{path}: empty labels file")
        for row in reader:
            if not row:
                continue
            point_id, label = int(row[0]), int(row[1])
            if not 0 <= point_id < n_points:
                raise ValidationError(f"{path}: point id {point_id} out of range")
            labels[point_id] = label
            seen += 1
    if seen != n_points:
        raise ValidationError(f"{path}: {seen} labels for {n_points} points")
    return labels


def cmd_score(args) -> int:
    ds = _load_dataset(args)
    names = (
        ["calinski-harabasz", "davies-bouldin"] if args.which == "both" else [args.which]
    )
    sweeping = False
    if args.labels is not None:
        labelings = [_read_labels_csv(args.labels, ds.n)]
    else:
        tree = load_tree(args.tree)
        if tree.point_leaf.size != ds.n:
            raise ValidationError(
                f"tree was built on {tree.point_leaf.size} points, dataset has {ds.n}"
            )
        sweeping = args.level is None
        wanted = range(tree.n_levels) if sweeping else [args.level]
        labelings = [labels_at_level(tree, lvl).labels for lvl in wanted]
    for labels in labelings:
        for name in names:
            try:
                report = score(ds, labels, name)
            except ValidationError as exc:
                if not sweeping:  # an explicitly requested score must not fail silently
                    raise
                print(f"skipped {name}: {exc}", file=sys.stderr)
                continue
            print(f"{report.name},{report.value:.12g},{report.n_clusters}")
    return 0


def cmd_export_qubo(args) -> int:
    ds = dedupe(_load_dataset(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    chunks = partition(ds, np.arange(ds.n), PartitionConfig(args.kappa))
    for index, chunk in enumerate(chunks):
        problem = build_mwis_qubo(build_graph(ds, chunk, args.epsilon), gamma=args.gamma)
        if args.reduce:
            problem = reduce_qubo(problem)
        write_qubo_text(problem, out_dir / f"chunk_{index:04d}.qubo")
    print(f"wrote {len(chunks)} qubo files to {out_dir}")
    return 0


def _add_dataset_args(sub, with_metric: bool = True) -> None:
    sub.add_argument("--input", required=True, help="input CSV of points")
    sub.add_argument("--weight-column", default=None, help="header name of the weight column")
    sub.add_argument(
        "--drop-column",
        action="append",
        default=[],
        help="header name of a column to ignore (repeatable)",
    )
    if with_metric:
        sub.add_argument("--metric", choices=METRICS, default="euclidean")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coarsetree",
        description="Hierarchical clustering by coarsening onto separated subsets.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-grid", help="sample the Gaussian grid benchmark")
    gen.add_argument("--dim", type=int, choices=(2, 3), default=2)
    gen.add_argument("--side", type=int, default=10, help="cells along each axis")
    gen.add_argument("--samples", type=int, default=100, help="points per cell")
    gen.add_argument("--sigma", type=float, default=2.0, help="noise standard deviation")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output CSV path")
    gen.set_defaults(func=cmd_gen_grid)

    run = commands.add_parser("run", help="build a coarsening tree from a CSV")
    _add_dataset_args(run)
    run.add_argument("--out", required=True, help="output tree JSON path")
    run.add_argument("--eps0", type=float, default=None, help="starting radius (default: estimated)")
    run.add_argument(
        "--collapse-fraction",
        type=float,
        default=0.1,
        help="node fraction the estimated eps0 should collapse in the first pass",
    )
    run.add_argument("--alpha", type=float, default=1.3, help="radius growth factor")
    run.add_argument("--kappa", type=int, default=1000, help="maximum chunk size")
    run.add_argument("--solver", choices=SOLVERS, default="greedy")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--max-levels", type=int, default=64)
    run.add_argument(
        "--representatives",
        action="store_true",
        help="carry representative coordinates instead of cell centroids",
    )
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--sweeps", type=int, default=2000, help="anneal sweeps per restart")
    run.add_argument("--restarts", type=int, default=10, help="anneal restarts per chunk")
    run.set_defaults(func=cmd_run)

    labels = commands.add_parser("labels", help="extract per-point labels at a tree level")
    labels.add_argument("--tree", required=True, help="tree JSON from run")
    labels.add_argument("--level", type=int, required=True)
    labels.add_argument("--out", required=True, help="output CSV path")
    labels.set_defaults(func=cmd_labels)

    sc = commands.add_parser("score", help="validity scores for a labeling or tree")
    _add_dataset_args(sc, with_metric=False)
    group = sc.add_mutually_exclusive_group(required=True)
    group.add_argument("--labels", help="labels CSV (point_id,label)")
    group.add_argument("--tree", help="tree JSON; scores every level unless --level is given")
    sc.add_argument("--level", type=int, default=None)
    sc.add_argument(
        "--which",
        choices=("calinski-harabasz", "davies-bouldin", "both"),
        default="both",
    )
    sc.set_defaults(func=cmd_score)

    export = commands.add_parser("export-qubo", help="write chunk QUBOs as text files")
    _add_dataset_args(export)
    export.add_argument("--epsilon", type=float, required=True, help="adjacency radius")
    export.add_argument("--kappa", type=int, default=1000, help="maximum chunk size")
    export.add_argument("--gamma", type=float, default=0.1, help="penalty margin over max weight")
    export.add_argument("--reduce", action="store_true", help="pin isolated variables first")
    export.add_argument("--out", required=True, help="output directory")
    export.set_defaults(func=cmd_export_qubo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CoarseTreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
