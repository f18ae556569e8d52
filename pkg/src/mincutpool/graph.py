"""Graphs, symmetric degree normalization, synthetic generators and file IO."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError, ParseError
from .sparse import SparseMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph with node features.

    ``adjacency`` is symmetric with a zero diagonal and non-negative weights.
    """

    adjacency: SparseMatrix
    features: np.ndarray
    labels: np.ndarray | None = None
    graph_label: int | None = None

    def __post_init__(self):
        adj = self.adjacency
        if adj.shape[0] != adj.shape[1]:
            raise DataError(f"adjacency must be square, got {adj.shape}")
        if not adj.symmetric:
            raise DataError("adjacency must be flagged symmetric")
        if np.any(adj.row == adj.col):
            raise DataError("adjacency must have a zero diagonal")
        if np.any(adj.val < 0):
            raise DataError("negative edge weight")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != adj.shape[0]:
            raise DataError(f"features shape {feats.shape} does not match {adj.shape[0]} nodes")
        object.__setattr__(self, "features", feats)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (adj.shape[0],):
                raise DataError(f"{labels.shape} labels for {adj.shape[0]} nodes")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.adjacency.shape[0]

    @property
    def num_edges(self):
        """Number of undirected edges."""
        return self.adjacency.nnz // 2

    def edges(self):
        """Upper-triangle ``(i, j, w)`` triples."""
        adj = self.adjacency
        upper = adj.row < adj.col
        return list(zip(adj.row[upper].tolist(), adj.col[upper].tolist(), adj.val[upper].tolist()))

    def permuted(self, perm):
        """Graph with node ``perm[i]`` of ``self`` becoming node ``i``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        adj = self.adjacency
        new_adj = SparseMatrix(adj.shape, inv[adj.row], inv[adj.col], adj.val, symmetric=True)
        labels = None if self.labels is None else self.labels[perm]
        return Graph(new_adj, self.features[perm], labels, self.graph_label)


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """D^-1/2 A D^-1/2 together with the degrees of A and of the result."""

    matrix: SparseMatrix
    degrees: np.ndarray
    tilde_degrees: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    @cached_property
    def dense(self):
        return self.matrix.to_dense()

    @cached_property
    def degree_matrix(self):
        """D~ as a diagonal sparse matrix."""
        idx = np.arange(self.n)
        return SparseMatrix((self.n, self.n), idx, idx, self.tilde_degrees, symmetric=True)


def normalize_adjacency(g) -> NormalizedAdjacency:
    """Symmetric degree normalization; degree-0 nodes get zero rows."""
    adj = g.adjacency if isinstance(g, Graph) else g
    if np.any(adj.val < 0):
        raise DataError("negative edge weight")
    degrees = adj.row_sums()
    inv_sqrt = np.zeros_like(degrees)
    pos = degrees > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(degrees[pos])
    matrix = adj.scale_rows_cols(inv_sqrt, inv_sqrt)
    return NormalizedAdjacency(matrix, degrees, matrix.row_sums())


# ---------------------------------------------------------------- generators

def generate_community_graph(k, nodes_per_cluster, p_in, p_out, seed=None) -> Graph:
    """Stochastic block model with 2-D coordinate features.

    Cluster centers sit on the unit circle; each node's coordinates are its
    center plus Gaussian jitter with standard deviation one tenth of the
    distance between neighbouring centers.  Nodes are numbered block by block.
    """
    if k < 1 or nodes_per_cluster < 1:
        raise ParameterError("k and nodes_per_cluster must be positive")
    if not (0.0 <= p_out <= 1.0 and 0.0 <= p_in <= 1.0):
        raise ParameterError(f"probabilities must lie in [0, 1], got p_in={p_in}, p_out={p_out}")
    if not p_in > p_out:
        raise ParameterError(f"p_in must exceed p_out, got p_in={p_in}, p_out={p_out}")
    rng = np.random.default_rng(seed)
    n = k * nodes_per_cluster
    labels = np.repeat(np.arange(k), nodes_per_cluster)

    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    i, j = iu[keep], ju[keep]
    adjacency = SparseMatrix((n, n), np.concatenate([i, j]), np.concatenate([j, i]),
                             np.ones(2 * len(i)), symmetric=True)

    angles = 2 * np.pi * np.arange(k) / k
    centers = np.column_stack([np.cos(angles), np.sin(angles)])
    spacing = 2 * math.sin(math.pi / k) if k > 1 else 1.0
    features = centers[labels] + rng.normal(scale=0.1 * spacing, size=(n, 2))
    return Graph(adjacency, features, labels)


def generate_grid_graph(rows, cols) -> Graph:
    """4-neighbour lattice; features are coordinates scaled to [0, 1]^2."""
    if rows < 2 or cols < 2:
        raise ParameterError(f"grid needs at least 2x2 nodes, got {rows}x{cols}")
    ids = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.column_stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()])
    vert = np.column_stack([ids[:-1, :].ravel(), ids[1:, :].ravel()])
    pairs = np.vstack([horiz, vert])
    edges = [(int(a), int(b), 1.0) for a, b in pairs]
    adjacency = SparseMatrix.from_edges(rows * cols, edges)
    r, c = np.divmod(np.arange(rows * cols), cols)
    features = np.column_stack([c / (cols - 1), r / (rows - 1)])
    return Graph(adjacency, features)


def generate_ring_graph(n) -> Graph:
    """Cycle graph; features are points on the unit circle."""
    if n < 2:
        raise ParameterError(f"ring needs at least 2 nodes, got {n}")
    pairs = {tuple(sorted((i, (i + 1) % n))) for i in range(n)}
    adjacency = SparseMatrix.from_edges(n, [(a, b, 1.0) for a, b in sorted(pairs)])
    theta = 2 * np.pi * np.arange(n) / n
    return Graph(adjacency, np.column_stack([np.cos(theta), np.sin(theta)]))


def parse_generator(text: str, seed=None) -> Graph:
    """Build a graph from a short generator string.

    ``sbm`` (6 communities of 20 nodes, p_in 0.8, p_out 0.02),
    ``sbm:K``, ``sbm:KxM``, ``sbm:KxM:p_in:p_out``, ``grid:RxC``, ``ring:N``.
    """
    kind, _, rest = text.partition(":")
    try:
        if kind == "sbm":
            parts = rest.split(":") if rest else []
            k, per = 6, 20
            if parts and parts[0]:
                dims = parts[0].split("x")
                k = int(dims[0])
                per = int(dims[1]) if len(dims) > 1 else per
            p_in = float(parts[1]) if len(parts) > 1 else 0.8
            p_out = float(parts[2]) if len(parts) > 2 else 0.02
            return generate_community_graph(k, per, p_in, p_out, seed)
        if kind == "grid":
            r, c = (int(v) for v in rest.split("x"))
            return generate_grid_graph(r, c)
        if kind == "ring":
            return generate_ring_graph(int(rest))
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"malformed generator string {text!r}") from exc
    raise ParameterError(f"unknown generator {kind!r}")


def structural_features(g: Graph) -> np.ndarray:
    """Per-node (degree / n, local clustering coefficient) for featureless graphs."""
    a = g.adjacency.to_dense() > 0
    a = a.astype(np.float64)
    deg = a.sum(axis=1)
    triangles = np.einsum("ij,jk,ki->i", a, a, a) / 2
    possible = deg * (deg - 1) / 2
    clustering = np.divide(triangles, possible, out=np.zeros_like(deg), where=possible > 0)
    return np.column_stack([deg / max(g.n, 1), clustering])


# ---------------------------------------------------------------- native JSON format

def graph_to_dict(g: Graph) -> dict:
    out = {
        "n": g.n,
        "edges": [[i, j, w] for i, j, w in g.edges()],
        "features": g.features.tolist(),
    }
    if g.labels is not None:
        out["labels"] = g.labels.tolist()
    if g.graph_label is not None:
        out["graph_label"] = int(g.graph_label)
    return out


def graph_from_dict(data: dict) -> Graph:
    try:
        n = int(data["n"])
        raw_edges = data["edges"]
        raw_features = data["features"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"missing or malformed field: {exc}") from exc
    edges = {}
    for e in raw_edges:
        if len(e) not in (2, 3):
            raise ParseError(f"edge {e!r} must be [i, j] or [i, j, weight]")
        i, j = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) == 3 else 1.0
        if not (0 <= i < n and 0 <= j < n):
            raise DataError(f"edge ({i}, {j}) out of range for n={n}")
        if w < 0:
            raise DataError(f"negative edge weight on ({i}, {j})")
        if i == j:
            continue  # self-loops are stripped
        edges[(min(i, j), max(i, j))] = w
    features = np.asarray(raw_features, dtype=np.float64)
    if features.ndim == 1:
        if n == 0 or features.size % n:
            raise DataError(f"{features.size} feature values do not split over {n} nodes")
        features = features.reshape(n, -1)
    if features.shape[0] != n:
        raise DataError(f"features have {features.shape[0]} rows, expected n={n}")
    adjacency = SparseMatrix.from_edges(n, [(i, j, w) for (i, j), w in sorted(edges.items())])
    labels = data.get("labels")
    if labels is not None and len(labels) != n:
        raise DataError(f"{len(labels)} labels for n={n}")
    return Graph(adjacency, features, labels, data.get("graph_label"))


def save_graph(g: Graph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g)), encoding="utf-8")


def load_graph(path) -> Graph:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    return graph_from_dict(data)


# ---------------------------------------------------------------- citation networks

def load_citation_network(content_path, cites_path=None) -> Graph:
    """Read the ``.content`` / ``.cites`` pair of a citation network.

    Each content line is ``<id> <binary word flags...> <class>``; each cites
    line is ``<cited id> <citing id>``.  Edges are symmetrized and binarized,
    self-citations dropped, and citations to unknown ids skipped.  Class names
    map to integers in sorted order.
    """
    content_path = Path(content_path)
    if cites_path is None:
        cites_path = content_path.with_suffix(".cites")
    ids, rows, classes = {}, [], []
    width = None
    with open(content_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise ParseError("expected '<id> <features...> <class>'", line=lineno)
            try:
                flags = [float(v) for v in parts[1:-1]]
            except ValueError as exc:
                raise ParseError(f"non-numeric feature value ({exc})", line=lineno) from None
            if width is None:
                width = len(flags)
            elif len(flags) != width:
                raise ParseError(f"expected {width} features, found {len(flags)}", line=lineno)
            if parts[0] in ids:
                raise DataError(f"line {lineno}: duplicate node id {parts[0]!r}")
            ids[parts[0]] = len(rows)
            rows.append(flags)
            classes.append(parts[-1])
    names = sorted(set(classes))
    labels = np.array([names.index(c) for c in classes], dtype=np.int64)

    pairs, skipped = set(), 0
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError("expected '<id> <id>'", line=lineno)
            a, b = ids.get(parts[0]), ids.get(parts[1])
            if a is None or b is None:
                skipped += 1
                continue
            if a != b:
                pairs.add((min(a, b), max(a, b)))
    if skipped:
        log.warning("skipped %d citations referencing unknown ids", skipped)
    adjacency = SparseMatrix.from_edges(len(rows), [(a, b, 1.0) for a, b in sorted(pairs)])
    return Graph(adjacency, np.asarray(rows, dtype=np.float64), labels)
