"""Neighbor graphs over feature points and shortest-path graph distances.

The graph holds all ``N`` feature points (labeled first, then unlabeled).
A query point is inserted *virtually*: it is connected to its neighbors
under the graph's rule, and shortest paths from it are computed without
mutating the graph.

Two distance routes are provided. :func:`query_distances` runs a plain
binary-heap Dijkstra from the query over the augmented graph.
:class:`GraphContext` precomputes single-source distances from every
labeled vertex once and answers a query as
``min_j (w(query, j) + d_G(j, labeled))`` over the query's neighbors ``j``,
which is exact because a shortest path never revisits its source.
"""
from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, NonFinite, TooFewPoints

_CHUNK = 512


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """All feature vectors; the first ``labeled_count`` rows are labeled."""

    rows: np.ndarray
    labeled_count: int

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim == 1:
            rows = rows[:, None]
        if rows.ndim != 2 or rows.shape[1] == 0:
            raise DimensionMismatch(f"features must be an (N, p) array, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise NonFinite("features contain non-finite entries")
        if not 0 <= self.labeled_count <= rows.shape[0]:
            raise ValueError(f"labeled_count={self.labeled_count} outside [0, {rows.shape[0]}]")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def N(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]

    @property
    def n(self) -> int:
        return self.labeled_count

    @classmethod
    def from_parts(cls, labeled, unlabeled=None) -> FeatureMatrix:
        labeled = np.atleast_2d(np.asarray(labeled, dtype=float))
        if unlabeled is None or len(unlabeled) == 0:
            return cls(labeled, labeled.shape[0])
        unlabeled = np.atleast_2d(np.asarray(unlabeled, dtype=float))
        if unlabeled.shape[1] != labeled.shape[1]:
            raise DimensionMismatch(
                f"labeled features have p={labeled.shape[1]}, unlabeled p={unlabeled.shape[1]}"
            )
        return cls(np.vstack([labeled, unlabeled]), labeled.shape[0])


@dataclass(frozen=True)
class RGraph:
    r: float

    def __post_init__(self):
        if not (np.isfinite(self.r) and self.r > 0):
            raise ValueError(f"radius must be positive and finite, got {self.r}")


@dataclass(frozen=True)
class KnnGraph:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")


Rule = Union[RGraph, KnnGraph]


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    """Undirected weighted graph stored as a symmetric CSR matrix.

    Explicit zero entries are edges (duplicate feature points).
    """

    matrix: sparse.csr_matrix
    rule: Rule
    fermat_s: float = 1.0

    @property
    def n_vertices(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_edges(self) -> int:
        return self.matrix.nnz // 2

    def neighbors(self, i: int) -> list[tuple[int, float]]:
        start, stop = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return list(zip(self.matrix.indices[start:stop].tolist(),
                        self.matrix.data[start:stop].tolist()))

    def degrees(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    def edges(self) -> Iterator[tuple[int, int, float]]:
        """Each undirected edge once, as ``(src, dst, weight)`` with ``src < dst``."""
        coo = self.matrix.tocoo()
        keep = coo.row < coo.col
        order = np.lexsort((coo.col[keep], coo.row[keep]))
        for i, j, w in zip(coo.row[keep][order], coo.col[keep][order], coo.data[keep][order]):
            yield int(i), int(j), float(w)

    def n_components(self) -> int:
        return int(csgraph.connected_components(self.matrix, directed=False)[0])

    def write_edge_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["src", "dst", "weight"])
        for i, j, w in self.edges():
            writer.writerow([i, j, repr(w)])


@dataclass(frozen=True, eq=False)
class DistanceField:
    query: np.ndarray
    dists: np.ndarray

    @property
    def isolated(self) -> bool:
        return not np.any(np.isfinite(self.dists))


# ---------------------------------------------------------------------------
# neighbor search (brute force; swap for a spatial index if N grows)


def _chunked_dists(points: np.ndarray) -> Iterator[tuple[int, np.ndarray]]:
    for start in range(0, points.shape[0], _CHUNK):
        yield start, cdist(points[start:start + _CHUNK], points)


def _radius_pairs(points: np.ndarray, r: float):
    rows, cols, vals = [], [], []
    for start, block in _chunked_dists(points):
        i, j = np.nonzero(block <= r)
        i = i + start
        off = i != j
        rows.append(i[off])
        cols.append(j[off])
        vals.append(block[i[off] - start, j[off]])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _knn_pairs(points: np.ndarray, k: int):
    rows, cols, vals = [], [], []
    for start, block in _chunked_dists(points):
        idx = np.arange(block.shape[0])
        block[idx, idx + start] = np.inf
        # stable sort: equal distances resolve to the lower vertex index
        nearest = np.argsort(block, axis=1, kind="stable")[:, :k]
        rows.append(np.repeat(idx + start, nearest.shape[1]))
        cols.append(nearest.ravel())
        vals.append(np.take_along_axis(block, nearest, axis=1).ravel())
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    # mutualize: keep (i, j) if either endpoint selected the other
    both_r = np.concatenate([rows, cols])
    both_c = np.concatenate([cols, rows])
    both_v = np.concatenate([vals, vals])
    keys = both_r.astype(np.int64) * points.shape[0] + both_c
    _, first = np.unique(keys, return_index=True)
    return both_r[first], both_c[first], both_v[first]


def _query_neighbors_raw(rule: Rule, points: np.ndarray, query: np.ndarray):
    d = cdist(query[None, :], points)[0]
    if isinstance(rule, RGraph):
        idx = np.flatnonzero(d <= rule.r)
    else:
        idx = np.argsort(d, kind="stable")[: min(rule.k, d.size)]
        idx.sort()
    return idx, d[idx]


# ---------------------------------------------------------------------------
# public operations


def default_radius(features: FeatureMatrix | np.ndarray) -> float:
    """``1.2 * max_i min_{j != i} ||x_i - x_j||``.

    With this radius every vertex of the r-graph has at least one neighbor.
    """
    points = features.rows if isinstance(features, FeatureMatrix) else np.asarray(features, float)
    if points.shape[0] < 2:
        raise TooFewPoints("default_radius needs at least 2 points")
    return 1.2 * float(np.max(nearest_neighbor_distances(points)))


def nearest_neighbor_distances(points: np.ndarray) -> np.ndarray:
    """Distance from each row to its nearest other row."""
    points = np.asarray(points, dtype=float)
    out = np.empty(points.shape[0])
    for start, block in _chunked_dists(points):
        idx = np.arange(block.shape[0])
        block[idx, idx + start] = np.inf
        out[start:start + block.shape[0]] = block.min(axis=1)
    return out


def build_graph(features: FeatureMatrix, rule: Rule, fermat_s: float = 1.0) -> NeighborGraph:
    """Build the r-graph or (mutualized) kNN-graph over all feature points.

    Edge weights are ``||x_i - x_j||**fermat_s``; ``fermat_s = 1`` gives
    plain Euclidean edge lengths.
    """
    if not fermat_s >= 1:
        raise ValueError(f"fermat_s must be >= 1, got {fermat_s}")
    points = features.rows
    N = points.shape[0]
    if isinstance(rule, RGraph):
        rows, cols, vals = _radius_pairs(points, rule.r)
    elif isinstance(rule, KnnGraph):
        if rule.k >= N:
            raise ValueError(f"k={rule.k} must be smaller than N={N}")
        rows, cols, vals = _knn_pairs(points, rule.k)
    else:
        raise TypeError(f"unknown graph rule {rule!r}")
    weights = vals if fermat_s == 1 else vals ** fermat_s
    # explicit zeros (duplicates) must survive: build directly, never add matrices
    matrix = sparse.csr_matrix((weights, (rows, cols)), shape=(N, N))
    matrix.sort_indices()
    return NeighborGraph(matrix=matrix, rule=rule, fermat_s=float(fermat_s))


def query_neighbors(graph: NeighborGraph, features: FeatureMatrix, query) -> tuple[np.ndarray, np.ndarray]:
    """Vertices a virtual query vertex connects to, with edge weights.

    For a kNN graph the insertion is expand-only: the query links to its
    ``k`` nearest vertices and existing edges are left alone.
    """
    q = _as_query(features, query)
    idx, d = _query_neighbors_raw(graph.rule, features.rows, q)
    return idx, (d if graph.fermat_s == 1 else d ** graph.fermat_s)


def _as_query(features: FeatureMatrix, query) -> np.ndarray:
    q = np.atleast_1d(np.asarray(query, dtype=float))
    if q.shape != (features.p,):
        raise DimensionMismatch(f"query has shape {q.shape}, features have p={features.p}")
    return q


def _dijkstra(matrix: sparse.csr_matrix, start: dict[int, float], targets: int) -> np.ndarray:
    """Heap Dijkstra from a virtual source attached to ``start`` vertices.

    Stops once the first ``targets`` vertices are all settled.
    """
    indptr, indices, data = matrix.indptr, matrix.indices, matrix.data
    dist = np.full(matrix.shape[0], np.inf)
    heap = []
    for v, w in start.items():
        if w < dist[v]:
            dist[v] = w
            heapq.heappush(heap, (w, v))
    done = np.zeros(matrix.shape[0], dtype=bool)
    remaining = targets
    while heap and remaining:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u < targets:
            remaining -= 1
        for pos in range(indptr[u], indptr[u + 1]):
            v = indices[pos]
            nd = d + data[pos]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def query_distances(graph: NeighborGraph, features: FeatureMatrix, query) -> DistanceField:
    """Graph distances from a virtually inserted query to every labeled vertex."""
    q = _as_query(features, query)
    idx, w = query_neighbors(graph, features, q)
    start: dict[int, float] = {}
    for v, wv in zip(idx.tolist(), w.tolist()):
        start[v] = min(wv, start.get(v, np.inf))
    dist = _dijkstra(graph.matrix, start, features.n)
    return DistanceField(query=q, dists=dist[: features.n].copy())


def labeled_source_distances(graph: NeighborGraph, features: FeatureMatrix) -> np.ndarray:
    """``(n, N)`` shortest-path distances from each labeled vertex to all vertices."""
    if features.n == 0:
        return np.zeros((0, features.N))
    return csgraph.dijkstra(graph.matrix, directed=False, indices=np.arange(features.n))


def pairwise_labeled_distances(graph: NeighborGraph, features: FeatureMatrix) -> np.ndarray:
    """Symmetric ``(n, n)`` graph distances among labeled vertices over the full graph."""
    return _symmetrize(labeled_source_distances(graph, features)[:, : features.n])


def _symmetrize(d: np.ndarray) -> np.ndarray:
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return d


@dataclass(frozen=True, eq=False)
class GraphContext:
    """A built graph plus cached labeled-source distances, for repeated queries."""

    features: FeatureMatrix
    graph: NeighborGraph
    from_labeled: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        from_labeled = labeled_source_distances(self.graph, self.features)
        from_labeled.setflags(write=False)
        object.__setattr__(self, "from_labeled", from_labeled)

    @classmethod
    def build(cls, features: FeatureMatrix, rule: Rule | None = None,
              fermat_s: float = 1.0) -> GraphContext:
        """Build with ``rule``; ``None`` means an r-graph with :func:`default_radius`."""
        if rule is None:
            rule = RGraph(default_radius(features))
        return cls(features, build_graph(features, rule, fermat_s))

    def pairwise_labeled(self) -> np.ndarray:
        return _symmetrize(np.array(self.from_labeled[:, : self.features.n]))

    def query(self, query) -> np.ndarray:
        idx, w = query_neighbors(self.graph, self.features, query)
        if idx.size == 0:
            return np.full(self.features.n, np.inf)
        return np.min(self.from_labeled[:, idx] + w[None, :], axis=1)

    def query_field(self, query) -> DistanceField:
        return DistanceField(query=_as_query(self.features, query), dists=self.query(query))
