"""Nadaraya-Watson and k-nearest-neighbor Fréchet regression.

Each regressor predicts at ``x`` by a weighted Fréchet mean of the labeled
responses. The weights come from distances between ``x`` and the labeled
features, measured either in the ambient Euclidean space (supervised) or
as shortest-path distances on a neighbor graph built from labeled and
unlabeled features together (semi-supervised).

NW uses ``w_i = K(d_i / h)`` with the Epanechnikov kernel. The usual
``1 / (n h^p)`` factor of the scaled kernel is dropped: it multiplies the
objective by a positive constant and leaves the minimiser unchanged.
kNN averages the ``k`` labeled responses with the smallest distances,
breaking ties toward the lower labeled index.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    AllCandidatesFailed,
    DegenerateDistances,
    DimensionMismatch,
    EmptyNeighborhood,
    FrechetError,
    IsolatedQuery,
    NotEnoughReachable,
    VariantMismatch,
)
from .manifold_graph import FeatureMatrix, GraphContext, KnnGraph, RGraph, Rule, default_radius
from .metric_space import MetricPoint, Space, get_space

NW = "nw"
KNN = "knn"
SUPERVISED = "supervised"
SEMI = "semi"
METHODS = ("nw", "knn", "semi-nw", "semi-knn")

K_GRID = tuple(range(1, 11))
BANDWIDTH_EXPONENTS = tuple(t / 10 for t in range(1, 11))


def kernel_eval(u):
    """Epanechnikov kernel ``0.75 (1 - u^2)`` on ``|u| <= 1``, zero elsewhere."""
    u = np.asarray(u, dtype=float)
    out = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class LabeledSet:
    """Labeled features ``(n, p)`` and their stacked responses."""

    features: np.ndarray
    responses: np.ndarray
    space: str

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        sp = get_space(self.space)
        y = np.stack([sp.validate(v) for v in np.asarray(self.responses, dtype=float)])
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{x.shape[0]} features but {y.shape[0]} responses")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "responses", y)

    @classmethod
    def from_points(cls, features, points: Sequence[MetricPoint]) -> LabeledSet:
        spaces = {(p.space, p.shape) for p in points}
        if len(spaces) != 1:
            raise VariantMismatch(f"responses must share one space, got {sorted(spaces)}")
        return cls(features, np.stack([p.data for p in points]), points[0].space)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def metric(self) -> Space:
        return get_space(self.space)

    def point(self, i: int) -> MetricPoint:
        return MetricPoint(self.space, self.responses[i])


@dataclass(frozen=True)
class GraphParams:
    """Graph construction for semi-supervised regressors.

    ``radius=None`` selects :func:`default_radius` on the full feature set.
    """

    rule: str = "r"
    radius: float | None = None
    k: int = 4
    fermat_s: float = 1.0

    def resolve(self, features: FeatureMatrix) -> Rule:
        if self.rule == "r":
            return RGraph(default_radius(features) if self.radius is None else self.radius)
        if self.rule == "knn":
            return KnnGraph(self.k)
        raise ValueError(f"unknown graph rule {self.rule!r}")


@dataclass(frozen=True)
class RegressorSpec:
    family: str
    mode: str = SUPERVISED
    bandwidth: float | None = None
    k: int | None = None
    graph: GraphParams | None = None
    kernel: str = "epanechnikov"

    def __post_init__(self):
        if self.family not in (NW, KNN):
            raise ValueError(f"family must be 'nw' or 'knn', got {self.family!r}")
        if self.mode not in (SUPERVISED, SEMI):
            raise ValueError(f"mode must be 'supervised' or 'semi', got {self.mode!r}")
        if self.family == NW and self.bandwidth is not None:
            if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
                raise ValueError(f"bandwidth must be positive and finite, got {self.bandwidth}")
        if self.family == KNN and self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.mode == SEMI and self.graph is None:
            object.__setattr__(self, "graph", GraphParams())
        if self.kernel != "epanechnikov":
            raise ValueError("only the epanechnikov kernel is supported")

    @classmethod
    def from_method(cls, method: str, *, bandwidth=None, k=None, graph=None) -> RegressorSpec:
        """Spec from a method name: ``nw``, ``knn``, ``semi-nw`` or ``semi-knn``."""
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {method!r}")
        mode = SEMI if method.startswith("semi-") else SUPERVISED
        return cls(method.removeprefix("semi-"), mode, bandwidth, k,
                   graph if mode == SEMI else None)

    @property
    def method(self) -> str:
        return self.family if self.mode == SUPERVISED else f"semi-{self.family}"

    @property
    def hyperparam(self) -> float | int | None:
        return self.bandwidth if self.family == NW else self.k


class FittedRegressor:
    """A regressor bound to its labeled data (and graph, when semi-supervised)."""

    def __init__(self, spec: RegressorSpec, labeled: LabeledSet,
                 context: GraphContext | None = None):
        if (context is not None) != (spec.mode == SEMI):
            raise ValueError("a graph context is required iff the mode is semi-supervised")
        if spec.family == NW and spec.bandwidth is None:
            raise ValueError("NW regressor needs a bandwidth")
        if spec.family == KNN and (spec.k is None or spec.k > labeled.n):
            raise ValueError(f"kNN regressor needs 1 <= k <= n={labeled.n}, got {spec.k}")
        if context is not None and context.features.n != labeled.n:
            raise ValueError("graph labeled_count does not match the labeled set")
        self.spec = spec
        self.labeled = labeled
        self.context = context

    def __repr__(self):
        return f"FittedRegressor({self.spec.method}, hyperparam={self.spec.hyperparam}, n={self.labeled.n})"

    def distances(self, query) -> np.ndarray:
        """Distances from ``query`` to each labeled feature under the spec's mode."""
        q = np.atleast_1d(np.asarray(query, dtype=float))
        if q.shape != (self.labeled.features.shape[1],):
            raise DimensionMismatch(
                f"query has shape {q.shape}, features have p={self.labeled.features.shape[1]}"
            )
        if self.context is None:
            return cdist(q[None, :], self.labeled.features)[0]
        return self.context.query(q)

    def predict_array(self, query) -> np.ndarray:
        d = self.distances(query)
        if self.spec.family == NW:
            return _nw_from_distances(self.labeled, d, self.spec.bandwidth, self.spec.mode)
        return _knn_from_distances(self.labeled, d, self.spec.k, self.spec.mode)

    def predict(self, query) -> MetricPoint:
        return MetricPoint(self.labeled.space, self.predict_array(query))


def _nw_weights(d: np.ndarray, h: float) -> np.ndarray:
    w = np.zeros_like(d)
    finite = np.isfinite(d)
    w[finite] = kernel_eval(d[finite] / h)
    return w


def _nw_from_distances(labeled: LabeledSet, d: np.ndarray, h: float, mode: str,
                       keep: np.ndarray | None = None) -> np.ndarray:
    w = _nw_weights(d, h)
    if keep is not None:
        w[~keep] = 0.0
    if not np.any(w > 0):
        reachable = np.isfinite(d) if keep is None else np.isfinite(d) & keep
        if mode == SEMI and not np.any(reachable):
            raise IsolatedQuery("query reaches no labeled vertex in the graph")
        raise EmptyNeighborhood(f"no labeled point within bandwidth h={h:.6g}")
    sel = w > 0
    return labeled.metric.mean(labeled.responses[sel], w[sel])


def _knn_from_distances(labeled: LabeledSet, d: np.ndarray, k: int, mode: str,
                        keep: np.ndarray | None = None) -> np.ndarray:
    reachable = np.isfinite(d) if keep is None else np.isfinite(d) & keep
    n_reach = int(reachable.sum())
    if n_reach == 0 and mode == SEMI:
        raise IsolatedQuery("query reaches no labeled vertex in the graph")
    if n_reach < k:
        raise NotEnoughReachable(f"only {n_reach} labeled points reachable, k={k}")
    idx = _k_smallest(d, k, reachable)
    return labeled.metric.mean(labeled.responses[idx], np.ones(k))


def _k_smallest(d: np.ndarray, k: int, allowed: np.ndarray) -> np.ndarray:
    cand = np.flatnonzero(allowed)
    # stable: equal distances resolve to the lower labeled index
    order = np.argsort(d[cand], kind="stable")
    return cand[order[:k]]


def predict_nw(fit: FittedRegressor, query) -> MetricPoint:
    if fit.spec.family != NW:
        raise ValueError("predict_nw needs an NW regressor")
    return fit.predict(query)


def predict_knn(fit: FittedRegressor, query) -> MetricPoint:
    if fit.spec.family != KNN:
        raise ValueError("predict_knn needs a kNN regressor")
    return fit.predict(query)


# ---------------------------------------------------------------------------
# fitting and cross-validation


def build_context(spec: RegressorSpec, labeled: LabeledSet, unlabeled=None) -> GraphContext:
    features = FeatureMatrix.from_parts(labeled.features, unlabeled)
    return GraphContext.build(features, spec.graph.resolve(features), spec.graph.fermat_s)


def fit(spec: RegressorSpec, labeled: LabeledSet, unlabeled=None,
        context: GraphContext | None = None) -> FittedRegressor:
    """Bind ``spec`` to data; semi-supervised specs build a graph unless given one."""
    if spec.mode == SEMI and context is None:
        context = build_context(spec, labeled, unlabeled)
    return FittedRegressor(spec, labeled, context if spec.mode == SEMI else None)


def labeled_distance_matrix(labeled: LabeledSet, context: GraphContext | None = None) -> np.ndarray:
    """Pairwise distances among labeled points: Euclidean, or graph when ``context`` is given."""
    if context is None:
        return cdist(labeled.features, labeled.features)
    return context.pairwise_labeled()


def default_bandwidth_grid(distances: np.ndarray) -> list[float]:
    """Ten bandwidths ``5**(t/10) * h0``, ``t = 1..10``.

    ``h0`` is the median over labeled points of the distance to the nearest
    other labeled point, taken from the ``(n, n)`` distance matrix (Euclidean
    for supervised NW, graph for semi-supervised NW).
    """
    d = np.array(distances, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 2:
        raise DegenerateDistances("need an (n, n) distance matrix with n >= 2")
    np.fill_diagonal(d, np.inf)
    h0 = float(np.median(d.min(axis=1)))
    if not (np.isfinite(h0) and h0 > 0):
        raise DegenerateDistances(f"median nearest-neighbor distance is {h0}")
    return [5.0 ** e * h0 for e in BANDWIDTH_EXPONENTS]


def loocv_fold_losses(labeled: LabeledSet, candidates: Sequence[RegressorSpec],
                      distances: np.ndarray) -> np.ndarray:
    """``(n, C)`` squared leave-one-out errors; a failed prediction scores ``inf``.

    ``distances`` is the ``(n, n)`` labeled distance matrix for the
    candidates' mode.
    """
    n = labeled.n
    metric = labeled.metric
    out = np.full((n, len(candidates)), np.inf)
    for i in range(n):
        keep = np.ones(n, dtype=bool)
        keep[i] = False
        d = distances[i]
        for c, spec in enumerate(candidates):
            try:
                if spec.family == NW:
                    yhat = _nw_from_distances(labeled, d, spec.bandwidth, spec.mode, keep)
                else:
                    yhat = _knn_from_distances(labeled, d, spec.k, spec.mode, keep)
            except FrechetError:
                continue
            out[i, c] = float(metric.dist(yhat, labeled.responses[i])) ** 2
    return out


def loocv_losses(labeled: LabeledSet, candidates: Sequence[RegressorSpec],
                 distances: np.ndarray) -> np.ndarray:
    """Leave-one-out loss ``mean_i d^2(yhat_{-i}(x_i), y_i)`` per candidate.

    A candidate that fails on a fold some other candidate can predict gets
    an infinite loss. Folds no candidate can predict (e.g. a labeled point
    alone in its graph component) carry no information for the comparison
    and are left out of every candidate's average.
    """
    folds = loocv_fold_losses(labeled, candidates, distances)
    usable = np.any(np.isfinite(folds), axis=1)
    if not np.any(usable):
        return np.full(len(candidates), np.inf)
    return folds[usable].mean(axis=0)


def loocv_select(labeled: LabeledSet, candidates: Sequence[RegressorSpec],
                 context: GraphContext | None = None,
                 distances: np.ndarray | None = None) -> RegressorSpec:
    """Pick the candidate with the smallest leave-one-out loss.

    In semi-supervised mode the held-out point stays in the graph as an
    unlabeled vertex, so fold distances are the labeled graph distances.
    Ties go to the smaller bandwidth or ``k``.
    """
    if not candidates:
        raise ValueError("empty candidate grid")
    if labeled.n < 2:
        raise ValueError("LOOCV needs at least 2 labeled points")
    modes = {c.mode for c in candidates}
    if len(modes) != 1:
        raise ValueError("all candidates must share one mode")
    if distances is None:
        distances = labeled_distance_matrix(labeled, context if SEMI in modes else None)
    losses = loocv_losses(labeled, candidates, distances)
    if not np.any(np.isfinite(losses)):
        raise AllCandidatesFailed("every candidate failed in some fold")
    order = sorted(range(len(candidates)),
                   key=lambda c: (candidates[c].hyperparam, c))
    best = min(order, key=lambda c: losses[c])  # min keeps the first minimum
    return candidates[best]


def candidate_grid(spec: RegressorSpec, distances: np.ndarray, n: int,
                   k_grid: Sequence[int] = K_GRID) -> list[RegressorSpec]:
    """Candidate specs for CV: the default bandwidth grid, or ``k`` values below ``n``."""
    if spec.family == NW:
        return [replace(spec, bandwidth=h) for h in default_bandwidth_grid(distances)]
    ks = [k for k in k_grid if k <= n - 1]
    if not ks:
        raise ValueError(f"no k in {list(k_grid)} is usable with n={n}")
    return [replace(spec, k=k) for k in ks]


def fit_cv(spec: RegressorSpec, labeled: LabeledSet, unlabeled=None,
           context: GraphContext | None = None,
           k_grid: Sequence[int] = K_GRID) -> FittedRegressor:
    """Fit with the hyperparameter chosen by LOOCV over the default grids."""
    if spec.mode == SEMI and context is None:
        context = build_context(spec, labeled, unlabeled)
    ctx = context if spec.mode == SEMI else None
    distances = labeled_distance_matrix(labeled, ctx)
    grid = candidate_grid(spec, distances, labeled.n, k_grid)
    best = loocv_select(labeled, grid, ctx, distances)
    return FittedRegressor(best, labeled, ctx)
