"""Response metric spaces and weighted Fréchet means.

Three spaces are supported:

``euclidean``
    Real vectors with the l2 distance.
``sphere``
    Unit vectors in R^3 with the great-circle (geodesic) distance.
``spd``
    Symmetric positive-definite matrices with the Log-Cholesky metric.
    Writing ``L = chol(Y)``, the map ``Y -> (strict_lower(L), log(diag(L)))``
    is an isometry onto a flat Euclidean space, so distances and weighted
    Fréchet means reduce to Euclidean computations in these coordinates.

Single responses are carried around as :class:`MetricPoint` values; the
regressors work on stacked ``numpy`` arrays through the :class:`Space`
objects returned by :func:`get_space`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AntipodalPair,
    DegenerateSphereSample,
    EmptySample,
    NoConvergence,
    NonFinite,
    NotSpd,
    NotSymmetric,
    NotTangent,
    NotUnit,
    VariantMismatch,
)

EUCLIDEAN = "euclidean"
SPHERE = "sphere"
SPD = "spd"
SPACES = (EUCLIDEAN, SPHERE, SPD)

ATOL = 1e-9
SPHERE_GRAD_TOL = 1e-8
SPHERE_MAX_ITER = 200


# ---------------------------------------------------------------------------
# sphere primitives


def _sphere_log_many(base: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Riemannian log at ``base`` of every row of ``targets``.

    Antipodal rows (log undefined) map to the zero vector.
    """
    dots = targets @ base
    perp = targets - dots[:, None] * base
    sines = np.linalg.norm(perp, axis=1)
    angles = np.arctan2(sines, dots)
    scale = np.zeros_like(sines)
    ok = sines > 0
    scale[ok] = angles[ok] / sines[ok]
    return scale[:, None] * perp


def _sphere_exp(base: np.ndarray, tangent: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(tangent)
    if norm == 0.0:
        return base.copy()
    out = np.cos(norm) * base + np.sin(norm) * (tangent / norm)
    return out / np.linalg.norm(out)


def _sphere_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # atan2 form of arccos(a.b): same value on unit vectors, accurate near 0 and pi
    dots = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.arctan2(cross, dots)


def sphere_exp(base: MetricPoint, tangent) -> MetricPoint:
    """Exponential map ``cos(|v|) base + sin(|v|) v/|v|`` on the unit sphere.

    Raises
    ------
    NotTangent
        If ``tangent`` is not orthogonal to ``base`` within 1e-8.
    """
    _require(base, SPHERE)
    v = np.asarray(tangent, dtype=float)
    if v.shape != base.data.shape:
        raise VariantMismatch(f"tangent shape {v.shape} != base shape {base.data.shape}")
    if abs(float(v @ base.data)) > 1e-8:
        raise NotTangent(f"tangent . base = {float(v @ base.data):.3e}")
    return MetricPoint(SPHERE, _sphere_exp(base.data, v))


def sphere_log(base: MetricPoint, target: MetricPoint) -> np.ndarray:
    """Inverse of :func:`sphere_exp`; the norm of the result is the geodesic distance."""
    _require(base, SPHERE)
    _require(target, SPHERE)
    if float(base.data @ target.data) <= -1.0 + 1e-12:
        raise AntipodalPair("log is undefined for antipodal points")
    return _sphere_log_many(base.data, target.data[None, :])[0]


# ---------------------------------------------------------------------------
# symmetric matrix functions


def _check_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has non-finite entries")
    if np.max(np.abs(a - a.T), initial=0.0) > ATOL:
        raise NotSymmetric("matrix is not symmetric within 1e-9")
    return 0.5 * (a + a.T)


def sym_matrix_exp(a) -> np.ndarray:
    """Matrix exponential of a symmetric matrix via its eigendecomposition."""
    a = _check_symmetric(a)
    vals, vecs = np.linalg.eigh(a)
    out = (vecs * np.exp(vals)) @ vecs.T
    return 0.5 * (out + out.T)


def sym_matrix_log(y) -> np.ndarray:
    """Principal matrix logarithm of an SPD matrix."""
    y = _check_symmetric(y)
    vals, vecs = np.linalg.eigh(y)
    if vals[0] <= 0:
        raise NotSpd(f"smallest eigenvalue {vals[0]:.3e} is not positive")
    out = (vecs * np.log(vals)) @ vecs.T
    return 0.5 * (out + out.T)


def cholesky_factor(y) -> np.ndarray:
    """Lower-triangular Cholesky factor with positive diagonal."""
    y = np.asarray(y, dtype=float)
    try:
        return np.linalg.cholesky(y)
    except np.linalg.LinAlgError as exc:
        raise NotSpd(str(exc)) from None


def log_cholesky_coords(y: np.ndarray) -> np.ndarray:
    """Flat Log-Cholesky coordinates of one or a stack of SPD matrices.

    Returns an array of shape ``(..., d*(d+1)/2)``: the strictly lower
    entries of the Cholesky factor in row-major order followed by the logs
    of its diagonal.
    """
    chol = cholesky_factor(y)
    d = chol.shape[-1]
    rows, cols = np.tril_indices(d, k=-1)
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    return np.concatenate([chol[..., rows, cols], np.log(diag)], axis=-1)


def from_log_cholesky_coords(coords: np.ndarray, d: int) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    rows, cols = np.tril_indices(d, k=-1)
    n_low = rows.size
    chol = np.zeros(coords.shape[:-1] + (d, d))
    chol[..., rows, cols] = coords[..., :n_low]
    idx = np.arange(d)
    chol[..., idx, idx] = np.exp(coords[..., n_low:])
    y = chol @ np.swapaxes(chol, -1, -2)
    return 0.5 * (y + np.swapaxes(y, -1, -2))


# ---------------------------------------------------------------------------
# spaces (vectorised)


class Space:
    """Vectorised operations on stacked points of one metric space."""

    name: str

    def validate(self, data) -> np.ndarray:
        raise NotImplementedError

    def dist(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distances between points broadcast along the leading axes."""
        raise NotImplementedError

    def mean(self, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Weighted Fréchet mean of stacked ``points``; weights pre-validated.

        A sample whose positive-weight points all coincide returns that
        point bit-for-bit.
        """
        support = points[weights > 0]
        if np.all(support == support[0]):
            return support[0].copy()
        return self._mean(points, weights)

    def _mean(self, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def objective(self, points, weights, candidate) -> float:
        return float(np.sum(weights * self.dist(points, candidate) ** 2))

    def __repr__(self):
        return f"{type(self).__name__}()"


class EuclideanSpace(Space):
    name = EUCLIDEAN

    def validate(self, data):
        v = np.atleast_1d(np.asarray(data, dtype=float))
        if v.ndim != 1 or v.size == 0:
            raise VariantMismatch(f"euclidean point must be a non-empty vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFinite("euclidean point has non-finite entries")
        return v

    def dist(self, a, b):
        return np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1)

    def _mean(self, points, weights):
        return weights @ points / np.sum(weights)


class SphereSpace(Space):
    name = SPHERE

    def validate(self, data):
        v = np.asarray(data, dtype=float)
        if v.shape != (3,):
            raise VariantMismatch(f"sphere point must have length 3, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFinite("sphere point has non-finite entries")
        if abs(np.linalg.norm(v) - 1.0) > ATOL:
            raise NotUnit(f"sphere point has norm {np.linalg.norm(v):.12g}, expected 1 within 1e-9")
        return v

    def dist(self, a, b):
        return _sphere_dist(np.asarray(a), np.asarray(b))

    def _mean(self, points, weights):
        support = weights > 0
        pts = points[support]
        w = weights[support] / np.sum(weights[support])
        _check_antipodal_degeneracy(pts, w)

        x = w @ pts
        norm = np.linalg.norm(x)
        if norm < 1e-12:
            x = pts[np.argmax(w)].copy()
        else:
            x = x / norm
        for it in range(SPHERE_MAX_ITER + 1):
            grad = w @ _sphere_log_many(x, pts)
            if np.linalg.norm(grad) <= SPHERE_GRAD_TOL:
                return x
            if it < SPHERE_MAX_ITER:
                x = _sphere_exp(x, grad)
        raise NoConvergence(
            f"sphere Fréchet mean did not reach gradient norm {SPHERE_GRAD_TOL:g} "
            f"in {SPHERE_MAX_ITER} iterations"
        )


def _check_antipodal_degeneracy(pts: np.ndarray, w: np.ndarray) -> None:
    # support on {a, -a} only: the minimisers form a whole circle, whatever the weights
    dots = pts @ pts[0]
    same = dots >= 1.0 - 1e-12
    opposite = dots <= -1.0 + 1e-12
    if np.all(same | opposite) and np.any(opposite):
        raise DegenerateSphereSample(
            "sample is supported on an antipodal pair; the mean is not unique"
        )


class SpdSpace(Space):
    name = SPD

    def validate(self, data):
        m = _check_symmetric(data)
        cholesky_factor(m)
        return m

    def dist(self, a, b):
        return np.linalg.norm(log_cholesky_coords(a) - log_cholesky_coords(b), axis=-1)

    def _mean(self, points, weights):
        coords = log_cholesky_coords(points)
        return from_log_cholesky_coords(weights @ coords / np.sum(weights), points.shape[-1])


_SPACES = {EUCLIDEAN: EuclideanSpace(), SPHERE: SphereSpace(), SPD: SpdSpace()}


def get_space(name: str) -> Space:
    try:
        return _SPACES[name]
    except KeyError:
        raise VariantMismatch(f"unknown space {name!r}; expected one of {SPACES}") from None


# ---------------------------------------------------------------------------
# point values


@dataclass(frozen=True, eq=False)
class MetricPoint:
    """A validated, immutable response value.

    Use the :meth:`euclidean`, :meth:`sphere` and :meth:`spd` constructors,
    or ``MetricPoint(space_name, data)`` directly.
    """

    space: str
    data: np.ndarray

    def __post_init__(self):
        arr = get_space(self.space).validate(self.data).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def euclidean(cls, v) -> MetricPoint:
        return cls(EUCLIDEAN, v)

    @classmethod
    def sphere(cls, v) -> MetricPoint:
        return cls(SPHERE, v)

    @classmethod
    def spd(cls, m) -> MetricPoint:
        return cls(SPD, m)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def to_json(self) -> dict:
        return {"space": self.space, "data": self.data.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> MetricPoint:
        return cls(obj["space"], obj["data"])

    def __repr__(self):
        return f"MetricPoint({self.space!r}, {self.data.tolist()!r})"


def _require(p: MetricPoint, space: str) -> None:
    if p.space != space:
        raise VariantMismatch(f"expected a {space} point, got {p.space}")


def _check_same(a: MetricPoint, b: MetricPoint) -> None:
    if a.space != b.space or a.data.shape != b.data.shape:
        raise VariantMismatch(
            f"cannot compare {a.space}{list(a.shape)} with {b.space}{list(b.shape)}"
        )


def distance(a: MetricPoint, b: MetricPoint) -> float:
    """Metric distance between two points of the same space."""
    _check_same(a, b)
    return float(get_space(a.space).dist(a.data, b.data))


@dataclass(frozen=True)
class WeightedSample:
    points: Sequence[MetricPoint]
    weights: Sequence[float]

    def __post_init__(self):
        if len(self.points) != len(self.weights):
            raise VariantMismatch(
                f"{len(self.points)} points but {len(self.weights)} weights"
            )
        if len(self.points) == 0:
            raise EmptySample("sample has no points")
        first = self.points[0]
        for p in self.points[1:]:
            _check_same(first, p)
        w = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(w)):
            raise NonFinite("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if not np.any(w > 0):
            raise EmptySample("all weights are zero")

    @property
    def space(self) -> str:
        return self.points[0].space

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.stack([p.data for p in self.points]),
                np.asarray(self.weights, dtype=float))


def weighted_mean(space: Space, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Array-level Fréchet mean used by the regressors (no per-point validation)."""
    weights = np.asarray(weights, dtype=float)
    if not np.any(weights > 0):
        raise EmptySample("all weights are zero")
    return space.mean(points, weights)


def frechet_mean(sample: WeightedSample) -> MetricPoint:
    """Minimiser of ``sum_i w_i d^2(y_i, .)`` over the sample's space.

    Euclidean and SPD (Log-Cholesky) means are exact closed forms; the
    sphere mean is computed by intrinsic fixed-point iteration started at
    the normalised extrinsic mean.
    """
    points, weights = sample.stacked()
    space = get_space(sample.space)
    return MetricPoint(space.name, space.mean(points, weights))
