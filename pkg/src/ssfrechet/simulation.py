"""Simulation designs: Swiss-roll features, SPD and sphere responses, AMSE runs.

Latent ``u`` lives in ``[0, 1]^2``. Features are the Swiss roll in R^3

    theta = 4 pi (u1 + 1/2),  x = (theta cos theta / 10, 4 u2, theta sin theta / 10)

or its two-spiral analogue in R^6. Responses depend on ``u`` only:

* Setting I / II: ``log Y = D(u) + sigma Z`` (2x2 / 3x3 SPD),
* Setting III: tangent Gaussian noise pushed through the sphere exp map,
* Setting IV: noise inside a spherical-coordinate parameterisation.

The regression target scored by :func:`run_experiment` is the noiseless
generator output.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
import numpy as np

from .errors import ConfigError, FrechetError
from .manifold_graph import FeatureMatrix, GraphContext, default_radius
from .metric_space import SPD, SPHERE, MetricPoint
from .regression import (
    K_GRID,
    METHODS,
    GraphParams,
    LabeledSet,
    RegressorSpec,
    fit_cv,
)

UNIFORM = "uniform"
TRUNCATED = "truncated"
R3 = "R3"
R6 = "R6"
SETTINGS = ("I", "II", "III", "IV")

CALIBRATION_SEED = 20240607
CALIBRATION_DRAWS = 100_000
SPHERE_NOISE_SD = 0.2
_TRUNC_MEAN = np.array([0.5, 0.5])
_TRUNC_COV = np.array([[1.0, 0.5], [0.5, 1.0]])  # entry (i, j) = 0.5 ** |i - j|


# ---------------------------------------------------------------------------
# latent draws and embeddings


@dataclass(frozen=True)
class LatentSample:
    u: tuple[float, float]
    source: str = UNIFORM

    def __post_init__(self):
        if len(self.u) != 2 or not all(0.0 <= c <= 1.0 for c in self.u):
            raise ValueError(f"latent point must lie in [0, 1]^2, got {self.u}")


def sample_latents(source: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """``(size, 2)`` latent draws; truncated-normal draws use rejection sampling."""
    if source == UNIFORM:
        return rng.uniform(0.0, 1.0, size=(size, 2))
    if source != TRUNCATED:
        raise ValueError(f"unknown latent source {source!r}")
    out = np.empty((0, 2))
    while out.shape[0] < size:
        batch = rng.multivariate_normal(_TRUNC_MEAN, _TRUNC_COV, size=max(64, 3 * (size - out.shape[0])))
        inside = np.all((batch >= 0.0) & (batch <= 1.0), axis=1)
        out = np.vstack([out, batch[inside]])
    return out[:size]


def sample_latent(source: str, rng: np.random.Generator) -> LatentSample:
    u = sample_latents(source, 1, rng)[0]
    return LatentSample((float(u[0]), float(u[1])), source)


def _latent_array(u) -> np.ndarray:
    if isinstance(u, LatentSample):
        return np.asarray(u.u, dtype=float)
    return np.asarray(u, dtype=float)


def embed_swiss_roll(u, ambient: str = R3) -> np.ndarray:
    """Swiss-roll embedding of one ``(2,)`` or many ``(n, 2)`` latent points."""
    u = _latent_array(u)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    theta1 = 4 * np.pi * (u[:, 0] + 0.5)
    if ambient == R3:
        x = np.column_stack([theta1 * np.cos(theta1) / 10, 4 * u[:, 1], theta1 * np.sin(theta1) / 10])
    elif ambient == R6:
        theta2 = 4 * np.pi * (u[:, 1] + 0.5)
        x = np.column_stack([
            theta1 * np.cos(theta1) / 10, u[:, 1], theta1 * np.sin(theta1) / 10,
            theta2 * np.cos(theta2) / 10, -u[:, 0], theta2 * np.sin(theta2) / 10,
        ])
    else:
        raise ValueError(f"ambient must be 'R3' or 'R6', got {ambient!r}")
    return x[0] if single else x


def _sqrt_integral(t, c: float):
    """Antiderivative of ``sqrt(c + t^2)``."""
    root = np.sqrt(c + t * t)
    return 0.5 * (t * root + c * np.arcsinh(t / math.sqrt(c)))


def unrolled_coords(u, ambient: str = R3) -> np.ndarray:
    """Isometric flat coordinates of Swiss-roll points (arc lengths from ``u = 0``)."""
    u = np.atleast_2d(_latent_array(u))
    theta = 4 * np.pi * (u + 0.5)
    base = 2 * np.pi
    if ambient == R3:
        arc = (_sqrt_integral(theta[:, 0], 1.0) - _sqrt_integral(base, 1.0)) / 10
        return np.column_stack([arc, 4 * u[:, 1]])
    if ambient == R6:
        # each spiral also carries a linear coordinate in its own latent: dx = du = dtheta / (4 pi)
        c = 1.0 + 100.0 / (16 * np.pi ** 2)
        return (_sqrt_integral(theta, c) - _sqrt_integral(base, c)) / 10
    raise ValueError(f"ambient must be 'R3' or 'R6', got {ambient!r}")


def swiss_roll_geodesic(u1, u2, ambient: str = R3) -> float:
    """Exact geodesic distance on the Swiss roll (straight line in the unrolled strip)."""
    a, b = unrolled_coords(u1, ambient), unrolled_coords(u2, ambient)
    return float(np.linalg.norm(a - b))


# ---------------------------------------------------------------------------
# response generators


def setting_signal(setting: str, u) -> np.ndarray:
    """Noiseless regression target(s): ``D(u)`` for I/II, a unit vector for III/IV."""
    u = np.atleast_2d(_latent_array(u))
    a, b = u[:, 0], u[:, 1]
    if setting == "I":
        rho = np.cos(4 * np.pi * (0.75 * a + 0.25 * b))
        d = np.empty((u.shape[0], 2, 2))
        d[:, 0, 0] = d[:, 1, 1] = 1.0
        d[:, 0, 1] = d[:, 1, 0] = rho
        return d
    if setting == "II":
        r1 = 0.8 * np.cos(4 * np.pi * (0.75 * a + 0.25 * b))
        r2 = 0.4 * np.cos(4 * np.pi * (0.25 * a + 0.75 * b))
        d = np.empty((u.shape[0], 3, 3))
        d[:, [0, 1, 2], [0, 1, 2]] = 1.0
        d[:, 0, 1] = d[:, 1, 0] = d[:, 1, 2] = d[:, 2, 1] = r1
        d[:, 0, 2] = d[:, 2, 0] = r2
        return d
    if setting == "III":
        s = np.sqrt(np.clip(1 - a * a, 0.0, None))
        return np.column_stack([s * np.cos(np.pi * b), s * np.sin(np.pi * b), a])
    if setting == "IV":
        return _setting_iv(a, b)
    raise ValueError(f"unknown setting {setting!r}")


def _setting_iv(a, b):
    return np.column_stack([np.sin(a) * np.sin(b), np.sin(a) * np.cos(b), np.abs(np.cos(a))])


def _sym_exp_stack(a: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(a)
    out = (vecs * np.exp(vals)[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def regression_target(setting: str, u) -> np.ndarray:
    """True conditional mean used for scoring (stacked response arrays)."""
    signal = setting_signal(setting, u)
    if setting in ("I", "II"):
        return _sym_exp_stack(signal)
    return signal


def symmetric_normal(dim: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric matrices with N(0, 1) diagonal and N(0, 1/2) off-diagonal entries."""
    z = np.zeros((size, dim, dim))
    idx = np.arange(dim)
    z[:, idx, idx] = rng.standard_normal((size, dim))
    rows, cols = np.triu_indices(dim, k=1)
    off = rng.standard_normal((size, rows.size)) * math.sqrt(0.5)
    z[:, rows, cols] = off
    z[:, cols, rows] = off
    return z


@lru_cache(maxsize=None)
def calibrate_sigma(setting: str, snr: float, source: str = UNIFORM) -> float:
    """Noise level giving ``sd(signal entries) / sigma == snr``.

    The signal sd pools the free (upper-triangular) entries of ``D(u)``
    over a fixed-seed set of latent draws.
    """
    if setting not in ("I", "II"):
        raise ValueError("sigma calibration only applies to settings I and II")
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    rng = np.random.default_rng(CALIBRATION_SEED)
    d = setting_signal(setting, sample_latents(source, CALIBRATION_DRAWS, rng))
    rows, cols = np.triu_indices(d.shape[-1])
    return float(np.std(d[:, rows, cols])) / snr


def _tangent_basis(m: np.ndarray) -> np.ndarray:
    """Orthonormal tangent basis at ``m``: Gram-Schmidt of the canonical axes,
    keeping the two with the largest residual, in index order."""
    resid = np.eye(3) - np.outer(np.eye(3) @ m, m)
    keep = np.sort(np.argsort(-np.linalg.norm(resid, axis=1), kind="stable")[:2])
    v1 = resid[keep[0]] / np.linalg.norm(resid[keep[0]])
    v2 = resid[keep[1]] - (resid[keep[1]] @ v1) * v1
    return np.vstack([v1, v2 / np.linalg.norm(v2)])


def generate_responses(setting: str, u, rng: np.random.Generator,
                       sigma: float | None = None, snr: float | None = None,
                       source: str = UNIFORM) -> np.ndarray:
    """Noisy responses for latent points ``u`` (stacked arrays).

    For settings I/II pass ``sigma`` directly or ``snr`` to calibrate it.
    """
    u = np.atleast_2d(_latent_array(u))
    n = u.shape[0]
    if setting in ("I", "II"):
        if sigma is None:
            if snr is None:
                raise ValueError("settings I/II need sigma or snr")
            sigma = calibrate_sigma(setting, float(snr), source)
        d = setting_signal(setting, u)
        return _sym_exp_stack(d + sigma * symmetric_normal(d.shape[-1], n, rng))
    if setting == "III":
        m = setting_signal(setting, u)
        delta = rng.normal(0.0, SPHERE_NOISE_SD, size=(n, 2))
        out = np.empty_like(m)
        for i in range(n):
            eps = delta[i] @ _tangent_basis(m[i])
            norm = np.linalg.norm(eps)
            if norm == 0:
                out[i] = m[i]
            else:
                y = np.cos(norm) * m[i] + np.sin(norm) * eps / norm
                out[i] = y / np.linalg.norm(y)
        return out
    if setting == "IV":
        eps = rng.normal(0.0, SPHERE_NOISE_SD, size=(n, 2))
        return _setting_iv(u[:, 0] + eps[:, 0], u[:, 1] + eps[:, 1])
    raise ValueError(f"unknown setting {setting!r}")


def gen_setting_I(u, snr: float, rng: np.random.Generator, sigma: float | None = None) -> MetricPoint:
    return MetricPoint(SPD, generate_responses("I", u, rng, sigma=sigma, snr=snr)[0])


def gen_setting_II(u, snr: float, rng: np.random.Generator, sigma: float | None = None) -> MetricPoint:
    return MetricPoint(SPD, generate_responses("II", u, rng, sigma=sigma, snr=snr)[0])


def gen_setting_III(u, rng: np.random.Generator) -> MetricPoint:
    return MetricPoint(SPHERE, generate_responses("III", u, rng)[0])


def gen_setting_IV(u, rng: np.random.Generator) -> MetricPoint:
    return MetricPoint(SPHERE, generate_responses("IV", u, rng)[0])


def response_space(setting: str) -> str:
    return SPD if setting in ("I", "II") else SPHERE


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class ExperimentConfig:
    setting: str
    n: int
    m: tuple[int, ...]
    n_test: int
    seed: int
    realizations: int = 1
    ambient: str = R3
    snr: float | None = None
    latent: str = UNIFORM
    methods: tuple[str, ...] = METHODS
    graph: GraphParams = field(default_factory=GraphParams)
    k_grid: tuple[int, ...] = K_GRID

    def __post_init__(self):
        m = (self.m,) if isinstance(self.m, int) else tuple(self.m)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "k_grid", tuple(self.k_grid))
        if isinstance(self.graph, dict):
            object.__setattr__(self, "graph", GraphParams(**self.graph))
        problems = []
        if self.setting not in SETTINGS:
            problems.append(f"/setting: must be one of {SETTINGS}")
        if self.n < 2:
            problems.append("/n: must be >= 2")
        if self.n_test < 1:
            problems.append("/n_test: must be >= 1")
        if not m or any(v < 0 for v in m):
            problems.append("/m: must be a non-empty list of non-negative counts")
        if self.realizations < 1:
            problems.append("/realizations: must be >= 1")
        if self.setting in ("I", "II") and not (self.snr is not None and self.snr > 0):
            problems.append("/snr: settings I and II need snr > 0")
        if self.ambient not in (R3, R6):
            problems.append("/ambient: must be 'R3' or 'R6'")
        if self.latent not in (UNIFORM, TRUNCATED):
            problems.append("/latent: must be 'uniform' or 'truncated'")
        for i, meth in enumerate(self.methods):
            if meth not in METHODS:
                problems.append(f"/methods/{i}: unknown method {meth!r}")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def sigma(self) -> float | None:
        if self.setting in ("I", "II"):
            return calibrate_sigma(self.setting, float(self.snr), self.latent)
        return None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["m"] = list(self.m)
        out["methods"] = list(self.methods)
        out["k_grid"] = list(self.k_grid)
        return out


@dataclass
class TrialResult:
    realization: int
    method: str
    m: int
    mse: float
    hyperparam: float | int | None
    seconds: float
    n_failed: int = 0
    error: str = ""


@dataclass
class RealizationData:
    u_labeled: np.ndarray
    u_unlabeled: np.ndarray
    u_test: np.ndarray
    x_labeled: np.ndarray
    x_unlabeled: np.ndarray
    x_test: np.ndarray
    labeled: LabeledSet
    truth: np.ndarray


def realization_seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    """Per-realization child seeds; child ``j`` is independent of ``count`` and of scheduling."""
    return np.random.SeedSequence(seed).spawn(count)


def draw_realization(config: ExperimentConfig, seed_seq: np.random.SeedSequence) -> RealizationData:
    rng = np.random.default_rng(seed_seq)
    u_lab = sample_latents(config.latent, config.n, rng)
    u_unl = sample_latents(config.latent, max(config.m), rng)
    u_test = sample_latents(config.latent, config.n_test, rng)
    y = generate_responses(config.setting, u_lab, rng, sigma=config.sigma)
    x_lab = embed_swiss_roll(u_lab, config.ambient)
    labeled = LabeledSet(x_lab, y, response_space(config.setting))
    return RealizationData(
        u_labeled=u_lab, u_unlabeled=u_unl, u_test=u_test,
        x_labeled=x_lab,
        x_unlabeled=embed_swiss_roll(u_unl, config.ambient).reshape(-1, x_lab.shape[1]),
        x_test=embed_swiss_roll(u_test, config.ambient).reshape(-1, x_lab.shape[1]),
        labeled=labeled,
        truth=regression_target(config.setting, u_test),
    )


def _score(fitted, data: RealizationData) -> tuple[float, int, str]:
    """Mean squared distance to the truth over the test points that could be predicted.

    Failed points are counted and the first failure is described.
    """
    metric = data.labeled.metric
    sq = []
    failures = []
    for i, (x, truth) in enumerate(zip(data.x_test, data.truth)):
        try:
            yhat = fitted.predict_array(x)
        except FrechetError as exc:
            failures.append(f"test {i}: {type(exc).__name__}")
            continue
        sq.append(float(metric.dist(yhat, truth)) ** 2)
    error = f"{len(failures)} failed predictions, first {failures[0]}" if failures else ""
    return (float(np.mean(sq)) if sq else math.inf), len(failures), error


def _run_method(config, data, method, m, context, context_seconds, realization) -> TrialResult:
    start = time.perf_counter()
    spec = RegressorSpec.from_method(method, graph=config.graph)
    try:
        fitted = fit_cv(spec, data.labeled, context=context, k_grid=config.k_grid)
        mse, n_failed, error = _score(fitted, data)
        hyper = fitted.spec.hyperparam
    except FrechetError as exc:
        mse, n_failed, error, hyper = math.inf, len(data.x_test), f"{type(exc).__name__}: {exc}", None
    seconds = time.perf_counter() - start + context_seconds
    return TrialResult(realization, method, m, mse, hyper, seconds, n_failed, error)


def run_realization(config: ExperimentConfig, realization: int,
                    seed_seq: np.random.SeedSequence) -> list[TrialResult]:
    """All requested methods for one realization, for every ``m`` in the grid.

    Supervised methods ignore unlabeled data: they are fitted once and
    reported against every ``m``.
    """
    data = draw_realization(config, seed_seq)
    results = []
    supervised = [meth for meth in config.methods if not meth.startswith("semi-")]
    semi = [meth for meth in config.methods if meth.startswith("semi-")]
    sup_results = [_run_method(config, data, meth, 0, None, 0.0, realization) for meth in supervised]
    for m in config.m:
        for r in sup_results:
            results.append(TrialResult(**{**asdict(r), "m": m}))
        if not semi:
            continue
        start = time.perf_counter()
        features = FeatureMatrix.from_parts(data.x_labeled, data.x_unlabeled[:m])
        context_error = ""
        try:
            context = GraphContext.build(features, config.graph.resolve(features), config.graph.fermat_s)
        except FrechetError as exc:
            context, context_error = None, f"{type(exc).__name__}: {exc}"
        build_seconds = time.perf_counter() - start
        for meth in semi:
            if context is None:
                results.append(TrialResult(realization, meth, m, math.inf, None, build_seconds,
                                           len(data.x_test), context_error))
            else:
                results.append(_run_method(config, data, meth, m, context, build_seconds, realization))
    order = {meth: i for i, meth in enumerate(config.methods)}
    results.sort(key=lambda r: (r.m, order[r.method]))
    return results


def _realization_job(args):
    config, j, seed_seq = args
    return run_realization(config, j, seed_seq)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: list[TrialResult]
    metadata: dict

    def summary(self) -> list[dict]:
        """AMSE and its standard error per ``(method, m)``, in config order."""
        rows = []
        for m in self.config.m:
            for meth in self.config.methods:
                mses = np.array([t.mse for t in self.trials if t.method == meth and t.m == m])
                amse = float(np.mean(mses))
                if mses.size > 1 and np.all(np.isfinite(mses)):
                    se = float(np.std(mses, ddof=1) / math.sqrt(mses.size))
                else:
                    se = math.nan
                rows.append({"method": meth, "m": m, "amse": amse, "se": se})
        return rows

    def amse(self, method: str, m: int) -> float:
        return next(r["amse"] for r in self.summary() if r["method"] == method and r["m"] == m)


def resolve_metadata(config: ExperimentConfig) -> dict:
    """Resolved run parameters: seed, sigma and the first realization's auto radius."""
    meta = {"seed": config.seed, "sigma": config.sigma}
    if any(meth.startswith("semi-") for meth in config.methods):
        if config.graph.rule == "r" and config.graph.radius is None:
            data = draw_realization(config, realization_seeds(config.seed, 1)[0])
            features = FeatureMatrix.from_parts(data.x_labeled, data.x_unlabeled[: max(config.m)])
            meta["radius"] = default_radius(features)
        elif config.graph.rule == "r":
            meta["radius"] = config.graph.radius
        else:
            meta["graph_k"] = config.graph.k
    return meta


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Monte-Carlo AMSE over ``config.realizations`` independent realizations.

    Output does not depend on ``threads``: each realization draws from its
    own child seed and results are collected in realization order.
    """
    seeds = realization_seeds(config.seed, config.realizations)
    jobs = [(config, j, s) for j, s in enumerate(seeds)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            per_real = list(pool.map(_realization_job, jobs))
    else:
        per_real = [_realization_job(job) for job in jobs]
    trials = [t for batch in per_real for t in batch]
    meta = {"seed": config.seed, "sigma": config.sigma}
    return ExperimentResult(config, trials, meta)

