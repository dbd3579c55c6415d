import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    log_cholesky_distance,
    numeric_spd_mean,
    numeric_sphere_mean,
    spd_objective,
    sphere_objective,
)
from ssfrechet.errors import (
    AntipodalPair,
    DegenerateSphereSample,
    EmptySample,
    NotSpd,
    NotSymmetric,
    NotTangent,
    NotUnit,
    VariantMismatch,
)
from ssfrechet.metric_space import (
    MetricPoint,
    WeightedSample,
    distance,
    frechet_mean,
    get_space,
    log_cholesky_coords,
    sphere_exp,
    sphere_log,
    sym_matrix_exp,
    sym_matrix_log,
)


def random_spd(rng, d):
    a = rng.normal(size=(d, d))
    return a @ a.T + 0.3 * np.eye(d)


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_cap(rng, size, radius, center=None):
    center = random_unit(rng) if center is None else center
    out = []
    for _ in range(size):
        t = rng.normal(size=3)
        t -= (t @ center) * center
        t *= rng.uniform(0, radius) / np.linalg.norm(t)
        out.append(sphere_exp(MetricPoint.sphere(center), t).data)
    return np.array(out)


class TestDistance:
    def test_orthogonal_sphere_points(self):
        d = distance(MetricPoint.sphere([0, 0, 1]), MetricPoint.sphere([1, 0, 0]))
        assert d == pytest.approx(math.pi / 2, abs=1e-15)

    def test_antipodal_sphere_points(self):
        d = distance(MetricPoint.sphere([0, 0, 1]), MetricPoint.sphere([0, 0, -1]))
        assert d == pytest.approx(math.pi, abs=1e-15)

    def test_spd_diagonal(self):
        d = distance(MetricPoint.spd(np.diag([math.e ** 2, 1.0])), MetricPoint.spd(np.eye(2)))
        assert d == pytest.approx(1.0, abs=1e-14)

    def test_spd_matches_hand_rolled_cholesky(self):
        a = np.array([[2, 0.5], [0.5, 1]])
        b = np.array([[1, 0.2], [0.2, 3]])
        expected = log_cholesky_distance(a, b)
        assert distance(MetricPoint.spd(a), MetricPoint.spd(b)) == pytest.approx(expected, rel=1e-13)

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_spd_random_matches_hand_rolled(self, d):
        rng = np.random.default_rng(d)
        for _ in range(20):
            a, b = random_spd(rng, d), random_spd(rng, d)
            got = distance(MetricPoint.spd(a), MetricPoint.spd(b))
            assert got == pytest.approx(log_cholesky_distance(a, b), rel=1e-11)

    def test_euclidean(self):
        assert distance(MetricPoint.euclidean([0, 0]), MetricPoint.euclidean([3, 4])) == 5.0

    def test_variant_mismatch(self):
        with pytest.raises(VariantMismatch):
            distance(MetricPoint.euclidean([0, 0, 1]), MetricPoint.sphere([0, 0, 1]))
        with pytest.raises(VariantMismatch):
            distance(MetricPoint.euclidean([0, 0]), MetricPoint.euclidean([0, 0, 1]))

    def test_invalid_points(self):
        with pytest.raises(NotUnit):
            MetricPoint.sphere([0, 0, 1.01])
        with pytest.raises(NotSpd):
            MetricPoint.spd([[1, 2], [2, 1]])
        with pytest.raises(NotSymmetric):
            MetricPoint.spd([[1, 0.1], [0.0, 1]])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), space=st.sampled_from(["euclidean", "sphere", "spd"]))
def test_metric_axioms(seed, space):
    rng = np.random.default_rng(seed)

    def draw():
        if space == "euclidean":
            return MetricPoint.euclidean(rng.normal(size=3))
        if space == "sphere":
            return MetricPoint.sphere(random_unit(rng))
        return MetricPoint.spd(random_spd(rng, 3))

    a, b, c = draw(), draw(), draw()
    assert distance(a, b) == distance(b, a)
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-10
    assert distance(a, a) <= 1e-9
    assert distance(a, b) > 0


class TestFrechetMean:
    def test_euclidean_pair(self):
        pts = [MetricPoint.euclidean([1.0]), MetricPoint.euclidean([3.0])]
        assert frechet_mean(WeightedSample(pts, [1, 1])).data.tolist() == [2.0]

    def test_euclidean_weighted_average_exact(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=(7, 2))
        w = rng.uniform(0.1, 2, size=7)
        got = frechet_mean(WeightedSample([MetricPoint.euclidean(v) for v in y], w)).data
        np.testing.assert_allclose(got, w @ y / w.sum(), rtol=0, atol=1e-15)

    def test_sphere_symmetric_pair(self):
        t = 0.3
        pts = [MetricPoint.sphere([math.sin(t), 0, math.cos(t)]),
               MetricPoint.sphere([-math.sin(t), 0, math.cos(t)])]
        got = frechet_mean(WeightedSample(pts, [1, 1])).data
        np.testing.assert_allclose(got, [0, 0, 1], atol=1e-12)

    def test_sphere_single_point(self):
        p = MetricPoint.sphere(random_unit(np.random.default_rng(4)))
        for w in (1e-6, 1.0, 1e6):
            assert distance(frechet_mean(WeightedSample([p], [w])), p) <= 1e-12

    def test_spd_matches_numeric_minimizer(self):
        rng = np.random.default_rng(7)
        pts = [random_spd(rng, 2) for _ in range(5)]
        w = rng.uniform(0.1, 1.0, size=5)
        mean = frechet_mean(WeightedSample([MetricPoint.spd(p) for p in pts], w))
        oracle, _ = numeric_spd_mean(pts, w)
        assert distance(mean, MetricPoint.spd(oracle)) <= 1e-4

    def test_sphere_matches_numeric_minimizer(self):
        rng = np.random.default_rng(8)
        pts = random_cap(rng, 8, 1.0)
        w = rng.uniform(0.1, 1.0, size=8)
        mean = frechet_mean(WeightedSample([MetricPoint.sphere(p) for p in pts], w))
        _, best = numeric_sphere_mean(pts, w, pts[0])
        assert sphere_objective(pts, w, mean.data) <= best + 1e-9

    def test_sphere_gradient_small_at_return(self):
        rng = np.random.default_rng(9)
        pts = random_cap(rng, 15, 1.2)
        w = rng.uniform(0, 1, size=15)
        mean = frechet_mean(WeightedSample([MetricPoint.sphere(p) for p in pts], w))
        grad = sum(wi * sphere_log(mean, MetricPoint.sphere(p)) for p, wi in zip(pts, w)) / w.sum()
        assert np.linalg.norm(grad) <= 1e-8

    def test_empty_sample(self):
        with pytest.raises(EmptySample):
            WeightedSample([MetricPoint.euclidean([1.0])], [0.0])
        with pytest.raises(EmptySample):
            WeightedSample([], [])

    def test_degenerate_antipodal(self):
        pts = [MetricPoint.sphere([0, 0, 1]), MetricPoint.sphere([0, 0, -1])]
        with pytest.raises(DegenerateSphereSample):
            frechet_mean(WeightedSample(pts, [2.0, 2.0]))

    def test_unequal_antipodal_also_degenerate(self):
        # minimisers form the circle at distance pi/4 from the heavier point
        pts = [MetricPoint.sphere([0, 0, 1]), MetricPoint.sphere([0, 0, -1])]
        with pytest.raises(DegenerateSphereSample):
            frechet_mean(WeightedSample(pts, [3.0, 1.0]))

    def test_zero_weight_antipode_is_ignored(self):
        pts = [MetricPoint.sphere([0, 0, 1]), MetricPoint.sphere([0, 0, -1])]
        got = frechet_mean(WeightedSample(pts, [1.0, 0.0]))
        np.testing.assert_array_equal(got.data, [0, 0, 1])


@pytest.mark.parametrize("space", ["euclidean", "sphere", "spd"])
def test_mean_optimal_against_perturbations(space):
    rng = np.random.default_rng(11)
    sp = get_space(space)
    for _ in range(20):
        if space == "euclidean":
            pts = rng.normal(size=(6, 2))
        elif space == "sphere":
            pts = random_cap(rng, 6, 1.0)
        else:
            pts = np.stack([random_spd(rng, 2) for _ in range(6)])
        w = rng.uniform(0.05, 1, size=6)
        mean = sp.mean(pts, w)
        f0 = sp.objective(pts, w, mean)
        for _ in range(100):
            if space == "euclidean":
                c = mean + rng.normal(scale=0.1, size=mean.shape)
            elif space == "sphere":
                t = rng.normal(scale=0.1, size=3)
                t -= (t @ mean) * mean
                c = sphere_exp(MetricPoint.sphere(mean), t).data
            else:
                e = rng.normal(scale=0.1, size=(2, 2))
                c = sym_matrix_exp(sym_matrix_log(mean) + (e + e.T) / 2)
            assert f0 <= sp.objective(pts, w, c) + 1e-8


@pytest.mark.parametrize("space", ["euclidean", "sphere", "spd"])
def test_weight_scaling_invariance(space):
    rng = np.random.default_rng(12)
    sp = get_space(space)
    for _ in range(20):
        if space == "euclidean":
            pts = rng.normal(size=(5, 3))
        elif space == "sphere":
            pts = random_cap(rng, 5, 1.0)
        else:
            pts = np.stack([random_spd(rng, 3) for _ in range(5)])
        w = rng.uniform(0.05, 1, size=5)
        base = sp.mean(pts, w)
        for lam in (1e-3, 0.5, 7.0, 1e4):
            assert float(sp.dist(base, sp.mean(pts, lam * w))) <= 1e-10


def test_spd_mean_is_closed_form_in_log_cholesky_coordinates():
    rng = np.random.default_rng(13)
    pts = np.stack([random_spd(rng, 3) for _ in range(4)])
    w = np.array([1.0, 2.0, 0.5, 0.25])
    mean = get_space("spd").mean(pts, w)
    np.testing.assert_allclose(log_cholesky_coords(mean), w @ log_cholesky_coords(pts) / w.sum(), atol=1e-12)
    assert spd_objective(pts, w, mean) <= spd_objective(pts, w, pts[0])


class TestSphereMaps:
    def test_quarter_turn(self):
        got = sphere_exp(MetricPoint.sphere([0, 0, 1]), [math.pi / 2, 0, 0]).data
        np.testing.assert_allclose(got, [1, 0, 0], atol=1e-15)

    def test_zero_tangent(self):
        got = sphere_exp(MetricPoint.sphere([0, 0, 1]), [0, 0, 0]).data
        np.testing.assert_array_equal(got, [0, 0, 1])

    def test_exp_distance_equals_tangent_norm(self):
        base = MetricPoint.sphere([0, 0, 1])
        t = np.array([0.2, -0.1, 0])
        assert distance(base, sphere_exp(base, t)) == pytest.approx(np.linalg.norm(t), abs=1e-14)

    def test_not_tangent(self):
        with pytest.raises(NotTangent):
            sphere_exp(MetricPoint.sphere([0, 0, 1]), [0.1, 0, 0.01])

    def test_log_examples(self):
        base = MetricPoint.sphere([0, 0, 1])
        np.testing.assert_array_equal(sphere_log(base, base), [0, 0, 0])
        v = sphere_log(base, MetricPoint.sphere([1, 0, 0]))
        np.testing.assert_allclose(v, [math.pi / 2, 0, 0], atol=1e-15)

    def test_log_antipodal(self):
        with pytest.raises(AntipodalPair):
            sphere_log(MetricPoint.sphere([0, 0, 1]), MetricPoint.sphere([0, 0, -1]))

    def test_round_trip(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            a, b = MetricPoint.sphere(random_unit(rng)), MetricPoint.sphere(random_unit(rng))
            if a.data @ b.data < -0.999:
                continue
            v = sphere_log(a, b)
            assert np.linalg.norm(v) == pytest.approx(distance(a, b), abs=1e-12)
            np.testing.assert_allclose(sphere_exp(a, v).data, b.data, atol=1e-8)


class TestMatrixFunctions:
    def test_exp_zero(self):
        np.testing.assert_array_equal(sym_matrix_exp(np.zeros((3, 3))), np.eye(3))

    def test_log_diagonal(self):
        np.testing.assert_allclose(sym_matrix_log(np.diag([math.e, math.e ** 2])), np.diag([1.0, 2.0]), atol=1e-14)

    def test_round_trip(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            a = rng.normal(size=(3, 3))
            a = (a + a.T) / 2
            back = sym_matrix_log(sym_matrix_exp(a))
            assert np.linalg.norm(back - a) / np.linalg.norm(a) <= 1e-8

    def test_errors(self):
        with pytest.raises(NotSymmetric):
            sym_matrix_exp([[0, 1], [0, 0]])
        with pytest.raises(NotSpd):
            sym_matrix_log([[1, 0], [0, -1]])


@pytest.mark.parametrize("point", [
    MetricPoint.euclidean([1.5, -2.0]),
    MetricPoint.sphere([0.6, 0.0, 0.8]),
    MetricPoint.spd([[2.0, 0.5], [0.5, 1.0]]),
])
def test_json_round_trip(point):
    text = json.dumps(point.to_json())
    back = MetricPoint.from_json(json.loads(text))
    assert back.space == point.space
    np.testing.assert_array_equal(back.data, point.data)
    assert set(json.loads(text)) == {"space", "data"}


def test_points_are_immutable():
    p = MetricPoint.euclidean([1.0, 2.0])
    with pytest.raises(ValueError):
        p.data[0] = 5.0
