import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from oracles import magnitude_by_inverse
from uts.core import DistanceMatrix, PointCloud, normalize_rows, pairwise_distances
from uts.diversity import (
    MagnitudeCurve,
    convergence_scale,
    magnitude,
    magnitude_area,
    magnitude_dimension,
    magnitude_function,
    mean_pairwise_similarity,
    spread,
    uniformity,
    vendi_score,
)
from uts.errors import ConditioningError, EstimationError, PreconditionError
from uts.synthetic import segment, square


def two_point(d):
    return DistanceMatrix(np.array([[0.0, d], [d, 0.0]]))


def closed_form(d):
    return 2.0 / (1.0 + math.exp(-d))


def random_dm(seed, n, dim=3):
    return pairwise_distances(np.random.default_rng(seed).normal(size=(n, dim)))


class TestMagnitude:
    def test_single_point(self):
        assert magnitude(np.zeros((1, 1)), t=3.0) == 1.0

    @pytest.mark.parametrize("d", [0.1, 1.0, 5.0])
    def test_two_point_closed_form(self, d):
        assert abs(magnitude(two_point(d)) - closed_form(d)) <= 1e-9
        assert abs(spread(two_point(d)) - closed_form(d)) <= 1e-9

    @given(st.integers(0, 2**32 - 1), st.integers(2, 20), st.floats(0.05, 20))
    def test_matches_explicit_inverse(self, seed, n, t):
        dm = random_dm(seed, n)
        assert magnitude(dm, t) == pytest.approx(magnitude_by_inverse(dm.d, t), rel=1e-6)

    @given(st.integers(0, 2**32 - 1), st.integers(2, 20))
    def test_bounded_and_nondecreasing(self, seed, n):
        dm = random_dm(seed, n)
        values = [magnitude(dm, t) for t in np.geomspace(0.05, 50, 15)]
        assert all(0 < v <= n + 1e-9 for v in values)
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))

    def test_duplicates_named(self):
        d = pairwise_distances(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(ConditioningError, match="1 and 2"):
            magnitude(d)

    def test_bad_scale(self):
        with pytest.raises(PreconditionError):
            magnitude(two_point(1.0), t=0.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_convergence_scale(self, seed):
        n = 5 + seed * 2
        dm = random_dm(seed, n, dim=4)
        t_cut = convergence_scale(dm)
        assert magnitude(dm, t_cut) >= 0.95 * n
        assert magnitude(dm, t_cut * (1 - 2e-3)) < 0.95 * n


class TestCurve:
    def test_two_point_grid(self):
        curve = magnitude_function(two_point(1.0), grid_size=4)
        assert len(curve.t_grid) == 4
        for t, v in zip(curve.t_grid, curve.values):
            assert v == pytest.approx(closed_form(t), abs=1e-9)
        assert curve.values[-1] >= 1.9

    @given(st.integers(0, 2**32 - 1), st.integers(2, 20))
    def test_curve_nondecreasing(self, seed, n):
        curve = magnitude_function(random_dm(seed, n), grid_size=12)
        assert np.all(np.diff(curve.values) >= -1e-9)
        assert curve.values[-1] >= 0.95 * n - 1e-9

    def test_duplicates(self):
        with pytest.raises(ConditioningError):
            magnitude_function(pairwise_distances(np.zeros((3, 2))))

    def test_csv(self, tmp_path):
        curve = magnitude_function(two_point(1.0), grid_size=8)
        curve.to_csv(tmp_path / "m.csv")
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == "t,magnitude" and len(lines) == 9
        assert float(lines[1].split(",")[1]) == pytest.approx(curve.values[0])

    def test_dimension_segment_square(self):
        # window slopes on 1000 points; a dense-grid fit over the same curve
        # is the oracle for the estimator's range
        seg = magnitude_dimension(magnitude_function(pairwise_distances(segment(1000, seed=2))))
        sq = magnitude_dimension(magnitude_function(pairwise_distances(square(1000, seed=2))))
        assert seg == pytest.approx(1.0, abs=0.3)
        assert sq == pytest.approx(2.0, abs=0.4)

    def test_dimension_constant_curve(self):
        curve = magnitude_function(np.zeros((1, 1)), grid_size=10)
        assert magnitude_dimension(curve) == 0.0

    def test_dimension_needs_points(self):
        curve = MagnitudeCurve(np.arange(1.0, 6.0), np.ones(5), 5.0)
        with pytest.raises(EstimationError):
            magnitude_dimension(curve)

    def test_area_examples(self):
        assert magnitude_area(MagnitudeCurve([0.0, 1.0, 2.0], [1.0, 1.0, 1.0], 2.0)) == 2.0
        assert magnitude_area(MagnitudeCurve([0.0, 2.0], [0.0, 2.0], 2.0)) == 2.0

    def test_area_two_point_quadrature(self):
        # trapezoid error shrinks with the grid; 128 log-spaced points suffice
        curve = magnitude_function(two_point(1.0), grid_size=128)
        exact, _ = quad(closed_form, curve.t_grid[0], curve.t_cut)
        assert magnitude_area(curve) == pytest.approx(exact, abs=1e-3)


class TestSpread:
    def test_identical_points(self):
        assert spread(np.zeros((6, 6))) == pytest.approx(1.0)

    def test_far_points(self):
        d = np.full((5, 5), 1e4)
        np.fill_diagonal(d, 0)
        assert spread(d) == pytest.approx(5.0)

    def test_scale_limits(self, rng):
        dm = pairwise_distances(rng.normal(size=(15, 3)))
        values = [spread(dm.scaled(t)) for t in np.geomspace(1e-4, 1e4, 30)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
        assert values[0] == pytest.approx(1.0, abs=1e-2)
        assert values[-1] == pytest.approx(15.0, abs=1e-6)


def unit(x):
    return normalize_rows(PointCloud(np.asarray(x, dtype=float)))


class TestKernels:
    def test_vendi_examples(self):
        assert abs(vendi_score(unit(np.eye(7))) - 7.0) <= 1e-9
        assert abs(vendi_score(unit(np.ones((9, 4)))) - 1.0) <= 1e-9
        sixty = unit([[1.0, 0.0], [0.5, math.sqrt(3) / 2]])
        assert vendi_score(sixty) == pytest.approx(1.7547653506033232, abs=1e-9)

    def test_vendi_requires_unit(self):
        with pytest.raises(PreconditionError):
            vendi_score(PointCloud([[2.0, 0.0]]))

    @given(st.integers(0, 2**32 - 1), st.integers(2, 30))
    def test_vendi_bounds_and_permutation(self, seed, n):
        rng = np.random.default_rng(seed)
        cloud = unit(rng.normal(size=(n, 5)))
        v = vendi_score(cloud)
        assert 1 - 1e-9 <= v <= n + 1e-9
        assert vendi_score(cloud.take(rng.permutation(n))) == pytest.approx(v, rel=1e-9)

    def test_mean_similarity_examples(self):
        assert mean_pairwise_similarity(unit(np.ones((4, 3)))) == pytest.approx(1.0)
        assert mean_pairwise_similarity(unit(np.eye(2))) == pytest.approx(0.5)
        pair = PointCloud([[0.0, 0.0], [1.0, 0.0]])
        assert mean_pairwise_similarity(pair, "exp_euclidean") == pytest.approx(0.6839397205857212, abs=1e-12)

    def test_mean_similarity_matches_double_sum(self, rng):
        cloud = unit(rng.normal(size=(40, 6)))
        x = cloud.data
        assert mean_pairwise_similarity(cloud) == pytest.approx(np.mean(x @ x.T), abs=1e-12)
        d = np.linalg.norm(x[:, None] - x[None], axis=2)
        assert mean_pairwise_similarity(cloud, "exp_euclidean") == pytest.approx(np.mean(np.exp(-d)), abs=1e-12)

    def test_uniformity_examples(self):
        assert uniformity(unit(np.ones((3, 2)))) == pytest.approx(0.0, abs=1e-15)
        antipodal = unit([[1.0, 0.0], [-1.0, 0.0]])
        assert uniformity(antipodal) == pytest.approx(-0.6928117741870496, abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_uniformity_nonpositive_and_spreading(self, seed):
        rng = np.random.default_rng(seed)
        centre = rng.normal(size=5)
        noise = rng.normal(size=(30, 5))
        values = [uniformity(unit(centre + s * noise)) for s in (0.01, 0.1, 1.0, 10.0)]
        assert all(v <= 1e-15 for v in values)
        assert all(b < a for a, b in zip(values, values[1:]))
