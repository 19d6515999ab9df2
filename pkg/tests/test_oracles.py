"""Oracle solvers checked against analytic values and brute force."""

import itertools

import numpy as np
import pytest

from dont.costs import CostSpec
from dont.discrepancy import DiscrepancySpec, discrepancy_value, permutation_threshold
from dont.exceptions import NotPsdError, ValidationError
from dont.measures import EmpiricalMeasure
from dont.numerics import Rng
from dont.oracles import (
    IllPosedMap,
    OracleResult,
    illposed_construct,
    mccann,
    ot_1d,
    ot_exact,
    ot_gaussian,
)


class TestOt1d:
    def test_uniform_shift_stretch_integral(self):
        # U[0,1] -> U[2,4] on midpoint quantile grids; limit is
        # int_0^1 (2+x)^2 dx = 19/3
        n = 1000
        grid = (np.arange(n) + 0.5) / n
        res = ot_1d(grid, 2.0 + 2.0 * grid)
        assert res.cost == pytest.approx(19.0 / 3.0, rel=1e-2)

    def test_identical_zero_identity(self):
        x = Rng(0).standard_normal(50)
        res = ot_1d(x, x.copy())
        assert res.cost == 0.0
        np.testing.assert_array_equal(res.pairing, np.arange(50))

    def test_gaussian_task_cost(self):
        # closed form (3-0)^2 + (1-0.5)^2 = 9.25
        rng = Rng(3)
        x = rng.derive(0).standard_normal(4000)
        y = 3.0 + 0.5 * rng.derive(1).standard_normal(4000)
        res = ot_1d(x, y)
        assert res.cost == pytest.approx(9.25, abs=0.4)

    def test_pairing_is_permutation_and_maps_to_sorted_targets(self):
        rng = Rng(5)
        x = rng.derive(0).standard_normal(31)
        y = rng.derive(1).standard_normal(31)
        res = ot_1d(x, y)
        assert sorted(res.pairing.tolist()) == list(range(31))
        np.testing.assert_array_equal(
            res.paired_targets[np.argsort(x), 0], np.sort(y)
        )

    def test_apply_returns_matched_targets(self):
        x = np.array([0.3, -1.2, 0.9])
        y = np.array([5.0, 7.0, 6.0])
        res = ot_1d(x, y)
        np.testing.assert_array_equal(res.apply(x[:, None])[:, 0], [6.0, 5.0, 7.0])

    def test_rejects_unequal_or_multidim(self):
        with pytest.raises(ValidationError):
            ot_1d(np.zeros(4), np.zeros(5))
        with pytest.raises(ValidationError):
            ot_1d(np.zeros((4, 2)), np.zeros((4, 2)))
        with pytest.raises(ValidationError):
            ot_1d(np.zeros(4), np.zeros(4), p=0.5)


class TestOtGaussian:
    def test_diagonal_example(self):
        res = ot_gaussian([0.0, 0.0], np.eye(2), [2.0, 0.0], np.diag([4.0, 1.0]))
        np.testing.assert_allclose(res.matrix, np.diag([2.0, 1.0]), atol=1e-10)
        assert res.cost == pytest.approx(5.0, abs=1e-10)

    def test_identical_zero_identity_map(self):
        cov = np.array([[2.0, 0.3], [0.3, 1.0]])
        res = ot_gaussian([1.0, -1.0], cov, [1.0, -1.0], cov)
        assert res.cost == pytest.approx(0.0, abs=1e-10)
        np.testing.assert_allclose(res.matrix, np.eye(2), atol=1e-8)

    def test_1d_closed_form(self):
        res = ot_gaussian([0.0], [[1.0]], [3.0], [[0.25]])
        assert res.cost == pytest.approx(9.25, abs=1e-12)
        assert res.matrix[0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_pushforward_matches_target_moments(self):
        rng = Rng(9)
        a_root = rng.derive(0).standard_normal((3, 3))
        b_root = rng.derive(1).standard_normal((3, 3))
        cov_a = a_root @ a_root.T + 0.5 * np.eye(3)
        cov_b = b_root @ b_root.T + 0.5 * np.eye(3)
        ma, mb = np.array([1.0, 0.0, -2.0]), np.array([0.0, 3.0, 1.0])
        res = ot_gaussian(ma, cov_a, mb, cov_b)
        n = 100_000
        from dont.numerics import psd_sqrt

        x = rng.derive(2).standard_normal((n, 3)) @ psd_sqrt(cov_a).T + ma
        y = res.apply(x)
        se_mean = np.sqrt(np.diag(cov_b) / n)
        np.testing.assert_allclose(y.mean(axis=0), mb, atol=3 * se_mean.max())
        scale = np.abs(cov_b).max()
        np.testing.assert_allclose(np.cov(y.T), cov_b, atol=0.05 * scale)

    def test_rejects_bad_covariances(self):
        with pytest.raises(NotPsdError):
            ot_gaussian([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0], np.eye(2))
        with pytest.raises(NotPsdError):
            ot_gaussian([0.0, 0.0], np.diag([1.0, -0.5]), [0.0, 0.0], np.eye(2))
        with pytest.raises(ValidationError):
            ot_gaussian([0.0], [[1.0]], [0.0, 0.0], np.eye(2))


class TestOtExact:
    def test_two_point_example(self):
        alpha = np.array([[0.0, 0.0], [1.0, 0.0]])
        beta = np.array([[0.0, 1.0], [1.0, 1.0]])
        res = ot_exact(alpha, beta)
        assert res.cost == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_array_equal(res.pairing, [0, 1])

    def test_matches_brute_force_n7(self):
        rng = Rng(11)
        x = rng.derive(0).standard_normal((7, 3))
        y = rng.derive(1).standard_normal((7, 3))
        spec = CostSpec(p=2.0)
        res = ot_exact(x, y, spec)
        diffs = x[:, None, :] - y[None, :, :]
        mat = np.sum(diffs**2, axis=2)
        best = min(
            float(mat[np.arange(7), list(perm)].mean())
            for perm in itertools.permutations(range(7))
        )
        assert res.cost == pytest.approx(best, abs=1e-12)

    def test_permuted_copy_costs_zero(self):
        rng = Rng(2)
        x = rng.derive(0).standard_normal((20, 2))
        perm = rng.derive(1).permutation(20)
        res = ot_exact(x, x[perm])
        assert res.cost == 0.0
        np.testing.assert_array_equal(res.paired_targets, x)

    def test_beats_random_permutations(self):
        rng = Rng(7)
        x = rng.derive(0).standard_normal((40, 2))
        y = rng.derive(1).standard_normal((40, 2)) + 1.0
        res = ot_exact(x, y)
        mat = np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=2)
        shuffler = rng.derive(2)
        for _ in range(100):
            perm = shuffler.permutation(40)
            assert res.cost <= float(mat[np.arange(40), perm].mean()) + 1e-12

    def test_respects_cost_weights(self):
        # masking the second coordinate makes the vertical offset free
        alpha = np.array([[0.0, 0.0], [1.0, 0.0]])
        beta = np.array([[1.0, 5.0], [0.0, 5.0]])
        res = ot_exact(alpha, beta, CostSpec(weights=(1.0, 0.0)))
        assert res.cost == 0.0
        np.testing.assert_array_equal(res.pairing, [1, 0])

    def test_size_cap_and_count_mismatch(self):
        big = np.zeros((1025, 1))
        with pytest.raises(ValidationError):
            ot_exact(big, big)
        with pytest.raises(ValidationError):
            ot_exact(np.zeros((3, 1)), np.zeros((4, 1)))


class TestMccann:
    def make_task(self):
        oracle = ot_gaussian([0.0], [[1.0]], [3.0], [[0.25]])
        alpha = EmpiricalMeasure(Rng(4).standard_normal((500, 1)))
        return oracle, alpha

    def test_endpoints(self):
        oracle, alpha = self.make_task()
        np.testing.assert_array_equal(mccann(oracle, alpha, 0.0).points, alpha.points)
        np.testing.assert_allclose(
            mccann(oracle, alpha, 1.0).points, oracle.apply(alpha.points), atol=1e-12
        )

    def test_mean_moves_linearly(self):
        oracle, alpha = self.make_task()
        m0 = float(alpha.points.mean())
        m1 = float(oracle.apply(alpha.points).mean())
        for t in (0.25, 0.5, 0.75):
            mt = float(mccann(oracle, alpha, t).points.mean())
            assert mt == pytest.approx((1 - t) * m0 + t * m1, abs=1e-12)

    def test_labels_carried_and_bad_t(self):
        oracle, alpha = self.make_task()
        labeled = EmpiricalMeasure(
            alpha.points, labels={"grp": np.zeros(alpha.n, dtype=np.int64)}
        )
        mid = mccann(oracle, labeled, 0.5)
        assert "grp" in mid.labels
        with pytest.raises(ValidationError):
            mccann(oracle, alpha, 1.5)


class TestIllPosed:
    std2 = (np.zeros(2), np.eye(2))

    def test_zero_angle_is_optimal_map(self):
        tmap = illposed_construct(self.std2, self.std2, 0.0)
        x = Rng(0).standard_normal((100, 2))
        np.testing.assert_allclose(tmap.apply(x), x, atol=1e-12)
        assert tmap.sample_cost(x) == pytest.approx(0.0, abs=1e-20)

    def test_cost_tracks_rotation_formula(self):
        # E|x - R x|^2 = 4(1 - cos theta) for the standard 2-D normal
        rng = Rng(6)
        x = rng.standard_normal((20_000, 2))
        for theta in (0.5, np.pi / 2, np.pi, 5.0):
            tmap = illposed_construct(self.std2, self.std2, theta)
            per_point = np.sum((x - tmap.apply(x)) ** 2, axis=1)
            band = 3.0 * per_point.std() / np.sqrt(x.shape[0])
            assert abs(per_point.mean() - 4.0 * (1.0 - np.cos(theta))) < band

    def test_grid_minimum_at_zero(self):
        x = Rng(1).standard_normal((4000, 2))
        grid = np.linspace(0.0, 2.0 * np.pi, 12, endpoint=False)
        costs = [illposed_construct(self.std2, self.std2, t).sample_cost(x) for t in grid]
        assert int(np.argmin(costs)) == 0

    def test_inverse_is_exact(self):
        spec_a = (np.array([1.0, -2.0]), np.array([[2.0, 0.4], [0.4, 1.0]]))
        spec_b = (np.array([0.0, 3.0]), np.array([[1.0, -0.2], [-0.2, 0.5]]))
        tmap = illposed_construct(spec_a, spec_b, 1.3)
        x = Rng(8).standard_normal((60, 2)) @ np.linalg.cholesky(spec_a[1]).T + spec_a[0]
        np.testing.assert_allclose(tmap.inverse(tmap.apply(x)), x, atol=1e-10)

    def test_pushforward_coherent_for_nonzero_angle(self):
        # rotating whitened samples leaves the law unchanged, so the
        # image must be indistinguishable from an independent target draw
        spec_a = (np.array([1.0, 0.0]), np.array([[2.0, 0.5], [0.5, 1.0]]))
        spec_b = (np.array([-1.0, 2.0]), np.array([[1.0, -0.3], [-0.3, 0.7]]))
        rng = Rng(12)
        from dont.numerics import psd_sqrt

        x = rng.derive(0).standard_normal((256, 2)) @ psd_sqrt(spec_a[1]).T + spec_a[0]
        y = rng.derive(1).standard_normal((256, 2)) @ psd_sqrt(spec_b[1]).T + spec_b[0]
        tmap = illposed_construct(spec_a, spec_b, 2.0)
        moved = tmap.apply(x)
        disc = DiscrepancySpec(kind="energy").resolve(y)
        value = discrepancy_value(disc, moved, y)
        thr = permutation_threshold(disc, moved, y, 200, 0.99, rng=Rng(0, stream=7))
        assert value < thr
        cov_moved = np.cov(moved.T)
        np.testing.assert_allclose(cov_moved, spec_b[1], atol=0.35)

    def test_rejects_non_2d(self):
        with pytest.raises(ValidationError):
            illposed_construct((np.zeros(3), np.eye(3)), (np.zeros(3), np.eye(3)), 0.5)


class TestConsistencyChain:
    def test_1d_rearrangement_agrees_with_assignment(self):
        rng = Rng(14)
        x = rng.derive(0).standard_normal((64, 1))
        y = rng.derive(1).standard_normal((64, 1)) * 0.5 + 2.0
        a = ot_1d(x, y)
        b = ot_exact(x, y)
        assert a.cost == pytest.approx(b.cost, abs=1e-12)

    def test_gaussian_closed_form_agrees_with_assignment(self):
        rng = Rng(15)
        cov_a = np.array([[1.5, 0.3], [0.3, 0.8]])
        cov_b = np.array([[0.6, -0.1], [-0.1, 1.2]])
        ma, mb = np.array([0.0, 0.0]), np.array([2.0, -1.0])
        from dont.numerics import psd_sqrt

        x = rng.derive(0).standard_normal((512, 2)) @ psd_sqrt(cov_a).T + ma
        y = rng.derive(1).standard_normal((512, 2)) @ psd_sqrt(cov_b).T + mb
        closed = ot_gaussian(ma, cov_a, mb, cov_b)
        empirical = ot_exact(x, y)
        assert empirical.cost == pytest.approx(closed.cost, rel=0.15)

    def test_apply_without_map_errors(self):
        res = OracleResult(cost=1.0)
        with pytest.raises(ValidationError):
            res.apply(np.zeros((3, 2)))
