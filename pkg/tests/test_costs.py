"""Cost evaluations against hand computations; mask selection behavior."""

from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dont.costs import (
    CostSpec,
    dynamic_cost,
    endpoint_cost,
    fit_sparse_mask,
    ground_cost,
    pairwise_cost,
)
from dont.exceptions import DimensionError, MaskError, ValidationError
from dont.measures import DatasetSpec, EmpiricalMeasure, gen_digit_swap_analog


def make_traj(velocities, start=None):
    vels = np.stack([np.asarray(v, dtype=np.float64) for v in velocities], axis=1)
    k = vels.shape[1]
    dt = 1.0 / k
    pos = np.zeros((vels.shape[0], k + 1, vels.shape[2]))
    pos[:, 0] = 0.0 if start is None else np.asarray(start)
    for j in range(k):
        pos[:, j + 1] = pos[:, j] + dt * vels[:, j]
    return SimpleNamespace(velocities=vels, dt=dt, positions=pos)


class TestCostSpec:
    def test_power_below_one_rejected(self):
        with pytest.raises(ValidationError):
            CostSpec(p=0.5)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValidationError):
            CostSpec(weights=[1.0, -0.1])

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ValidationError):
            CostSpec(weights=[0.0, 0.0])

    def test_weight_length_checked_at_use(self):
        spec = CostSpec(weights=[1.0, 1.0])
        with pytest.raises(DimensionError):
            ground_cost(spec, [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])


class TestGroundCost:
    def test_squared_euclidean(self):
        assert ground_cost(CostSpec(), [0.0, 0.0], [3.0, 4.0]) == 25.0

    def test_masked_coordinate_free(self):
        spec = CostSpec(weights=[0.0, 1.0])
        assert ground_cost(spec, [0.0, 1.0], [3.0, 1.0]) == 0.0

    def test_p_three_halves(self):
        got = ground_cost(CostSpec(p=1.5), [0.0], [8.0])
        assert got == pytest.approx(8.0**1.5)
        assert got == pytest.approx(22.627416997969522)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionError):
            ground_cost(CostSpec(), [0.0], [1.0, 2.0])

    @given(
        st.lists(st.floats(-50, 50), min_size=1, max_size=5),
        st.floats(1.0, 4.0),
    )
    def test_symmetry_and_identity(self, coords, p):
        x = np.array(coords)
        y = x[::-1].copy()
        spec = CostSpec(p=p)
        assert ground_cost(spec, x, y) == pytest.approx(ground_cost(spec, y, x))
        assert ground_cost(spec, x, x) == 0.0

    def test_pairwise_matches_scalar(self):
        rng = np.random.default_rng(2)
        xs, ys = rng.standard_normal((4, 3)), rng.standard_normal((5, 3))
        spec = CostSpec(p=1.5, weights=[1.0, 0.0, 2.0])
        mat = pairwise_cost(spec, xs, ys)
        for i in range(4):
            for j in range(5):
                assert mat[i, j] == pytest.approx(ground_cost(spec, xs[i], ys[j]))


class TestDynamicCost:
    def test_constant_unit_field(self):
        # v = (1,0) over two half-steps: (1/2) * (1 + 1) = 1
        traj = make_traj([np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]])])
        assert dynamic_cost(traj, CostSpec()) == pytest.approx(1.0)

    def test_zero_field(self):
        traj = make_traj([np.zeros((3, 2))] * 4)
        assert dynamic_cost(traj, CostSpec()) == 0.0

    def test_against_summation_oracle(self):
        rng = np.random.default_rng(9)
        vels = [rng.standard_normal((6, 3)) for _ in range(4)]
        spec = CostSpec(p=2.5, weights=[0.5, 1.5, 0.0])
        w = [0.5, 1.5, 0.0]
        total = 0.0
        for v in vels:
            for x in range(6):
                for i in range(3):
                    total += w[i] * abs(v[x, i]) ** 2.5
        expected = (1.0 / 4) * total / 6
        assert dynamic_cost(make_traj(vels), spec) == pytest.approx(expected, abs=1e-12)

    def test_empty_rejected(self):
        traj = SimpleNamespace(
            velocities=np.zeros((1, 0, 1)), dt=1.0, positions=np.zeros((1, 1, 1))
        )
        with pytest.raises(ValidationError):
            dynamic_cost(traj, CostSpec())

    def test_jensen_bound_random_paths(self):
        # kinetic cost dominates the mean endpoint cost for dt = 1/K
        rng = np.random.default_rng(4)
        for trial in range(5):
            vels = [rng.standard_normal((8, 2)) for _ in range(5)]
            traj = make_traj(vels, start=rng.standard_normal((8, 2)))
            spec = CostSpec(p=2.0)
            assert dynamic_cost(traj, spec) >= endpoint_cost(traj, spec) - 1e-9

    def test_straight_path_attains_bound(self):
        v = np.array([[2.0, -1.0]])
        traj = make_traj([v, v, v])
        spec = CostSpec()
        assert dynamic_cost(traj, spec) == pytest.approx(endpoint_cost(traj, spec))


def pooled_digit_swap(n=400, seed=0):
    alpha, beta = gen_digit_swap_analog(DatasetSpec("digit_swap", n, seed))
    pts = np.vstack([alpha.points, beta.points])
    pos = np.concatenate([alpha.label("position"), beta.label("position")])
    return EmpiricalMeasure(pts, labels={"position": pos})


class TestSparseMask:
    def test_selects_position_coordinate(self):
        report = fit_sparse_mask(pooled_digit_swap(), 0.1, attribute="position")
        np.testing.assert_array_equal(report.selected, [0])
        np.testing.assert_array_equal(report.cost_weights, [0.0, 1.0])
        assert abs(report.weights[0]) > 1e-3
        assert abs(report.weights[1]) <= 1e-6

    def test_random_labels_select_nothing(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((300, 4))
        labels = {"position": rng.integers(0, 2, 300)}
        report = fit_sparse_mask(EmpiricalMeasure(pts, labels=labels), 0.1)
        assert report.selected.size == 0
        np.testing.assert_array_equal(report.cost_weights, np.ones(4))

    def test_zero_strength_rejected(self):
        with pytest.raises(MaskError):
            fit_sparse_mask(pooled_digit_swap(), 0.0)

    def test_single_class_rejected(self):
        pts = np.random.default_rng(0).standard_normal((50, 2))
        m = EmpiricalMeasure(pts, labels={"position": np.zeros(50, dtype=int)})
        with pytest.raises(MaskError):
            fit_sparse_mask(m, 0.1)

    def test_monotone_in_strength(self):
        data = pooled_digit_swap()
        grid = [0.02, 0.1, 0.5]
        selections = [set(fit_sparse_mask(data, s).selected.tolist()) for s in grid]
        for weak, strong in zip(selections, selections[1:]):
            assert strong.issubset(weak)
