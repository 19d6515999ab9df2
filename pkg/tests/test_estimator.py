"""Estimator wrapper: sklearn conventions plus round-trip behavior."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dont.estimator import DynamicTranslator
from dont.exceptions import ValidationError
from dont.measures import DatasetSpec, gen_gaussian
from dont.numerics import Rng


def small_task(n=96, seed=6):
    spec = DatasetSpec(
        "gaussian", n, seed, {"mean_a": [0.0, 0.0], "mean_b": [2.0, 1.0]}
    )
    return gen_gaussian(spec)


def quick(**kw) -> DynamicTranslator:
    base = dict(
        n_steps=3, hidden=16, gain=0.05, discrepancy="energy",
        iterations=150, batch_size=32, learning_rate=0.01, eval_every=75,
        random_state=0,
    )
    base.update(kw)
    return DynamicTranslator(**base)


class TestSklearnContract:
    def test_get_params_round_trip(self):
        est = quick(epsilon=0.2)
        params = est.get_params()
        assert params["discrepancy"] == "energy"
        est2 = DynamicTranslator(**params)
        assert est2.get_params() == params

    def test_clone_preserves_params(self):
        est = quick(hidden=24)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()
        assert not hasattr(cloned, "model_")

    def test_unfitted_raises(self):
        est = quick()
        with pytest.raises(NotFittedError):
            est.transform(np.zeros((3, 2)))
        with pytest.raises(NotFittedError):
            est.inverse_transform(np.zeros((3, 2)))


class TestFitTransform:
    def test_fit_moves_cloud_toward_target(self):
        alpha, beta = small_task()
        est = quick().fit(alpha.points, beta.points)
        out = est.transform(alpha.points)
        assert out.shape == alpha.points.shape
        before = np.linalg.norm(alpha.points.mean(axis=0) - beta.points.mean(axis=0))
        after = np.linalg.norm(out.mean(axis=0) - beta.points.mean(axis=0))
        assert after < before

    def test_fit_transform_matches_fit_then_transform(self):
        alpha, beta = small_task()
        a = quick().fit_transform(alpha.points, beta.points)
        b = quick().fit(alpha.points, beta.points).transform(alpha.points)
        np.testing.assert_array_equal(a, b)

    def test_fit_transform_requires_target(self):
        alpha, _ = small_task()
        with pytest.raises(ValidationError):
            quick().fit_transform(alpha.points)

    def test_deterministic_in_random_state(self):
        alpha, beta = small_task()
        a = quick(random_state=3).fit(alpha.points, beta.points).transform(alpha.points)
        b = quick(random_state=3).fit(alpha.points, beta.points).transform(alpha.points)
        c = quick(random_state=4).fit(alpha.points, beta.points).transform(alpha.points)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_report_and_attrs_exposed(self):
        alpha, beta = small_task()
        est = quick().fit(alpha.points, beta.points)
        assert est.n_features_in_ == 2
        assert est.cost_spec_.p == 2.0
        assert [r.iteration for r in est.report_.rows] == [0, 75, 150]


class TestInverse:
    def test_explicit_inverse_roughly_closes(self):
        alpha, beta = small_task()
        est = quick().fit(alpha.points, beta.points)
        y = est.transform(alpha.points)
        back = est.inverse_transform(y)
        mse = float(np.mean(np.sum((back - alpha.points) ** 2, axis=1)))
        scale = float(np.mean(np.sum(alpha.points**2, axis=1)))
        assert mse < 0.1 * scale

    def test_exact_inverse_closes_tightly(self):
        alpha, beta = small_task()
        est = quick().fit(alpha.points, beta.points)
        y = est.transform(alpha.points)
        back = est.inverse_transform(y, exact=True)
        round_trip = est.transform(back)
        assert float(np.max(np.abs(round_trip - y))) < 1e-8

    def test_interpolate_endpoints(self):
        alpha, beta = small_task()
        est = quick().fit(alpha.points, beta.points)
        np.testing.assert_array_equal(est.interpolate(alpha.points, 0), alpha.points)
        np.testing.assert_array_equal(
            est.interpolate(alpha.points, 3), est.transform(alpha.points)
        )


class TestValidation:
    def test_dim_mismatch_rejected(self):
        alpha, beta = small_task()
        with pytest.raises(ValidationError):
            quick().fit(alpha.points, beta.points[:, :1])

    def test_mmd_default_also_trains(self):
        alpha, beta = small_task(n=64)
        est = quick(discrepancy="mmd", iterations=60, eval_every=30)
        est.fit(alpha.points, beta.points)
        assert est.report_.rows[-1].discrepancy <= est.report_.rows[0].discrepancy

    def test_accepts_1d_arrays(self):
        rng = Rng(1)
        x = rng.derive(0).standard_normal(80)
        y = rng.derive(1).standard_normal(80) + 2.0
        est = quick(iterations=80, eval_every=40, batch_size=24)
        out = est.fit(x, y).transform(x)
        assert out.shape == (80, 1)
