"""PSD square roots against hand-computed values; random-stream discipline."""

import numpy as np
import pytest

from dont.exceptions import NotPsdError
from dont.numerics import Rng, psd_inv_sqrt, psd_sqrt


class TestPsdSqrt:
    def test_diagonal(self):
        np.testing.assert_allclose(
            psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12
        )

    def test_reconstruction(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((5, 5))
        a = m @ m.T
        b = psd_sqrt(a)
        assert np.linalg.norm(b @ b - a) < 1e-8
        np.testing.assert_allclose(b, b.T, atol=1e-14)

    def test_projection_is_own_root(self):
        # rank-1 projector: idempotent, so sqrt(P) = P
        v = np.array([[3.0], [4.0]]) / 5.0
        p = v @ v.T
        np.testing.assert_allclose(psd_sqrt(p), p, atol=1e-10)

    def test_asymmetric_rejected(self):
        with pytest.raises(NotPsdError):
            psd_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(NotPsdError):
            psd_sqrt(np.array([[1.0, 0.0], [0.0, -0.5]]))

    def test_tiny_negative_noise_clamped(self):
        a = np.diag([1.0, -1e-12])
        b = psd_sqrt(a)
        assert b[1, 1] == 0.0

    def test_inv_sqrt(self):
        a = np.diag([4.0, 16.0])
        np.testing.assert_allclose(psd_inv_sqrt(a), np.diag([0.5, 0.25]), atol=1e-12)
        with pytest.raises(NotPsdError):
            psd_inv_sqrt(np.diag([1.0, 0.0]))


class TestRng:
    def test_same_seed_same_draws(self):
        a = Rng(42).standard_normal(100)
        b = Rng(42).standard_normal(100)
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        assert not np.array_equal(Rng(1).standard_normal(50), Rng(2).standard_normal(50))

    def test_streams_are_independent(self):
        base = Rng(7, stream=0).standard_normal(64)
        other = Rng(7, stream=1).standard_normal(64)
        assert not np.array_equal(base, other)

    def test_derive_matches_nested_key(self):
        # derive() is pure in (seed, key path), not call order
        a = Rng(11, stream=2).derive(5).standard_normal(16)
        b = Rng(11, stream=2).derive(5).standard_normal(16)
        np.testing.assert_array_equal(a, b)
        c = Rng(11, stream=2).derive(6).standard_normal(16)
        assert not np.array_equal(a, c)

    def test_derive_does_not_disturb_parent(self):
        r1 = Rng(9)
        _ = r1.derive(0).standard_normal(8)
        first = r1.standard_normal(8)
        r2 = Rng(9)
        np.testing.assert_array_equal(first, r2.standard_normal(8))

    def test_permutation_deterministic(self):
        np.testing.assert_array_equal(Rng(5).permutation(20), Rng(5).permutation(20))
