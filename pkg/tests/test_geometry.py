import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedlens import geometry
from embedlens.errors import DimensionMismatch, EmptySet, ZeroVector

finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


def vectors(min_dim=2, max_dim=8):
    return st.integers(min_dim, max_dim).flatmap(
        lambda d: st.lists(finite_floats, min_size=d, max_size=d)
    ).filter(lambda v: math.sqrt(sum(x * x for x in v)) > 1e-6)


class TestUnitNormalize:
    def test_three_four_five(self):
        assert np.allclose(geometry.unit_normalize([3, 4]), [0.6, 0.8])

    def test_identity_on_unit_vector(self):
        np.testing.assert_array_equal(
            geometry.unit_normalize([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0]
        )

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVector):
            geometry.unit_normalize([0.0, 0.0])

    @given(vectors())
    @settings(max_examples=50)
    def test_idempotent(self, v):
        once = geometry.unit_normalize(v)
        twice = geometry.unit_normalize(once)
        assert np.max(np.abs(twice - once)) <= 1e-12

    @given(vectors())
    @settings(max_examples=50)
    def test_norm_is_one(self, v):
        assert abs(np.linalg.norm(geometry.unit_normalize(v)) - 1.0) <= 1e-12


class TestCosineSimilarity:
    def test_identical(self):
        assert geometry.cosine_similarity([1, 0], [1, 0]) == 1.0

    def test_orthogonal(self):
        assert geometry.cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_antipodal(self):
        assert geometry.cosine_similarity([1, 0], [-1, 0]) == -1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            geometry.cosine_similarity([1, 0], [1, 0, 0])

    def test_clamped(self, rng):
        v = geometry.unit_normalize(rng.standard_normal(64))
        assert geometry.cosine_similarity(v, v) <= 1.0


class TestCodiff:
    def test_self_is_zero(self):
        assert geometry.codiff([1.0, 0.0], [1.0, 0.0]) == 0.0

    def test_orthogonal_is_one(self):
        assert geometry.codiff([1, 0], [0, 1]) == 1.0

    def test_antipodal_is_two(self):
        assert geometry.codiff([1, 0], [-1, 0]) == 2.0

    @given(vectors(), vectors())
    @settings(max_examples=50)
    def test_symmetry_exact(self, a, b):
        if len(a) != len(b):
            return
        ua = geometry.unit_normalize(a)
        ub = geometry.unit_normalize(b)
        assert geometry.codiff(ua, ub) == geometry.codiff(ub, ua)


class TestSphericalCentroid:
    def test_singleton(self):
        np.testing.assert_allclose(
            geometry.spherical_centroid([[1.0, 0.0]]), [1.0, 0.0]
        )

    def test_symmetry_forces_bisector(self):
        np.testing.assert_allclose(
            geometry.spherical_centroid([[1, 0], [0, 1]]),
            [0.70711, 0.70711], atol=5e-6,
        )

    def test_cancellation_rejected(self):
        with pytest.raises(ZeroVector):
            geometry.spherical_centroid([[1.0, 0.0], [-1.0, 0.0]])

    def test_empty_rejected(self):
        with pytest.raises(EmptySet):
            geometry.spherical_centroid(np.empty((0, 3)))

    def test_scale_invariance(self, rng):
        rows = rng.standard_normal((20, 8))
        scales = rng.uniform(0.1, 10.0, size=20)
        base = geometry.spherical_centroid(rows)
        scaled = geometry.spherical_centroid(rows * scales[:, None])
        assert np.max(np.abs(base - scaled)) <= 1e-9

    def test_permutation_invariance(self, rng):
        rows = rng.standard_normal((25, 6))
        base = geometry.spherical_centroid(rows)
        shuffled = geometry.spherical_centroid(rows[rng.permutation(25)])
        assert np.max(np.abs(base - shuffled)) <= 1e-12
