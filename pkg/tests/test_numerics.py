"""Kernel tests: distance maps, the log-ratio similarity, and the
finite-difference oracle itself."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protoforge.numerics import (
    NonFiniteError,
    ShapeMismatchError,
    SimilarityConfig,
    distance_map,
    finite_diff_gradient,
    inverse_similarity,
    similarity,
    similarity_grad,
)


def test_distance_map_identity_case():
    latent = np.array([[[1.0, 2.0]]])
    out = distance_map(latent, np.array([1.0, 2.0]))
    assert out.shape == (1, 1)
    assert out[0, 0] == 0.0


def test_distance_map_3_4_5_triangle():
    latent = np.zeros((1, 1, 2))
    out = distance_map(latent, np.array([3.0, 4.0]))
    assert out[0, 0] == 25.0


def test_distance_map_matches_triple_loop(rng):
    latent = rng.normal(size=(4, 4, 8)).astype(np.float32)
    proto = rng.normal(size=8).astype(np.float32)
    out = distance_map(latent, proto)
    for h in range(4):
        for w in range(4):
            ref = sum(
                (float(latent[h, w, d]) - float(proto[d])) ** 2 for d in range(8)
            )
            assert out[h, w] == pytest.approx(ref, rel=1e-12)


def test_distance_map_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        distance_map(np.zeros((2, 2, 3)), np.zeros(4))
    with pytest.raises(ShapeMismatchError):
        distance_map(np.zeros((2, 3)), np.zeros(3))


def test_distance_map_rejects_nan():
    latent = np.full((1, 1, 2), np.nan)
    with pytest.raises(NonFiniteError):
        distance_map(latent, np.zeros(2))


def test_similarity_zero_distance():
    assert similarity(0.0) == pytest.approx(np.log(10000.0), abs=1e-9)


def test_similarity_closed_form_at_one():
    assert similarity(1.0) == pytest.approx(np.log(2.0 / 1.0001), abs=1e-9)


def test_similarity_monotone_samples():
    s = similarity(np.array([0.0, 1.0, 100.0]))
    assert s[0] > s[1] > s[2] > 0.0


@given(
    st.floats(min_value=0.0, max_value=1e6),
    st.floats(min_value=0.0, max_value=1e6),
)
def test_similarity_strictly_decreasing(a, b):
    lo, hi = sorted((a, b))
    assert similarity(lo) >= similarity(hi)
    if hi - lo > 1e-9 * (1.0 + lo):
        # strict once the gap is resolvable in float64
        assert similarity(lo) > similarity(hi)


def test_similarity_rejects_negative():
    with pytest.raises(ValueError):
        similarity(-0.5)
    with pytest.raises(ValueError):
        similarity_grad(np.array([1.0, -1.0]))


def test_similarity_grad_negative_everywhere(rng):
    d = rng.uniform(0, 50, size=100)
    assert np.all(similarity_grad(d) < 0)


def test_similarity_grad_matches_finite_difference(rng):
    for d0 in rng.uniform(0.01, 20.0, size=10):
        g = finite_diff_gradient(lambda x: float(similarity(x[0])), np.array([d0]))
        assert g[0] == pytest.approx(float(similarity_grad(d0)), rel=1e-5)


@given(st.floats(min_value=0.0, max_value=1e4))
@settings(max_examples=200)
def test_inverse_similarity_round_trip(d):
    s = similarity(d)
    assert inverse_similarity(s) == pytest.approx(d, rel=1e-6, abs=1e-9)


def test_inverse_similarity_clamps_at_zero():
    # values slightly above sim(0) must not go negative
    s_max = float(similarity(0.0))
    assert inverse_similarity(s_max + 1e-9) == 0.0


def test_similarity_config_validation():
    with pytest.raises(ValueError):
        SimilarityConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        SimilarityConfig(epsilon=1.5)
    assert SimilarityConfig(epsilon=0.01).epsilon == 0.01


def test_finite_diff_quadratic():
    g = finite_diff_gradient(lambda x: float(x[0] ** 2), np.array([3.0]))
    assert g[0] == pytest.approx(6.0, rel=1e-5)


def test_finite_diff_linear(rng):
    x = rng.normal(size=7)
    g = finite_diff_gradient(lambda v: float(v.sum()), x)
    assert np.allclose(g, 1.0, atol=1e-8)


def test_finite_diff_rejects_nonfinite():
    with pytest.raises(NonFiniteError):
        finite_diff_gradient(lambda x: float("nan"), np.zeros(2))
