import numpy as np
import pytest
from hypothesis import given, strategies as st

from facetflow.errors import DomainError
from facetflow.truncation import (TruncationParams, inverse_gp_eps, lipschitz_constant, map_gp_eps, truncate,
                                  truncate_relaxed, u_delta_eps, v_eps)

from conftest import random_vectors

coord = st.floats(-1e3, 1e3, allow_nan=False)


def test_truncate_examples():
    np.testing.assert_array_equal(truncate(np.array([0.3, 0.0]), 0.5), [0.0, 0.0])
    np.testing.assert_allclose(truncate(np.array([3.0, 4.0]), 0.5), [2.7, 3.6], rtol=1e-15)


def test_truncate_sup_difference_bound(rng):
    z = random_vectors(rng, 10000, 1e-3, 10.0)
    d = np.linalg.norm(truncate(z, 0.2) - truncate(z, 0.7), axis=-1)
    assert d.max() <= 0.5 + 1e-13  # roundoff at |z| ~ 10


def test_relaxed_truncation_examples():
    np.testing.assert_allclose(truncate_relaxed(np.array([3.0, 4.0]), 0.5, 0.0), [2.7, 3.6], rtol=1e-15)
    # sqrt(0.0025 + 0.2401) = 0.4926 < 0.5
    np.testing.assert_array_equal(truncate_relaxed(np.array([0.49, 0.0]), 0.5, 0.05), [0.0, 0.0])


def test_relaxed_truncation_lipschitz(rng):
    delta = 0.1
    eps = delta / 10
    c = lipschitz_constant(0.1)
    z1 = random_vectors(rng, 100000, 1e-4, 1.0)
    z2 = z1 + random_vectors(rng, 100000, 1e-6, 1.0)
    lhs = np.linalg.norm(truncate_relaxed(z1, 2 * delta, eps) - truncate_relaxed(z2, 2 * delta, eps), axis=-1)
    assert np.all(lhs <= c * np.linalg.norm(z1 - z2, axis=-1) + 1e-15)


def test_lipschitz_constant_values():
    assert lipschitz_constant(1e-9) == pytest.approx(5.0)
    assert lipschitz_constant(1.0 / 8.0) == pytest.approx(1.0 + 64.0 / np.sqrt(255.0), rel=1e-15)
    assert lipschitz_constant(np.sqrt(3.0)) == pytest.approx(9.0)
    for h in (0.0, 2.0):
        with pytest.raises(DomainError):
            lipschitz_constant(h)


def test_v_and_u_examples():
    assert v_eps(np.zeros(2), 0.1) == pytest.approx(0.1)
    assert u_delta_eps(np.zeros(2), 0.2, 0.1) == 0.0
    assert v_eps(np.array([0.3, 0.4]), 0.0) == pytest.approx(0.5)
    assert u_delta_eps(np.array([0.3, 0.4]), 0.2, 0.0) == pytest.approx(0.09)


def test_u_is_squared_norm_of_g(rng):
    z = random_vectors(rng, 10000, 1e-3, 10.0)
    for delta, eps in ((0.2, 0.01), (0.5, 0.0), (0.05, 0.3)):
        G = truncate_relaxed(z, delta, eps)
        err = np.abs(u_delta_eps(z, delta, eps) - np.einsum("ij,ij->i", G, G))
        assert np.all(err <= 1e-14 * np.maximum(1.0, u_delta_eps(z, delta, eps)))


def test_gp_examples():
    np.testing.assert_allclose(map_gp_eps(np.array([3.0, 4.0]), 2.0, 0.0), [15.0, 20.0], rtol=1e-15)
    np.testing.assert_array_equal(map_gp_eps(np.zeros(2), 3.0, 0.0), [0.0, 0.0])


def test_gp_monotonicity_fitted_constant(rng):
    z1, z2 = random_vectors(rng, 10000, 1e-3, 10.0), random_vectors(rng, 10000, 1e-3, 10.0)
    dz = z1 - z2
    lhs = np.einsum("ij,ij->i", map_gp_eps(z1, 3.0, 0.1) - map_gp_eps(z2, 3.0, 0.1), dz)
    assert np.all(lhs > 0.0)
    c = np.min(lhs / np.linalg.norm(dz, axis=-1) ** 4)
    assert c > 0.0


def test_truncation_params():
    assert TruncationParams(0.4, 0.04).solver_admissible
    assert not TruncationParams(0.4, 0.06).solver_admissible
    with pytest.raises(DomainError):
        TruncationParams(1.5)


@given(coord, coord, st.floats(1e-3, 0.9), st.floats(0.0, 0.5))
def test_relaxed_truncation_norm(x, y, delta, eps):
    z = np.array([x, y])
    G = truncate_relaxed(z, delta, eps)
    assert np.linalg.norm(G) == pytest.approx(max(np.hypot(eps, np.linalg.norm(z)) - delta, 0.0)
                                              if np.linalg.norm(z) > 0 else 0.0, rel=1e-12, abs=1e-300)


@given(coord, coord, st.floats(1.1, 4.0), st.floats(0.0, 0.9))
def test_gp_inverse_round_trip(x, y, p, eps):
    z = np.array([x, y])
    back = inverse_gp_eps(map_gp_eps(z, p, eps), p, eps)
    np.testing.assert_allclose(back, z, rtol=1e-9, atol=1e-12)
