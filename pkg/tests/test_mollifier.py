import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from facetflow.errors import DomainError
from facetflow.mollifier import (SHAPES, MollifierSpec, convolve, kernel_value, radial_power_convolution,
                                 second_moment)


@pytest.mark.parametrize("shape", SHAPES)
def test_kernel_vanishes_outside_support(shape):
    spec = MollifierSpec(eps=0.2, shape=shape)
    assert kernel_value(spec, np.array([0.4, 0.0])) == 0.0
    assert kernel_value(spec, np.array([0.0, -0.2])) == 0.0


@pytest.mark.parametrize("shape", SHAPES)
def test_kernel_has_unit_mass_tensor_gauss_legendre(shape):
    # tensor Gauss-Legendre on [-eps, eps]^2, independent of the polar rule used internally
    eps = 0.3
    spec = MollifierSpec(eps=eps, shape=shape)
    x, w = np.polynomial.legendre.leggauss(400)
    X, Y = np.meshgrid(eps * x, eps * x, indexing="ij")
    vals = kernel_value(spec, np.stack([X, Y], axis=-1))
    assert abs(eps**2 * np.einsum("i,j,ij->", w, w, vals) - 1.0) <= 1e-6


def test_quartic_kernel_mass_adaptive():
    spec = MollifierSpec(eps=0.5)
    m, _ = integrate.dblquad(lambda r, t: kernel_value(spec, np.array([r * np.cos(t), r * np.sin(t)])) * r,
                             0.0, 2.0 * np.pi, 0.0, 0.5, epsabs=1e-13)
    assert abs(m - 1.0) <= 1e-8


@pytest.mark.parametrize("shape", SHAPES)
def test_kernel_is_even(rng, shape):
    spec = MollifierSpec(eps=0.1, shape=shape)
    x = rng.uniform(-0.1, 0.1, (1000, 2))
    np.testing.assert_array_equal(kernel_value(spec, x), kernel_value(spec, -x))


@pytest.mark.parametrize("z", [np.zeros(2), np.array([0.05, 0.02]), np.array([3.0, -1.0])])
def test_h_sigma_zero_is_one(z):
    spec = MollifierSpec(eps=0.1)
    assert abs(float(radial_power_convolution(spec, 0.0, z)) - 1.0) <= 1e-8


def test_second_moment_closed_form():
    # int |y|^2 (5/pi)(1-|y|^2)^4 dy over the unit disk = 5 B(2, 5) = 1/6
    spec = MollifierSpec(eps=0.1)
    assert second_moment(spec) == pytest.approx(0.01 / 6.0, rel=1e-12)


@pytest.mark.parametrize("z", [np.array([0.0, 0.0]), np.array([0.04, 0.07]), np.array([1.5, 0.2])])
def test_h_sigma_two(z):
    spec = MollifierSpec(eps=0.1)
    h = float(radial_power_convolution(spec, 2.0, z))
    assert h == pytest.approx(z @ z + second_moment(spec), rel=1e-12)


def test_h_sigma_minus_one_at_origin_is_finite():
    # 10 int_0^1 (1 - r^2)^4 dr / eps = 1280 / (315 eps)
    spec = MollifierSpec(eps=0.1)
    h = float(radial_power_convolution(spec, -1.0, np.zeros(2)))
    assert np.isfinite(h) and h > 0.0
    assert h == pytest.approx(1280.0 / 31.5, rel=1e-10)


def test_sigma_below_minus_one_rejected():
    with pytest.raises(DomainError):
        radial_power_convolution(MollifierSpec(), -1.5, np.zeros(2))


def test_invalid_spec():
    with pytest.raises(DomainError):
        MollifierSpec(shape="gaussian")
    with pytest.raises(DomainError):
        MollifierSpec(eps=1.0)


def test_convolution_preserves_affine_functions():
    spec = MollifierSpec(eps=0.2)
    z = np.array([[0.1, -0.3], [2.0, 1.0], [0.0, 0.0]])
    out = convolve(spec, lambda x: 3.0 * x[..., 0] - x[..., 1] + 0.5, z)
    np.testing.assert_allclose(out, 3.0 * z[:, 0] - z[:, 1] + 0.5, rtol=1e-13, atol=1e-13)


@settings(max_examples=15)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_h_minus_one_matches_adaptive_quadrature(x, y):
    spec = MollifierSpec(eps=0.1)
    z = np.array([x, y])

    # polar coordinates about the singular point of |.|^-1
    def f(r, t):
        yv = z - r * np.array([np.cos(t), np.sin(t)])
        return kernel_value(spec, yv) if r > 0 else 0.0

    nz = np.linalg.norm(z)
    t0, t1 = 0.0, 2 * np.pi
    if nz > 0.1:
        # angular window of the kernel support seen from z
        phi, half = np.arctan2(y, x), np.arcsin(0.1 / nz)
        t0, t1 = phi - half, phi + half
    ref, _ = integrate.dblquad(f, t0, t1, max(0.0, nz - 0.1), nz + 0.1, epsabs=1e-11, epsrel=1e-10)
    assert float(radial_power_convolution(spec, -1.0, z)) == pytest.approx(ref, rel=1e-6, abs=1e-8)
