"""Friedrichs mollifiers on the plane and convolution by quadrature.

The kernel is j(x) = c * profile(|x|) supported in the closed unit ball and
j_eps(x) = eps**-2 j(x / eps).  Convolutions are written in unit-ball
coordinates,

    (j_eps * F)(z) = int_{B_1} j(y) F(z - eps y) dy,

so that the only possible singularity of the integrand sits at y = z / eps.
When that point is inside the ball the integral is computed in polar
coordinates centred on it, with a Gauss-Jacobi rule in the radius that
absorbs the known power-law behaviour ``|y - z/eps|**gamma`` of the
integrand; otherwise polar coordinates centred on the origin are used.
The angular direction always uses the (spectrally accurate) periodic
trapezoid rule.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericalError

SHAPES = ("quartic_bump", "smooth_bump")

# number of evaluation points handled per vectorised block
_BLOCK = 512


def _profile(shape, r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    t = 1.0 - r[inside] ** 2
    if shape == "quartic_bump":
        out[inside] = t**4
    else:
        out[inside] = np.exp(-1.0 / t)
    return out


@lru_cache(maxsize=None)
def _normalization(shape, n):
    if n != 2:
        raise DomainError("mollifier kernels are implemented for n = 2 only")
    if shape == "quartic_bump":
        # 2 pi int_0^1 (1 - r^2)^4 r dr = pi / 5
        return 5.0 / np.pi
    if shape == "smooth_bump":
        mass, _ = integrate.quad(lambda r: np.exp(-1.0 / (1.0 - r * r)) * r, 0.0, 1.0,
                                 epsabs=1e-15, epsrel=1e-14, limit=200)
        return 1.0 / (2.0 * np.pi * mass)
    raise DomainError(f"unknown kernel shape {shape!r}; expected one of {SHAPES}")


@lru_cache(maxsize=None)
def _jacobi(n, beta):
    # nodes/weights for int_{-1}^{1} (1 + x)^beta f(x) dx
    x, w = special.roots_jacobi(n, 0.0, beta)
    return x, w


@dataclass(frozen=True)
class MollifierSpec:
    """Kernel description.  ``normalization`` is computed, not supplied."""

    eps: float = 0.1
    shape: str = "quartic_bump"
    n: int = 2
    n_radial: int = 24
    n_angular: int = 48
    normalization: float = field(init=False)

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise DomainError(f"unknown kernel shape {self.shape!r}; expected one of {SHAPES}")
        if not (0.0 < self.eps < 1.0):
            raise DomainError(f"mollifier eps must lie in (0, 1), got {self.eps}")
        object.__setattr__(self, "normalization", _normalization(self.shape, self.n))

    def with_eps(self, eps):
        return replace(self, eps=eps)

    def unit_kernel(self, y):
        """j(y) on the unit scale; ``y`` has trailing dimension 2."""
        y = np.asarray(y, dtype=float)
        return self.normalization * _profile(self.shape, np.linalg.norm(y, axis=-1))


def kernel_value(spec, x):
    """j_eps(x) = eps^-n j(x / eps); zero outside the closed ball of radius eps."""
    x = np.asarray(x, dtype=float)
    return spec.unit_kernel(x / spec.eps) / spec.eps**spec.n


def _rule(spec, w, gamma):
    """Quadrature nodes/weights for the measure j(y) dy on the unit ball.

    ``w`` has shape (m, 2); the integrand may behave like |y - w|**gamma
    near y = w.  Returns nodes (m, K, 2) and weights (m, K).
    """
    m = w.shape[0]
    nt, nr = spec.n_angular, spec.n_radial
    theta = 2.0 * np.pi * np.arange(nt) / nt
    e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)          # (nt, 2)
    dtheta = 2.0 * np.pi / nt

    nodes = np.empty((m, nt, nr, 2))
    weights = np.empty((m, nt, nr))

    ww = np.einsum("mi,mi->m", w, w)
    inside = ww < 1.0

    if np.any(inside):
        wi = w[inside]
        xk, ok = _jacobi(nr, 1.0 + gamma)
        we = wi @ e.T                                               # (mi, nt)
        R = -we + np.sqrt(we**2 + 1.0 - ww[inside][:, None])
        r = R[:, :, None] * (1.0 + xk) / 2.0                        # (mi, nt, nr)
        pts = wi[:, None, None, :] + r[..., None] * e[None, :, None, :]
        wt = dtheta * (R[:, :, None] / 2.0) ** (2.0 + gamma) * ok / r**gamma
        nodes[inside] = pts
        weights[inside] = wt * spec.unit_kernel(pts)
    if np.any(~inside):
        xk, ok = _jacobi(nr, 1.0)
        rho = (1.0 + xk) / 2.0
        pts = rho[None, :, None] * e[:, None, :]                    # (nt, nr, 2)
        wt = dtheta * 0.25 * ok * spec.normalization * _profile(spec.shape, rho)
        nodes[~inside] = pts
        weights[~inside] = np.broadcast_to(wt, (nt, nr))
    return nodes.reshape(m, nt * nr, 2), weights.reshape(m, nt * nr)


def convolve(spec, func, z, gamma=0.0):
    """(j_eps * func)(z) for points z with trailing dimension 2.

    ``func`` maps an array (..., 2) to (...) or (..., k).  ``gamma`` is the
    power-law exponent of func at its singular point (0 for bounded
    integrands, 1 for one-homogeneous ones, p for |.|^p ...).
    """
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != spec.n:
        raise DomainError(f"points must have trailing dimension {spec.n}")
    if not np.all(np.isfinite(z)):
        raise DomainError("non-finite evaluation point")
    lead = z.shape[:-1]
    flat = z.reshape(-1, spec.n)
    out = None
    for start in range(0, flat.shape[0], _BLOCK):
        zb = flat[start:start + _BLOCK]
        y, wts = _rule(spec, zb / spec.eps, gamma)
        vals = np.asarray(func(zb[:, None, :] - spec.eps * y))
        res = np.einsum("mk,mk...->m...", wts, vals)
        if out is None:
            out = np.empty((flat.shape[0],) + res.shape[1:])
        out[start:start + _BLOCK] = res
    if out is None:
        out = np.empty((0,))
    if not np.all(np.isfinite(out)):
        raise NumericalError("quadrature produced non-finite values")
    return out.reshape(lead + out.shape[1:])


def radial_power_convolution(spec, sigma, z):
    """h_{sigma,eps}(z) = (j_eps * |.|^sigma)(z), defined for sigma >= -1 in n = 2."""
    if sigma < -1.0:
        raise DomainError(f"sigma must be >= -1 for a locally integrable |.|^sigma, got {sigma}")
    if spec.n < 2:
        raise DomainError("|.|^-1 is integrable only for n >= 2")
    return convolve(spec, lambda x: np.linalg.norm(x, axis=-1) ** sigma, z, gamma=sigma)


def second_moment(spec):
    """m2 = int |y|^2 j_eps(y) dy."""
    return float(convolve(spec, lambda x: np.einsum("...i,...i->...", x, x),
                          np.zeros((1, 2)), gamma=2.0)[0])


def mollify_density(exact, spec, z):
    """Value and gradient of j_eps * E for an exact density ``exact``.

    The one-homogeneous and p-growth parts are integrated separately so that
    each gets the radial rule matched to its homogeneity degree.
    """
    p = exact.params.p
    value = (convolve(spec, exact.e1, z, gamma=1.0)
             + convolve(spec, exact.ep, z, gamma=p))
    gradient = (convolve(spec, exact.grad_e1_safe, z, gamma=0.0)
                + convolve(spec, exact.grad_ep, z, gamma=p - 1.0))
    return value, gradient
