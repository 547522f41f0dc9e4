"""Truncation maps G_delta, G_{delta,eps}, G_{p,eps} and the scalars V_eps, U_{delta,eps}.

All maps act on the trailing axis of ``z`` and broadcast over leading axes.
The direction z/|z| is taken to be 0 for |z| < 1e-300; every map has a
vanishing prefactor there, so the singularity is removable.
"""
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import DomainError

_TINY = 1e-300


@dataclass(frozen=True)
class TruncationParams:
    delta: float
    eps: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if not (self.eps >= 0.0):
            raise DomainError(f"eps must be nonnegative, got {self.eps}")

    @property
    def solver_admissible(self):
        """True when 0 < eps < delta/8, the range used by the regularity diagnostics."""
        return 0.0 < self.eps < self.delta / 8.0


def _norm(z):
    return np.sqrt(np.einsum("...i,...i->...", z, z))


def _direction(z, nz):
    safe = np.where(nz < _TINY, 1.0, nz)
    return np.where((nz < _TINY)[..., None], 0.0, z / safe[..., None])


def truncate(z, delta):
    """G_delta(z) = (|z| - delta)_+ z/|z|."""
    z = np.asarray(z, dtype=float)
    nz = _norm(z)
    return np.maximum(nz - delta, 0.0)[..., None] * _direction(z, nz)


def truncate_relaxed(z, delta, eps):
    """G_{delta,eps}(z) = (sqrt(eps^2 + |z|^2) - delta)_+ z/|z|; eps = 0 gives G_delta."""
    if eps < 0.0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    z = np.asarray(z, dtype=float)
    nz = _norm(z)
    v = np.hypot(eps, nz) if eps > 0.0 else nz
    return np.maximum(v - delta, 0.0)[..., None] * _direction(z, nz)


def lipschitz_constant(h):
    """c_dagger(h) = 1 + 8 / sqrt(4 - h^2), the Lipschitz constant of G_{2 delta, eps} for eps <= h delta."""
    if not (0.0 < h < 2.0):
        raise DomainError(f"h must lie in (0, 2), got {h}")
    return 1.0 + 8.0 / np.sqrt(4.0 - h * h)


def v_eps(grad, eps):
    """V_eps = sqrt(eps^2 + |grad|^2)."""
    grad = np.asarray(grad, dtype=float)
    return np.hypot(eps, _norm(grad))


def u_delta_eps(grad, delta, eps):
    """U_{delta,eps} = (V_eps - delta)_+^2, which equals |G_{delta,eps}(grad)|^2."""
    return np.maximum(v_eps(grad, eps) - delta, 0.0) ** 2


def map_gp_eps(z, p, eps):
    """G_{p,eps}(z) = (eps^2 + |z|^2)^((p-1)/2) z."""
    if not p > 1.0:
        raise DomainError(f"p must be > 1, got {p}")
    z = np.asarray(z, dtype=float)
    s = eps * eps + np.einsum("...i,...i->...", z, z)
    with np.errstate(divide="ignore"):
        fac = np.where(s > 0.0, s ** ((p - 1.0) / 2.0), 0.0)
    return fac[..., None] * z


def inverse_gp_eps(w, p, eps):
    """Inverse of G_{p,eps}.  The modulus t = |z| solves (eps^2 + t^2)^((p-1)/2) t = |w|."""
    if not p > 1.0:
        raise DomainError(f"p must be > 1, got {p}")
    w = np.asarray(w, dtype=float)
    nw = _norm(w)
    flat = nw.ravel()
    t = np.zeros_like(flat)
    for i, a in enumerate(flat):
        if a == 0.0:
            continue
        # t <= a^(1/p) and t <= a / eps^(p-1) both bracket the root
        hi = a ** (1.0 / p)
        scale = eps ** (p - 1.0)
        if scale > 0.0:             # may underflow for subnormal eps
            hi = min(hi, a / scale)
        g = lambda x: (eps * eps + x * x) ** ((p - 1.0) / 2.0) * x - a
        if g(hi) <= 0.0:
            t[i] = hi
        else:
            t[i] = optimize.brentq(g, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    t = t.reshape(nw.shape)
    return t[..., None] * _direction(w, nw)
