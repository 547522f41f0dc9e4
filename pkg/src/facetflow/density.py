"""Energy densities E = E_1 + E_p and their relaxations E_eps.

The model case is E_1(z) = b|z| and E_p(z) = |z|^p / p.  Two relaxations
are available:

* ``closed_form``: E_eps(z) = b sqrt(eps^2 + |z|^2) + (eps^2 + |z|^2)^(p/2) / p,
  valid for the (radially symmetric) model case only;
* ``mollified``: E_eps = j_eps * E, evaluated by quadrature; this also
  accepts an anisotropic one-homogeneous part b sqrt(z^T A z).

All evaluation routines are vectorised over leading axes: ``z`` has shape
(..., n) and results have shape (...), (..., n) or (..., n, n).
"""
from dataclasses import dataclass, field

import numpy as np

from . import mollifier
from .errors import DomainError, SingularityError

MODES = ("closed_form", "mollified")


def _as_points(z):
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        raise DomainError("z must be a vector (trailing axis = dimension)")
    if not np.all(np.isfinite(z)):
        raise DomainError("non-finite input")
    return z


def _sqnorm(z):
    return np.einsum("...i,...i->...", z, z)


def _outer(z):
    return z[..., :, None] * z[..., None, :]


@dataclass(frozen=True)
class DensityParams:
    """Coefficients and structural constants of E = E_1 + E_p.

    ``lam``/``Lam`` are the ellipticity constants lambda/Lambda and ``K`` the
    Hessian bound of the one-homogeneous part.  Unset values default to the
    model case: lam = min(1, p-1), Lam = max(1, p-1), K = b.
    """

    b: float = 1.0
    p: float = 2.0
    lam: float = None
    Lam: float = None
    K: float = None
    beta0: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.b) and self.b >= 0.0):
            raise DomainError(f"b must be a nonnegative real, got {self.b}")
        if not (np.isfinite(self.p) and self.p > 1.0):
            raise DomainError(f"p must be > 1, got {self.p}")
        if self.lam is None:
            object.__setattr__(self, "lam", min(1.0, self.p - 1.0))
        if self.Lam is None:
            object.__setattr__(self, "Lam", max(1.0, self.p - 1.0))
        if self.K is None:
            object.__setattr__(self, "K", float(self.b))
        if not (0.0 < self.lam <= self.Lam):
            raise DomainError(f"need 0 < lam <= Lam, got lam={self.lam}, Lam={self.Lam}")
        if self.K < 0.0:
            raise DomainError(f"K must be nonnegative, got {self.K}")
        if not (0.0 < self.beta0 <= 1.0):
            raise DomainError(f"beta0 must lie in (0, 1], got {self.beta0}")


@dataclass(frozen=True, eq=False)
class ExactDensity:
    """Unrelaxed density b*sqrt(z^T A z) + |z|^p / p (A = identity by default)."""

    params: DensityParams = field(default_factory=DensityParams)
    aniso: np.ndarray = None

    def __post_init__(self):
        if self.aniso is not None:
            A = np.asarray(self.aniso, dtype=float)
            if A.shape != (2, 2) or not np.allclose(A, A.T) or np.linalg.eigvalsh(A).min() <= 0:
                raise DomainError("anisotropy must be a symmetric positive definite 2x2 matrix")
            object.__setattr__(self, "aniso", A)

    @property
    def is_model(self):
        return self.aniso is None

    # -- one-homogeneous part ------------------------------------------------
    def _anorm(self, z):
        if self.aniso is None:
            return np.sqrt(_sqnorm(z))
        return np.sqrt(np.einsum("...i,ij,...j->...", z, self.aniso, z))

    def e1(self, z):
        return self.params.b * self._anorm(z)

    def grad_e1(self, z):
        z = _as_points(z)
        nz = self._anorm(z)
        if np.any(nz == 0.0):
            raise SingularityError("gradient of the one-homogeneous part is undefined at z = 0; "
                                   "use the subdifferential {w : support_gauge(w) <= 1}")
        return self.grad_e1_safe(z)

    def grad_e1_safe(self, z):
        """Gradient of E_1 with the value 0 substituted at the origin."""
        nz = self._anorm(z)
        safe = np.where(nz > 0.0, nz, 1.0)
        Az = z if self.aniso is None else z @ self.aniso
        return np.where((nz > 0.0)[..., None], self.params.b * Az / safe[..., None], 0.0)

    def hess_e1(self, z):
        z = _as_points(z)
        nz = self._anorm(z)
        if np.any(nz == 0.0):
            raise SingularityError("Hessian of the one-homogeneous part is undefined at z = 0")
        n = z.shape[-1]
        A = np.eye(n) if self.aniso is None else self.aniso
        Az = z @ A
        b = self.params.b
        return b * (A / nz[..., None, None] - _outer(Az) / nz[..., None, None] ** 3)

    def support_gauge(self, w):
        """Support function of {E_1 <= 1}: |w| / b (or sqrt(w^T A^-1 w) / b)."""
        b = self.params.b
        if b <= 0.0:
            raise DomainError("support function undefined for b = 0 (E_1 vanishes identically)")
        w = _as_points(w)
        if self.aniso is None:
            return np.sqrt(_sqnorm(w)) / b
        Ainv = np.linalg.inv(self.aniso)
        return np.sqrt(np.einsum("...i,ij,...j->...", w, Ainv, w)) / b

    # -- p-growth part -------------------------------------------------------
    def ep(self, z):
        p = self.params.p
        return _sqnorm(z) ** (p / 2.0) / p

    def grad_ep(self, z):
        p = self.params.p
        s = _sqnorm(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(s > 0.0, s ** (p / 2.0 - 1.0), 0.0)
        return fac[..., None] * z

    def hess_ep(self, z):
        z = _as_points(z)
        p = self.params.p
        s = _sqnorm(z)
        if p < 2.0 and np.any(s == 0.0):
            raise SingularityError("Hessian of |z|^p/p is unbounded at z = 0 for p < 2")
        n = z.shape[-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(s > 0.0, s ** (p / 2.0 - 1.0), 1.0 if p == 2.0 else 0.0)
            c = np.where(s > 0.0, (p - 2.0) * s ** (p / 2.0 - 2.0), 0.0)
        return a[..., None, None] * np.eye(n) + c[..., None, None] * _outer(z)

    # -- totals --------------------------------------------------------------
    def value(self, z):
        z = _as_points(z)
        return self.e1(z) + self.ep(z)

    def grad(self, z):
        z = _as_points(z)
        return self.grad_e1(z) + self.grad_ep(z)

    def hess(self, z):
        return self.hess_e1(z) + self.hess_ep(z)


@dataclass(frozen=True, eq=False)
class RelaxedDensity:
    """E_eps = E_{1,eps} + E_{p,eps} with value, gradient and Hessian."""

    params: DensityParams
    eps: float
    mode: str = "closed_form"
    kernel: mollifier.MollifierSpec = None
    exact: ExactDensity = None
    # below this distance from the origin (in units of eps) the mollified
    # Hessian is obtained by finite differences of the mollified gradient
    fd_radius: float = 8.0

    def __post_init__(self):
        if not (0.0 < self.eps < 1.0):
            raise DomainError(f"eps must lie in (0, 1), got {self.eps}")
        if self.mode not in MODES:
            raise DomainError(f"unknown relaxation mode {self.mode!r}; expected one of {MODES}")
        exact = self.exact if self.exact is not None else ExactDensity(self.params)
        object.__setattr__(self, "exact", exact)
        if self.mode == "closed_form":
            if not exact.is_model:
                raise DomainError("closed_form relaxation requires the model density b|z| + |z|^p/p")
        else:
            kernel = self.kernel if self.kernel is not None else mollifier.MollifierSpec(eps=self.eps)
            object.__setattr__(self, "kernel", kernel.with_eps(self.eps))

    # -- closed form pieces --------------------------------------------------
    def _s(self, z):
        return self.eps**2 + _sqnorm(z)

    def value(self, z):
        z = _as_points(z)
        if self.mode == "mollified":
            return mollifier.mollify_density(self.exact, self.kernel, z)[0]
        b, p = self.params.b, self.params.p
        s = self._s(z)
        return b * np.sqrt(s) + s ** (p / 2.0) / p

    def value_diff(self, z0, z1):
        """E_eps(z1) - E_eps(z0), computed without catastrophic cancellation."""
        z0 = _as_points(z0)
        z1 = _as_points(z1)
        if self.mode == "mollified":
            return self.value(z1) - self.value(z0)
        b, p = self.params.b, self.params.p
        s0 = self._s(z0)
        s1 = self._s(z1)
        ds = np.einsum("...i,...i->...", z1 - z0, z1 + z0)
        d1 = b * ds / (np.sqrt(s1) + np.sqrt(s0))
        dp = s0 ** (p / 2.0) * np.expm1((p / 2.0) * np.log1p(ds / s0)) / p
        return d1 + dp

    def grad(self, z):
        z = _as_points(z)
        if self.mode == "mollified":
            return mollifier.mollify_density(self.exact, self.kernel, z)[1]
        b, p = self.params.b, self.params.p
        s = self._s(z)
        return (b / np.sqrt(s) + s ** (p / 2.0 - 1.0))[..., None] * z

    def grad_e1(self, z):
        """Gradient of the one-homogeneous part alone."""
        z = _as_points(z)
        if self.mode == "mollified":
            return mollifier.convolve(self.kernel, self.exact.grad_e1_safe, z, gamma=0.0)
        return (self.params.b / np.sqrt(self._s(z)))[..., None] * z

    def grad_ep(self, z):
        """Gradient of the p-growth part alone."""
        z = _as_points(z)
        if self.mode == "mollified":
            return mollifier.convolve(self.kernel, self.exact.grad_ep, z, gamma=self.params.p - 1.0)
        return (self._s(z) ** (self.params.p / 2.0 - 1.0))[..., None] * z

    def hess(self, z):
        z = _as_points(z)
        if self.mode == "mollified":
            return self._hess_mollified(z)
        b, p = self.params.b, self.params.p
        n = z.shape[-1]
        s = self._s(z)
        a = b / np.sqrt(s) + s ** (p / 2.0 - 1.0)
        c = -b * s**-1.5 + (p - 2.0) * s ** (p / 2.0 - 2.0)
        return a[..., None, None] * np.eye(n) + c[..., None, None] * _outer(z)

    def _hess_mollified(self, z):
        lead = z.shape[:-1]
        flat = z.reshape(-1, 2)
        out = np.empty((flat.shape[0], 2, 2))
        far = np.sqrt(_sqnorm(flat)) >= self.fd_radius * self.eps
        if np.any(far):
            p = self.params.p
            zf = flat[far]
            out[far] = (mollifier.convolve(self.kernel, self.exact.hess_e1, zf, gamma=-1.0)
                        + mollifier.convolve(self.kernel, self.exact.hess_ep, zf, gamma=p - 2.0))
        if np.any(~far):
            zn = flat[~far]
            step = 1e-4 * self.eps
            cols = []
            for k in range(2):
                e = np.zeros(2)
                e[k] = step
                cols.append((self.grad(zn + e) - self.grad(zn - e)) / (2.0 * step))
            H = np.stack(cols, axis=-1)
            out[~far] = 0.5 * (H + np.swapaxes(H, -1, -2))
        return out.reshape(lead + (2, 2))


def ellipticity_bounds(params, eps, z):
    """Lower/upper eigenvalue bounds of the relaxed Hessian at z.

    lower = lam (eps^2+|z|^2)^(p/2-1),
    upper = Lam (eps^2+|z|^2)^(p/2-1) + K (eps^2+|z|^2)^(-1/2).
    """
    if not (0.0 < eps < 1.0):
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    z = _as_points(z)
    s = eps**2 + _sqnorm(z)
    base = s ** (params.p / 2.0 - 1.0)
    return params.lam * base, params.Lam * base + params.K / np.sqrt(s)


def support_gauge(params, w):
    """Support function of the unit sublevel set of the model E_1 = b|z|."""
    return ExactDensity(params).support_gauge(w)


def calibrate_mollified(params, kernel=None, aniso=None, n_radii=160, n_angles=1, margin=1e-3):
    """Structural constants (lam, Lam, K) for the mollified relaxation.

    By homogeneity, E_{p,eps}(z) = eps^p E_{p,1}(z/eps) and
    E_{1,eps}(z) = eps E_{1,1}(z/eps), so the normalised eigenvalue ratios
    depend on w = z/eps only.  They are swept over |w| in [0, 1e3] (and over
    directions when the one-homogeneous part is anisotropic); the extrema are
    widened by ``margin`` and combined with the exact-density constants.
    Returns a new DensityParams.
    """
    kernel = kernel if kernel is not None else mollifier.MollifierSpec()
    exact = ExactDensity(params, aniso)
    b, p = params.b, params.p
    radii = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, n_radii - 1)])
    if aniso is not None:
        n_angles = max(n_angles, 16)
    ang = np.pi * np.arange(n_angles) / n_angles
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    w = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, 2)

    # any eps works: the eigenvalue ratios below only depend on w = z / eps
    eps = 0.5
    zz = eps * w
    pure = DensityParams(b=0.0, p=p)
    unit = RelaxedDensity(pure, eps=eps, mode="mollified", kernel=kernel, exact=ExactDensity(pure))
    s = eps**2 + _sqnorm(zz)
    hp = np.linalg.eigvalsh(unit.hess(zz))
    base = s ** (p / 2.0 - 1.0)
    lam_p = float(np.min(hp[:, 0] / base))
    Lam_p = float(np.max(hp[:, -1] / base))

    lam0, Lam0 = min(1.0, p - 1.0), max(1.0, p - 1.0)
    lam = min(lam0, lam_p) * (1.0 - margin)
    Lam = max(Lam0, Lam_p) * (1.0 + margin)
    K = 0.0
    if b > 0.0:
        one = RelaxedDensity(DensityParams(b=b, p=p), eps=eps, mode="mollified", kernel=kernel,
                             exact=ExactDensity(DensityParams(b=b, p=p), aniso))
        h1 = np.linalg.eigvalsh(one.hess(zz) - unit.hess(zz))
        K2p = float(np.max(h1[:, -1] * np.sqrt(s)))
        # exact-density constants K_1 = max |grad E_1| and K_2 = max ||hess E_1|| on the unit circle
        th = np.linspace(0.0, 2.0 * np.pi, 721)
        circ = np.stack([np.cos(th), np.sin(th)], axis=-1)
        K1 = float(np.max(np.linalg.norm(exact.grad_e1(circ), axis=-1)))
        K2 = float(np.max(np.abs(np.linalg.eigvalsh(exact.hess_e1(circ)))))
        K = max(K1, K2, K2p) * (1.0 + margin)
    return DensityParams(b=b, p=p, lam=lam, Lam=Lam, K=K, beta0=params.beta0)
