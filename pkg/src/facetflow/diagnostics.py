"""Regularity diagnostics of computed solutions.

Balls B_r(x0) are discretised by cell-centroid membership and measures are
sums of cell areas, which is exact for the piecewise constant gradient fields
diagnosed here.
"""
from dataclasses import dataclass, field

import numpy as np

from .density import ellipticity_bounds
from .discretize import VectorField, _cell_gradients, _values
from .errors import DomainError, UsageError
from .truncation import truncate_relaxed, u_delta_eps, v_eps

NEAR_SINGULAR = 1e3


@dataclass(frozen=True)
class DiagnosticsParams:
    delta: float = 0.05
    q: float = np.inf
    beta_hat0: float = 0.9
    facet_tol: float = None
    radii_cells: tuple = (4, 8, 16)      # ball radii in units of the (largest) mesh size
    n_centers: int = 200
    holder_pairs: int = 20000
    mu: float = 0.5
    nu: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if self.facet_tol is None:
            object.__setattr__(self, "facet_tol", self.delta)
        if not self.facet_tol > 0.0:
            raise DomainError("facet_tol must be positive")
        if not (0.0 < self.beta_hat0 < 1.0):
            raise DomainError("beta_hat0 must lie in (0, 1)")
        if len(self.radii_cells) < 3:
            raise DomainError("at least three excess radii are needed")

    def beta(self, n):
        if np.isinf(self.q):
            return self.beta_hat0
        if not self.q > n:
            raise DomainError(f"q must exceed n = {n}")
        return 1.0 - n / self.q

    def radii(self, grid):
        return tuple(sorted((k * max(grid.h) for k in self.radii_cells), reverse=True))


@dataclass
class HolderFit:
    alpha: float
    residual: float
    sup_quotient: float
    n_centers: int


@dataclass
class DiagnosticsReport:
    eps: float
    delta: float
    beta: float
    facet_mask: np.ndarray
    facet_measure: float
    plug_value: float
    radii: tuple
    centers: np.ndarray
    excess: np.ndarray            # (n_centers, n_radii): Phi of G_{2 delta, eps}(grad u)
    superlevel: np.ndarray        # (n_centers,) at the largest radius
    holder: HolderFit
    ellipticity_min: float
    ellipticity_max: float
    near_singular_cells: int
    extra: dict = field(default_factory=dict)

    def summary(self):
        rows = [
            ("eps", self.eps), ("delta", self.delta), ("beta", self.beta),
            ("facet_measure", self.facet_measure),
            ("facet_cells", int(self.facet_mask.sum())),
            ("alpha_hat", self.holder.alpha), ("alpha_fit_residual", self.holder.residual),
            ("holder_sup_quotient", self.holder.sup_quotient),
            ("holder_centers", self.holder.n_centers),
            ("superlevel_mean", float(np.mean(self.superlevel)) if self.superlevel.size else 0.0),
            ("ellipticity_ratio_min", self.ellipticity_min),
            ("ellipticity_ratio_max", self.ellipticity_max),
            ("near_singular_cells", self.near_singular_cells),
        ]
        rows.extend(self.extra.items())
        rows.append(("plug_value", self.plug_value))
        return rows

    def to_text(self):
        return "\n".join(f"{k}: {_fmt(v)}" for k, v in self.summary()) + "\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _field_values(grid, field):
    if isinstance(field, VectorField):
        if not grid.same_as(field.grid):
            raise UsageError("field lives on a different grid")
        return field.values
    v = np.asarray(field, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != grid.n_cells:
        raise UsageError(f"expected one value per cell ({grid.n_cells}), got {v.shape[0]}")
    return v


def facet_extract(grid, u, facet_tol):
    """Cells with |grad u| <= facet_tol and their total measure."""
    z = _cell_gradients(grid, _values(grid, u))
    mask = np.linalg.norm(z, axis=-1) <= facet_tol
    return mask, float(mask.sum() * grid.cell_area)


def plug_value(grid, u, mask):
    """Median nodal value over the vertices of facet cells (nan if there is no facet)."""
    u = _values(grid, u)
    if not np.any(mask):
        return float("nan")
    nodes = np.unique(grid.cells[mask].ravel())
    return float(np.median(u[nodes]))


def _check_ball(grid, x0, r):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (grid.dim,):
        raise UsageError(f"centre must have {grid.dim} coordinates")
    for a, (lo, hi) in enumerate(grid.bounds):
        if x0[a] - r < lo - 1e-12 or x0[a] + r > hi + 1e-12:
            raise DomainError(f"ball of radius {r:g} around {x0.tolist()} leaves the domain")
    return x0


def ball_mask(grid, x0, r):
    x0 = _check_ball(grid, x0, r)
    d = np.linalg.norm(grid.centroids - x0, axis=-1)
    mask = d <= r
    if not np.any(mask):
        raise DomainError(f"ball of radius {r:g} contains no cell centroid")
    return mask


def campanato_excess(grid, field, x0, radii):
    """Phi(x0, r) = mean over the ball of |v - mean(v)|^2, for each radius."""
    v = _field_values(grid, field)
    out = []
    for r in radii:
        vb = v[ball_mask(grid, x0, r)]
        out.append(float(np.mean(np.sum((vb - vb.mean(axis=0)) ** 2, axis=-1))))
    return np.array(out)


def superlevel_measure(grid, veps, delta, mu, nu, x0, rho):
    """|{x in B_rho(x0) : V_eps - delta > (1 - nu) mu}| / |B_rho(x0)|."""
    if not (0.0 < nu < 1.0) or not mu > 0.0:
        raise DomainError("need 0 < nu < 1 and mu > 0")
    v = _field_values(grid, veps)[:, 0]
    m = ball_mask(grid, x0, rho)
    return float(np.mean(v[m] - delta > (1.0 - nu) * mu))


def _centers(grid, rmax, region, n, rng):
    c = grid.centroids
    keep = np.ones(grid.n_cells, dtype=bool)
    for a, (lo, hi) in enumerate(grid.bounds):
        keep &= (c[:, a] - rmax >= lo - 1e-12) & (c[:, a] + rmax <= hi + 1e-12)
    if region is not None:
        lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in region)
        keep &= np.all((c >= lo) & (c <= hi), axis=-1)
    idx = np.nonzero(keep)[0]
    if idx.size == 0:
        raise DomainError("no admissible centres: region too small for the requested radii")
    if idx.size > n:
        idx = np.sort(rng.choice(idx, size=n, replace=False))
    return c[idx]


def empirical_holder(grid, field, radii, region=None, n_centers=200, pairs=20000, seed=0):
    """Fit alpha from Phi(x0, r) ~ r^(2 alpha) and report the Hoelder quotient.

    The slope of log Phi against log r is fitted jointly over centres with a
    separate intercept per centre; centres where Phi vanishes at some radius
    (locally constant field) are left out.  If all centres are left out the
    field is locally constant and alpha = +inf is returned.  The quotient
    sup |G(x) - G(y)| / |x - y|^a uses a = min(alpha, 1) over random pairs of
    cell centroids.
    """
    if len(radii) < 3:
        raise DomainError("at least three radii are needed")
    v = _field_values(grid, field)
    rng = np.random.default_rng(seed)
    radii = tuple(sorted(radii, reverse=True))
    centers = _centers(grid, radii[0], region, n_centers, rng)
    phi = np.array([campanato_excess(grid, v, x0, radii) for x0 in centers])
    scale = max(float(np.max(np.abs(v))), 1e-300)
    good = np.all(phi > (1e-13 * scale) ** 2, axis=1)
    if not np.any(good):
        alpha, resid = float("inf"), 0.0
    else:
        X = np.log(np.asarray(radii))[None, :].repeat(good.sum(), axis=0)
        Y = np.log(phi[good])
        Xc = X - X.mean(axis=1, keepdims=True)
        Yc = Y - Y.mean(axis=1, keepdims=True)
        slope = float(np.sum(Xc * Yc) / np.sum(Xc * Xc))
        alpha = slope / 2.0
        resid = float(np.sqrt(np.mean((Yc - slope * Xc) ** 2)))
    a = 1.0 if np.isinf(alpha) else min(max(alpha, 0.0), 1.0)
    sup_q = _sup_quotient(grid, v, a, region, pairs, rng)
    return HolderFit(alpha, resid, sup_q, int(good.sum()))


def _sup_quotient(grid, v, a, region, pairs, rng):
    c = grid.centroids
    idx = np.arange(grid.n_cells)
    if region is not None:
        lo, hi = (np.atleast_1d(np.asarray(t, dtype=float)) for t in region)
        idx = idx[np.all((c >= lo) & (c <= hi), axis=-1)]
    if idx.size < 2:
        return 0.0
    i = rng.choice(idx, size=pairs)
    j = rng.choice(idx, size=pairs)
    d = np.linalg.norm(c[i] - c[j], axis=-1)
    ok = d > 0.0
    if not np.any(ok):
        return 0.0
    num = np.linalg.norm(v[i[ok]] - v[j[ok]], axis=-1)
    return float(np.max(num / d[ok] ** a))


def ellipticity_ratio_field(grid, u, eps, params):
    """Per-cell ratio upper/lower of the relaxed Hessian eigenvalue bounds at grad u."""
    z = _cell_gradients(grid, _values(grid, u))
    lo, hi = ellipticity_bounds(params, eps, z)
    return hi / lo


def convergence_report(seq, p=None):
    """Successive L^p / L^2 gradient differences and sup differences of G_{2 delta, eps_k}."""
    if len(seq.solutions) < 2:
        raise DomainError("need at least two solutions")
    grid = seq.spec.grid
    p = seq.spec.params.p if p is None else p
    delta = seq.schedule.delta
    rows = []
    prev = None
    for sol in seq.solutions:
        z = _cell_gradients(grid, sol.u.values)
        G = truncate_relaxed(z, 2.0 * delta, sol.eps)
        if prev is not None:
            dz = np.linalg.norm(z - prev[0], axis=-1)
            rows.append({
                "eps_prev": prev[2], "eps": sol.eps,
                "grad_diff_lp": float((grid.cell_area * np.sum(dz**p)) ** (1.0 / p)),
                "grad_diff_l2": float(np.sqrt(grid.cell_area * np.sum(dz**2))),
                "g_sup_diff": float(np.max(np.linalg.norm(G - prev[1], axis=-1))),
            })
        prev = (z, G, sol.eps)
    return rows


def diagnose(grid, u, eps, params, diag=None, region=None):
    """Full diagnostics of a nodal solution u computed at relaxation parameter eps."""
    diag = diag or DiagnosticsParams()
    if not eps < diag.delta / 8.0:
        raise DomainError(f"diagnostics need eps < delta/8 (eps={eps:g}, delta={diag.delta:g})")
    u = _values(grid, u)
    z = _cell_gradients(grid, u)
    mask, measure = facet_extract(grid, u, diag.facet_tol)
    G = truncate_relaxed(z, 2.0 * diag.delta, eps)
    V = v_eps(z, eps)
    U = u_delta_eps(z, diag.delta, eps)
    radii = diag.radii(grid)
    fit = empirical_holder(grid, G, radii, region, diag.n_centers, diag.holder_pairs, diag.seed)
    centers = _centers(grid, radii[0], region, diag.n_centers, np.random.default_rng(diag.seed))
    excess = np.array([campanato_excess(grid, G, x0, radii) for x0 in centers])
    sup = np.array([superlevel_measure(grid, V, diag.delta, diag.mu, diag.nu, x0, radii[0])
                    for x0 in centers])
    ratio = ellipticity_ratio_field(grid, u, eps, params)
    Gd = truncate_relaxed(z, diag.delta, eps)
    u_err = float(np.max(np.abs(U - np.sum(Gd**2, axis=-1))))
    return DiagnosticsReport(
        eps=float(eps), delta=diag.delta, beta=diag.beta(grid.dim), facet_mask=mask,
        facet_measure=measure, plug_value=plug_value(grid, u, mask), radii=radii, centers=centers,
        excess=excess, superlevel=sup, holder=fit, ellipticity_min=float(ratio.min()),
        ellipticity_max=float(ratio.max()), near_singular_cells=int(np.sum(ratio > NEAR_SINGULAR)),
        extra={"u_identity_error": u_err},
    )
