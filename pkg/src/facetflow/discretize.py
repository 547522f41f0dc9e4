"""P1 finite elements on structured 1D/2D grids and the discrete functional F_eps.

Nodes are numbered row-major with x fastest: k = j * nx + i.  In 2D every
grid square is split along its lower-left to upper-right diagonal into

    T0 = (k00, k10, k11)   and   T1 = (k00, k11, k01),

stored consecutively.  The cellwise gradient is a fixed sparse linear map
``D`` from nodal values to per-cell gradients, so that with the cell areas
|T| the discrete functional and its derivatives read

    F(u)  = sum_T |T| E_eps(D u|_T) - sum_k m_k f_k u_k
    F'(u) = D^T (|T| grad E_eps(Du)) - m f
    F''(u) = D^T blockdiag(|T| hess E_eps(Du)) D,

where m is the lumped (vertex) mass.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from .density import DensityParams, ExactDensity, RelaxedDensity
from .errors import DomainError, UsageError


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform structured grid; ``bounds`` is ((x0, x1),) or ((x0, x1), (y0, y1))."""

    bounds: tuple
    shape: tuple

    def __post_init__(self):
        bounds = tuple(tuple(float(v) for v in b) for b in self.bounds)
        shape = tuple(int(n) for n in self.shape)
        if len(bounds) not in (1, 2) or len(bounds) != len(shape):
            raise UsageError("grid must be 1D or 2D with one node count per axis")
        for (lo, hi), n in zip(bounds, shape):
            if not hi > lo:
                raise UsageError(f"empty extent [{lo}, {hi}]")
            if n < 2:
                raise UsageError("need at least 2 nodes per axis")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def interval(cls, a, b, n):
        return cls(((a, b),), (n,))

    @classmethod
    def rectangle(cls, xb, yb, nx, ny=None):
        return cls((tuple(xb), tuple(yb)), (nx, nx if ny is None else ny))

    @property
    def dim(self):
        return len(self.shape)

    @property
    def h(self):
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.bounds, self.shape))

    @property
    def n_nodes(self):
        return int(np.prod(self.shape))

    @property
    def n_cells(self):
        if self.dim == 1:
            return self.shape[0] - 1
        return 2 * (self.shape[0] - 1) * (self.shape[1] - 1)

    def axes(self):
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.bounds, self.shape)]

    @cached_property
    def coords(self):
        if self.dim == 1:
            return self.axes()[0][:, None]
        x, y = self.axes()
        X, Y = np.meshgrid(x, y)            # shape (ny, nx): row j, column i
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    @cached_property
    def boundary(self):
        if self.dim == 1:
            mask = np.zeros(self.shape[0], dtype=bool)
            mask[[0, -1]] = True
            return mask
        nx, ny = self.shape
        m = np.zeros((ny, nx), dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m.ravel()

    @cached_property
    def cells(self):
        """Vertex indices per cell: (n_cells, dim + 1)."""
        if self.dim == 1:
            k = np.arange(self.shape[0] - 1)
            return np.stack([k, k + 1], axis=-1)
        nx, ny = self.shape
        j, i = np.meshgrid(np.arange(ny - 1), np.arange(nx - 1), indexing="ij")
        k00 = (j * nx + i).ravel()
        k10, k01, k11 = k00 + 1, k00 + nx, k00 + nx + 1
        t0 = np.stack([k00, k10, k11], axis=-1)
        t1 = np.stack([k00, k11, k01], axis=-1)
        return np.stack([t0, t1], axis=1).reshape(-1, 3)

    @cached_property
    def cell_area(self):
        if self.dim == 1:
            return self.h[0]
        return 0.5 * self.h[0] * self.h[1]

    @cached_property
    def centroids(self):
        return self.coords[self.cells].mean(axis=1)

    @cached_property
    def lumped_mass(self):
        m = np.zeros(self.n_nodes)
        np.add.at(m, self.cells.ravel(), self.cell_area / (self.dim + 1))
        return m

    @cached_property
    def gradient_operator(self):
        """Sparse D with (D u).reshape(n_cells, dim) = cellwise P1 gradients."""
        c = self.cells
        nc = self.n_cells
        if self.dim == 1:
            h = self.h[0]
            rows = np.repeat(np.arange(nc), 2)
            cols = c.ravel()
            vals = np.tile([-1.0 / h, 1.0 / h], nc)
            return sparse.csr_matrix((vals, (rows, cols)), shape=(nc, self.n_nodes))
        hx, hy = self.h
        # T0 = (k00, k10, k11): ux = (u10 - u00)/hx, uy = (u11 - u10)/hy
        # T1 = (k00, k11, k01): ux = (u11 - u01)/hx, uy = (u01 - u00)/hy
        t0, t1 = c[0::2], c[1::2]
        n2 = nc // 2
        cell0 = 2 * np.arange(n2)
        cell1 = cell0 + 1
        entries = [
            (2 * cell0, t0[:, 1], 1.0 / hx), (2 * cell0, t0[:, 0], -1.0 / hx),
            (2 * cell0 + 1, t0[:, 2], 1.0 / hy), (2 * cell0 + 1, t0[:, 1], -1.0 / hy),
            (2 * cell1, t1[:, 1], 1.0 / hx), (2 * cell1, t1[:, 2], -1.0 / hx),
            (2 * cell1 + 1, t1[:, 2], 1.0 / hy), (2 * cell1 + 1, t1[:, 0], -1.0 / hy),
        ]
        rows = np.concatenate([e[0] for e in entries])
        cols = np.concatenate([e[1] for e in entries])
        vals = np.concatenate([np.full(n2, e[2]) for e in entries])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(2 * nc, self.n_nodes))

    def same_as(self, other):
        return self is other or (self.bounds == other.bounds and self.shape == other.shape)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise UsageError(f"scalar field needs {self.grid.n_nodes} nodal values, got shape {v.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_cells, self.grid.dim):
            raise UsageError(f"vector field needs shape {(self.grid.n_cells, self.grid.dim)}, got {v.shape}")
        object.__setattr__(self, "values", v)

    def norm(self):
        return np.linalg.norm(self.values, axis=-1)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Dirichlet problem -div grad E(grad u) = f on a structured grid.

    ``g`` and ``f`` are full nodal arrays; only the boundary entries of ``g``
    are used.  ``mode`` selects the relaxation used by the solver.
    """

    grid: Grid
    params: DensityParams
    g: np.ndarray
    f: np.ndarray
    q: float = np.inf
    mode: str = "closed_form"
    kernel: object = None
    aniso: np.ndarray = None
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.grid.n_nodes
        g = np.broadcast_to(np.asarray(self.g, dtype=float), (n,)).copy()
        f = np.broadcast_to(np.asarray(self.f, dtype=float), (n,)).copy()
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(f))):
            raise UsageError("boundary data and source must be finite")
        if not self.q > self.grid.dim:
            raise DomainError(f"source exponent q must exceed the dimension {self.grid.dim}, got {self.q}")
        if self.mode == "mollified" and self.grid.dim != 2:
            raise DomainError("mollified relaxation is available on 2D grids only")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "f", f)

    def density(self, eps):
        exact = ExactDensity(self.params, self.aniso)
        return RelaxedDensity(self.params, eps, mode=self.mode, kernel=self.kernel, exact=exact)

    def with_params(self, params):
        return ProblemSpec(self.grid, params, self.g, self.f, self.q, self.mode, self.kernel,
                           self.aniso, self.name, dict(self.meta))

    def apply_dirichlet(self, u):
        u = np.array(_values(self.grid, u), dtype=float)
        b = self.grid.boundary
        u[b] = self.g[b]
        return u

    @property
    def free(self):
        return ~self.grid.boundary


def _values(grid, u):
    if isinstance(u, ScalarField):
        if not grid.same_as(u.grid):
            raise UsageError("field lives on a different grid")
        return u.values
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_nodes,):
        raise UsageError(f"expected {grid.n_nodes} nodal values, got shape {u.shape}")
    return u


def _cell_gradients(grid, u):
    return (grid.gradient_operator @ u).reshape(grid.n_cells, grid.dim)


def gradient_field(grid, u):
    """Cellwise gradient of the P1 interpolant of u."""
    return VectorField(grid, _cell_gradients(grid, _values(grid, u)))


def _density(spec, eps):
    return eps if isinstance(eps, RelaxedDensity) else spec.density(eps)


def assemble_energy(spec, eps, u):
    """Discrete F_eps(u) with lumped source term."""
    grid = spec.grid
    u = _values(grid, u)
    dens = _density(spec, eps)
    z = _cell_gradients(grid, u)
    return float(grid.cell_area * np.sum(dens.value(z)) - np.dot(grid.lumped_mass * spec.f, u))


def energy_difference(spec, eps, u0, u1):
    """F_eps(u1) - F_eps(u0) evaluated cellwise to avoid cancellation."""
    grid = spec.grid
    u0 = _values(grid, u0)
    u1 = _values(grid, u1)
    dens = _density(spec, eps)
    z0 = _cell_gradients(grid, u0)
    z1 = _cell_gradients(grid, u1)
    return float(grid.cell_area * np.sum(dens.value_diff(z0, z1))
                 - np.dot(grid.lumped_mass * spec.f, u1 - u0))


def assemble_residual(spec, eps, u):
    """Gradient of the discrete energy in the nodal values, zero on Dirichlet nodes."""
    grid = spec.grid
    u = _values(grid, u)
    dens = _density(spec, eps)
    z = _cell_gradients(grid, u)
    flux = grid.cell_area * dens.grad(z)
    r = grid.gradient_operator.T @ flux.ravel() - grid.lumped_mass * spec.f
    r[grid.boundary] = 0.0
    return r


def _eliminate(grid, A):
    keep = sparse.diags((~grid.boundary).astype(float))
    return (keep @ A @ keep + sparse.diags(grid.boundary.astype(float))).tocsr()


def assemble_hessian(spec, eps, u):
    """Sparse symmetric Hessian with Dirichlet rows/columns replaced by identity."""
    grid = spec.grid
    u = _values(grid, u)
    dens = _density(spec, eps)
    z = _cell_gradients(grid, u)
    H = grid.cell_area * dens.hess(z)                       # (n_cells, d, d)
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    nc, d = grid.n_cells, grid.dim
    B = sparse.bsr_matrix((H, np.arange(nc), np.arange(nc + 1)), shape=(nc * d, nc * d))
    D = grid.gradient_operator
    A = (D.T @ B.tocsr() @ D)
    A = 0.5 * (A + A.T)
    return _eliminate(grid, A)
