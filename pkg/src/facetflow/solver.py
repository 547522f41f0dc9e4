"""Damped Newton minimisation of F_eps and eps-continuation."""
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import spsolve

from .density import DensityParams
from .discretize import (ProblemSpec, ScalarField, _cell_gradients, _values, assemble_energy,
                         assemble_hessian, assemble_residual, energy_difference)
from .errors import DomainError, LinearSolverError, NonConvergenceError, UsageError
from .truncation import truncate_relaxed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CGConfig:
    tol: float = 1e-10
    max_iter: int = 20000
    preconditioner: str = "jacobi"      # "jacobi" or "none"; "direct" bypasses CG

    def __post_init__(self):
        if not (self.tol > 0.0 and self.max_iter > 0):
            raise UsageError("cg tolerance and iteration cap must be positive")
        if self.preconditioner not in ("jacobi", "none", "direct"):
            raise UsageError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass(frozen=True)
class SolverConfig:
    tol_residual_abs: float = 1e-11
    tol_residual_rel: float = 1e-10
    max_newton: int = 200
    armijo_c1: float = 1e-4
    armijo_factor: float = 0.5
    armijo_max_backtracks: int = 60
    cg: CGConfig = field(default_factory=CGConfig)

    def __post_init__(self):
        if not (self.tol_residual_abs > 0.0 and self.tol_residual_rel > 0.0):
            raise UsageError("residual tolerances must be positive")
        if self.max_newton < 1:
            raise UsageError("max_newton must be at least 1")
        if not (0.0 < self.armijo_c1 < 0.5):
            raise UsageError("Armijo slope parameter must lie in (0, 1/2)")
        if not (0.0 < self.armijo_factor < 1.0):
            raise UsageError("backtracking factor must lie in (0, 1)")


@dataclass(frozen=True)
class ContinuationSchedule:
    delta: float
    eps_list: tuple

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if not (0.0 < self.delta < 1.0):
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if not eps:
            raise DomainError("continuation schedule is empty")
        if any(not (0.0 < e < 1.0) for e in eps):
            raise DomainError("every eps must lie in (0, 1)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise DomainError("eps schedule must be strictly decreasing")
        object.__setattr__(self, "eps_list", eps)

    @classmethod
    def geometric(cls, delta, eps0, factor, steps):
        if not (0.0 < factor < 1.0) or steps < 1:
            raise DomainError("geometric schedule needs factor in (0, 1) and steps >= 1")
        return cls(delta, tuple(eps0 * factor**k for k in range(steps)))

    def diagnostic_eligible(self):
        """Mask of the eps values satisfying eps < delta / 8."""
        return np.array([e < self.delta / 8.0 for e in self.eps_list])


@dataclass
class Solution:
    u: ScalarField
    eps: float
    iterations: int
    residual: float
    energy: float
    energies: list
    seconds: float = 0.0


@dataclass
class SolutionSequence:
    spec: ProblemSpec
    schedule: ContinuationSchedule
    solutions: list = field(default_factory=list)
    grad_diff_lp: list = field(default_factory=list)
    grad_diff_l2: list = field(default_factory=list)
    g_sup_diff: list = field(default_factory=list)
    grad_sup_interior: list = field(default_factory=list)

    @property
    def final(self):
        return self.solutions[-1]


def linear_solve_spd(A, rhs, config=None):
    """Preconditioned conjugate gradients for a symmetric positive definite A."""
    config = config or CGConfig()
    b = np.asarray(rhs, dtype=float)
    if config.preconditioner == "direct":
        x = spsolve(A.tocsc(), b)
        if not np.all(np.isfinite(x)):
            raise LinearSolverError("direct solve produced non-finite values")
        return x
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x
    if config.preconditioner == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0.0):
            raise LinearSolverError("nonpositive diagonal entry; matrix is not SPD")
        minv = 1.0 / d
    else:
        minv = np.ones_like(b)
    r = b.copy()
    zv = minv * r
    pdir = zv.copy()
    rz = r @ zv
    target = config.tol * bnorm
    for it in range(config.max_iter):
        Ap = A @ pdir
        curv = pdir @ Ap
        if not curv > 0.0:
            raise LinearSolverError(f"CG breakdown at iteration {it}: nonpositive curvature {curv:.3e}")
        a = rz / curv
        x += a * pdir
        r -= a * Ap
        if np.linalg.norm(r) <= target:
            return x
        zv = minv * r
        rz_new = r @ zv
        pdir = zv + (rz_new / rz) * pdir
        rz = rz_new
    raise LinearSolverError(f"CG did not reach relative residual {config.tol:g} "
                            f"in {config.max_iter} iterations (at {np.linalg.norm(r) / bnorm:.3e})")


def _tolerance(spec, config):
    return config.tol_residual_abs + config.tol_residual_rel * float(np.max(np.abs(spec.f), initial=0.0))


def _roundoff_floor(H, u):
    # smallest residual resolvable when u is stored in double precision
    rowsum = np.asarray(abs(H).sum(axis=1)).ravel()
    return 8.0 * np.finfo(float).eps * float(np.max(np.abs(u), initial=1.0)) * float(rowsum.max())


def solve_fixed_eps(spec, eps, init=None, config=None):
    """Minimise F_eps over functions with the Dirichlet data of ``spec``."""
    config = config or SolverConfig()
    t0 = time.perf_counter()
    grid = spec.grid
    if init is None:
        init = spec.apply_dirichlet(np.zeros(grid.n_nodes))
    u = _values(grid, init).astype(float)
    if not np.allclose(u[grid.boundary], spec.g[grid.boundary], rtol=0.0, atol=1e-12):
        raise UsageError("initial guess does not satisfy the Dirichlet data")
    u = spec.apply_dirichlet(u)
    dens = spec.density(eps)
    tol = _tolerance(spec, config)
    energy = assemble_energy(spec, dens, u)
    energies = [energy]
    res = assemble_residual(spec, dens, u)
    rnorm = float(np.max(np.abs(res)))
    it = 0
    floor = 0.0
    while rnorm > max(tol, floor):
        if it >= config.max_newton:
            raise NonConvergenceError(f"Newton did not converge in {config.max_newton} iterations "
                                      f"at eps={eps:g} (residual {rnorm:.3e} > {tol:.3e})",
                                      last_iterate=ScalarField(grid, u), eps=eps, residual=rnorm)
        H = assemble_hessian(spec, dens, u)
        floor = _roundoff_floor(H, u)
        if rnorm <= floor:
            break
        du = -linear_solve_spd(H, res, config.cg)
        du[grid.boundary] = 0.0
        slope = float(res @ du)
        t = 1.0
        accepted = False
        for _ in range(config.armijo_max_backtracks):
            trial = u + t * du
            dF = energy_difference(spec, dens, u, trial)
            if dF <= config.armijo_c1 * t * slope:
                accepted = True
                break
            t *= config.armijo_factor
        if not accepted:
            # at the round-off floor of the energy the full step is judged by its residual
            trial = u + du
            res_trial = assemble_residual(spec, dens, trial)
            if np.max(np.abs(res_trial)) < rnorm:
                dF = energy_difference(spec, dens, u, trial)
                accepted = True
            else:
                raise NonConvergenceError(f"line search failed at eps={eps:g} (residual {rnorm:.3e})",
                                          last_iterate=ScalarField(grid, u), eps=eps, residual=rnorm)
        u = trial
        energy = energy + dF
        energies.append(energy)
        res = assemble_residual(spec, dens, u)
        rnorm = float(np.max(np.abs(res)))
        it += 1
        log.debug("eps=%g newton %d step %.3g residual %.3e", eps, it, t, rnorm)
    return Solution(ScalarField(grid, u), float(eps), it, rnorm, assemble_energy(spec, dens, u),
                    energies, time.perf_counter() - t0)


def harmonic_extension(spec, config=None):
    """P1 harmonic extension of the boundary data (one b = 0, p = 2 solve)."""
    lap = ProblemSpec(spec.grid, DensityParams(b=0.0, p=2.0), spec.g, np.zeros(spec.grid.n_nodes),
                      q=spec.q, name=spec.name + ":harmonic")
    return solve_fixed_eps(lap, 0.5, spec.apply_dirichlet(np.zeros(spec.grid.n_nodes)), config).u


def _interior_cells(grid, frac=0.1):
    c = grid.centroids
    keep = np.ones(grid.n_cells, dtype=bool)
    for a, (lo, hi) in enumerate(grid.bounds):
        pad = frac * (hi - lo)
        keep &= (c[:, a] >= lo + pad) & (c[:, a] <= hi - pad)
    return keep


def gradient_difference_norm(grid, u0, u1, p):
    """Discrete ||grad u1 - grad u0||_{L^p} (cellwise exact for P1)."""
    d = np.linalg.norm(_cell_gradients(grid, _values(grid, u1) - _values(grid, u0)), axis=-1)
    if np.isinf(p):
        return float(d.max())
    return float((grid.cell_area * np.sum(d**p)) ** (1.0 / p))


def continuation_solve(spec, schedule, config=None, init=None, callback=None):
    """Solve along ``schedule``, warm-starting each eps from the previous solution."""
    config = config or SolverConfig()
    grid = spec.grid
    seq = SolutionSequence(spec, schedule)
    u = harmonic_extension(spec, config) if init is None else init
    interior = _interior_cells(grid)
    p = spec.params.p
    prev_G = None
    for eps in schedule.eps_list:
        try:
            sol = solve_fixed_eps(spec, eps, u, config)
        except NonConvergenceError as exc:
            exc.eps = eps
            raise
        z = _cell_gradients(grid, sol.u.values)
        G = truncate_relaxed(z, 2.0 * schedule.delta, eps)
        if seq.solutions:
            prev = seq.solutions[-1].u
            seq.grad_diff_lp.append(gradient_difference_norm(grid, prev, sol.u, p))
            seq.grad_diff_l2.append(gradient_difference_norm(grid, prev, sol.u, 2.0))
            seq.g_sup_diff.append(float(np.max(np.linalg.norm(G - prev_G, axis=-1))))
        seq.grad_sup_interior.append(float(np.max(np.linalg.norm(z[interior], axis=-1), initial=0.0)))
        seq.solutions.append(sol)
        prev_G = G
        u = sol.u
        log.info("eps=%g: %d Newton steps, residual %.2e, %.2fs", eps, sol.iterations, sol.residual,
                 sol.seconds)
        if callback is not None:
            callback(sol)
    return seq
