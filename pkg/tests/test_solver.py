import numpy as np
import pytest
from scipy import sparse

from facetflow.density import DensityParams
from facetflow.discretize import Grid, ProblemSpec, assemble_hessian, assemble_residual
from facetflow.errors import DomainError, LinearSolverError, NonConvergenceError, UsageError
from facetflow.problems import builtin_problem, oracle_1d
from facetflow.solver import (CGConfig, _roundoff_floor, ContinuationSchedule, SolverConfig, continuation_solve,
                              linear_solve_spd, solve_fixed_eps)


def test_cg_identity():
    r = np.arange(5.0)
    np.testing.assert_allclose(linear_solve_spd(sparse.identity(5, format="csr"), r), r)


def test_cg_tridiagonal_against_dense():
    h = 0.25
    A = sparse.diags([[-1.0] * 2, [2.0] * 3, [-1.0] * 2], [-1, 0, 1]).tocsr() / h**2
    x = linear_solve_spd(A, np.ones(3))
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), np.ones(3)), atol=1e-10)


@pytest.mark.parametrize("pre", ["jacobi", "none", "direct"])
def test_cg_random_spd(rng, pre):
    M = rng.standard_normal((20, 20))
    A = sparse.csr_matrix(M.T @ M + np.eye(20))
    b = rng.standard_normal(20)
    cfg = CGConfig(preconditioner=pre)
    x = linear_solve_spd(A, b, cfg)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= cfg.tol * 10


def test_cg_rejects_indefinite():
    A = sparse.diags([1.0, -1.0, 2.0]).tocsr()
    with pytest.raises(LinearSolverError):
        linear_solve_spd(A, np.ones(3), CGConfig(preconditioner="none"))
    with pytest.raises(LinearSolverError):
        linear_solve_spd(A, np.ones(3))


def test_zero_data_gives_zero_solution():
    spec = ProblemSpec(Grid.rectangle((0.0, 1.0), (0.0, 1.0), 9), DensityParams(b=1.0, p=2.0), 0.0, 0.0)
    sol = solve_fixed_eps(spec, 0.1)
    np.testing.assert_array_equal(sol.u.values, 0.0)
    assert sol.iterations <= 1


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_linear_boundary_data_is_reproduced(p):
    grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), 9)
    ell = 0.4 + 1.5 * grid.coords[:, 0] - 0.7 * grid.coords[:, 1]
    spec = ProblemSpec(grid, DensityParams(b=1.0, p=p), ell, 0.0)
    sol = solve_fixed_eps(spec, 0.05)
    np.testing.assert_allclose(sol.u.values, ell, atol=1e-10)


def test_plug_benchmark_fixed_eps():
    spec = builtin_problem("plug1d")
    sol = solve_fixed_eps(spec, 1e-4, spec.apply_dirichlet(np.zeros(spec.grid.n_nodes)))
    ref = oracle_1d(1.0, 2.0, 2.0).value(spec.grid.coords[:, 0])
    assert np.abs(sol.u.values - ref).max() <= 5e-3
    r = assemble_residual(spec, 1e-4, sol.u)
    assert np.abs(r).max() == pytest.approx(sol.residual)
    # stopping test: tolerance, or the round-off floor of the stiff eps = 1e-4 Hessian
    cfg = SolverConfig()
    floor = _roundoff_floor(assemble_hessian(spec, 1e-4, sol.u), sol.u.values)
    assert sol.residual <= max(cfg.tol_residual_abs + cfg.tol_residual_rel * 2.0, floor)
    # Armijo steps decrease the energy
    assert all(b < a for a, b in zip(sol.energies, sol.energies[1:]))


def test_single_eps_schedule_matches_fixed_solve():
    spec = builtin_problem("plug1d", 65)
    seq = continuation_solve(spec, ContinuationSchedule(0.05, (0.01,)))
    from facetflow.solver import harmonic_extension
    direct = solve_fixed_eps(spec, 0.01, harmonic_extension(spec))
    np.testing.assert_array_equal(seq.final.u.values, direct.u.values)
    assert seq.grad_diff_l2 == []


def test_continuation_plug_value():
    spec = builtin_problem("plug1d")
    seq = continuation_solve(spec, ContinuationSchedule(0.05, tuple(0.1 * 2.0**-k for k in range(8))))
    assert seq.final.u.values[spec.grid.n_nodes // 2] == pytest.approx(0.25, abs=5e-3)
    assert len(seq.grad_diff_l2) == 7
    assert len(seq.grad_sup_interior) == 8


def test_nonconvergence_carries_last_iterate():
    spec = builtin_problem("plug1d", 129)
    with pytest.raises(NonConvergenceError) as info:
        solve_fixed_eps(spec, 1e-4, spec.apply_dirichlet(np.zeros(129)), SolverConfig(max_newton=1))
    assert info.value.last_iterate.values.shape == (129,)
    assert info.value.eps == 1e-4


def test_init_must_match_boundary():
    spec = builtin_problem("plug1d", 33)
    with pytest.raises(UsageError):
        solve_fixed_eps(spec, 0.1, np.ones(33))


def test_schedule_validation():
    with pytest.raises(DomainError):
        ContinuationSchedule(0.1, (0.1, 0.2))
    with pytest.raises(DomainError):
        ContinuationSchedule(0.1, ())
    s = ContinuationSchedule.geometric(0.11, 0.1, 0.5, 4)
    np.testing.assert_allclose(s.eps_list, [0.1, 0.05, 0.025, 0.0125])
    np.testing.assert_array_equal(s.diagnostic_eligible(), [False, False, False, True])
    with pytest.raises(UsageError):
        SolverConfig(armijo_c1=0.7)


def test_continuation_differences_match_continuum_relaxation():
    # z/sqrt(eps^2 + z^2) + z = -2x solved pointwise and integrated with quad; frozen values
    continuum = [0.0406102, 0.0231253, 0.0128899, 0.00706904, 0.00382814, 0.00205249, 0.00109171]
    spec = builtin_problem("plug1d")
    seq = continuation_solve(spec, ContinuationSchedule(0.05, tuple(0.1 * 2.0**-k for k in range(8))))
    np.testing.assert_allclose(seq.grad_diff_l2, continuum, rtol=1e-4)
