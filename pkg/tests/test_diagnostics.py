import numpy as np
import pytest

from facetflow import diagnostics as dg
from facetflow.density import DensityParams
from facetflow.discretize import Grid, _cell_gradients
from facetflow.errors import DomainError
from facetflow.problems import builtin_problem, oracle_1d
from facetflow.solver import ContinuationSchedule, continuation_solve
from facetflow.truncation import truncate_relaxed, v_eps


@pytest.fixture(scope="module")
def plug():
    spec = builtin_problem("plug1d")
    seq = continuation_solve(spec, ContinuationSchedule.geometric(1e-3, 0.1, 10.0 ** (-1.0 / 3.0), 10))
    return spec, seq.final


def test_plug_facet_and_value(plug):
    spec, sol = plug
    mask, measure = dg.facet_extract(spec.grid, sol.u, 1e-2)
    assert abs(measure - 1.0) <= 0.04
    assert dg.plug_value(spec.grid, sol.u, mask) == pytest.approx(0.25, abs=5e-3)


def test_poisson_facet_is_critical_set_only():
    grid = Grid.interval(-1.0, 1.0, 513)
    u = oracle_1d(0.0, 2.0, 2.0).value(grid.coords[:, 0])
    mask, _ = dg.facet_extract(grid, u, 1e-2)
    assert mask.sum() <= 2
    assert np.all(np.abs(grid.centroids[mask, 0]) < 0.01)


def test_no_facet_gives_nan_plug_value():
    grid = Grid.interval(0.0, 1.0, 9)
    u = grid.coords[:, 0]
    mask, measure = dg.facet_extract(grid, u, 0.1)
    assert measure == 0.0 and np.isnan(dg.plug_value(grid, u, mask))


def test_excess_of_constant_field_vanishes():
    grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), 33)
    v = np.tile([1.0, -2.0], (grid.n_cells, 1))
    np.testing.assert_array_equal(dg.campanato_excess(grid, v, [0.5, 0.5], (0.1, 0.2, 0.3)), 0.0)


def test_excess_of_linear_field_is_variance():
    grid = Grid.interval(-1.0, 1.0, 2049)
    v = grid.centroids[:, 0]
    for r in (0.1, 0.3, 0.5):
        phi = dg.campanato_excess(grid, v, [0.2], (r,))[0]
        assert phi == pytest.approx(r**2 / 3.0, rel=5 * grid.h[0] / r)


def test_excess_is_mean_minimal(rng):
    grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), 33)
    v = rng.standard_normal((grid.n_cells, 2))
    x0, r = np.array([0.4, 0.6]), 0.25
    phi = dg.campanato_excess(grid, v, x0, (r,))[0]
    vb = v[dg.ball_mask(grid, x0, r)]
    for zeta in rng.standard_normal((20, 2)):
        assert phi <= np.mean(np.sum((vb - zeta) ** 2, axis=-1)) + 1e-14


def test_ball_must_stay_inside():
    grid = Grid.interval(0.0, 1.0, 33)
    with pytest.raises(DomainError):
        dg.ball_mask(grid, [0.05], 0.1)


def test_superlevel_measure_examples(plug):
    grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), 17)
    V = np.full(grid.n_cells, 0.3)
    assert dg.superlevel_measure(grid, V, 0.1, 1e6, 0.5, [0.5, 0.5], 0.3) == 0.0
    delta, mu = 0.1, 0.4
    V = np.full(grid.n_cells, delta + mu)
    for nu in (0.01, 0.5, 0.99):
        assert dg.superlevel_measure(grid, V, delta, mu, nu, [0.5, 0.5], 0.3) == 1.0
    spec, sol = plug
    Vp = v_eps(_cell_gradients(spec.grid, sol.u.values), sol.eps)
    assert dg.superlevel_measure(spec.grid, Vp, 1e-3, 0.5, 0.1, [0.0], 0.2) == 0.0


def test_holder_of_constant_and_linear_fields():
    grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), 65)
    radii = dg.DiagnosticsParams().radii(grid)
    const = dg.empirical_holder(grid, np.ones((grid.n_cells, 2)), radii)
    assert np.isinf(const.alpha) and const.n_centers == 0 and const.sup_quotient == 0.0
    lin = dg.empirical_holder(grid, grid.centroids @ np.array([[1.0, 2.0], [-0.5, 0.3]]), radii)
    assert lin.alpha >= 1.0 - 0.02
    assert np.isfinite(lin.sup_quotient)


def test_holder_of_plug_truncated_gradient():
    spec = builtin_problem("plug1d")
    delta = 0.05
    seq = continuation_solve(spec, ContinuationSchedule(delta, (0.1, 0.05, 0.02, delta / 10)))
    z = _cell_gradients(spec.grid, seq.final.u.values)
    G = truncate_relaxed(z, 2 * delta, seq.final.eps)
    fit = dg.empirical_holder(spec.grid, G, dg.DiagnosticsParams(delta=delta).radii(spec.grid))
    assert fit.alpha >= 0.5


def test_ellipticity_ratio(plug):
    grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), 9)
    params = DensityParams(b=0.0, p=3.0)
    u = np.random.default_rng(1).standard_normal(grid.n_nodes)
    assert np.all(dg.ellipticity_ratio_field(grid, u, 0.01, params) <= params.Lam / params.lam + 1e-12)
    spec, sol = plug
    ratio = dg.ellipticity_ratio_field(spec.grid, sol.u, sol.eps, spec.params)
    mask, _ = dg.facet_extract(spec.grid, sol.u, 1e-2)
    assert ratio[mask].max() == pytest.approx(1.0 + 1.0 / sol.eps, rel=1e-2)
    core = np.abs(spec.grid.centroids[:, 0]) <= 0.4
    assert np.all(ratio[core] > dg.NEAR_SINGULAR)
    # away from the facet the bound is insensitive to eps
    z = np.linalg.norm(_cell_gradients(spec.grid, sol.u.values), axis=-1)
    far = z >= 2 * 1e-3
    exact = 1.0 + spec.params.K / z[far]
    np.testing.assert_allclose(ratio[far], exact, rtol=0.05)


def test_convergence_report_of_identical_solutions(plug):
    spec, sol = plug
    from facetflow.solver import SolutionSequence
    seq = SolutionSequence(spec, ContinuationSchedule(0.05, (0.01, 0.005)), [sol, sol])
    rows = dg.convergence_report(seq)
    assert rows[0]["grad_diff_l2"] == 0.0 and rows[0]["grad_diff_lp"] == 0.0
    with pytest.raises(DomainError):
        dg.convergence_report(SolutionSequence(spec, seq.schedule, [sol]))


def test_diagnose_report(plug):
    spec, sol = plug
    rep = dg.diagnose(spec.grid, sol.u, sol.eps, spec.params, dg.DiagnosticsParams(delta=1e-2, facet_tol=1e-2))
    text = rep.to_text()
    assert text.splitlines()[-1].startswith("plug_value: ")
    assert float(text.splitlines()[-1].split(": ")[1]) == pytest.approx(0.25, abs=5e-3)
    assert rep.extra["u_identity_error"] <= 1e-14
    assert rep.beta == 0.9


def test_diagnose_needs_small_eps(plug):
    spec, sol = plug
    with pytest.raises(DomainError):
        dg.diagnose(spec.grid, sol.u, 0.01, spec.params, dg.DiagnosticsParams(delta=0.05))


def test_beta_from_q():
    assert dg.DiagnosticsParams(q=4.0).beta(2) == 0.5
    with pytest.raises(DomainError):
        dg.DiagnosticsParams(q=2.0).beta(2)


def test_default_plug_schedule_converges():
    spec = builtin_problem("plug1d")
    seq = continuation_solve(spec, ContinuationSchedule.geometric(1e-3, 0.1, 10.0 ** (-1.0 / 3.0), 10))
    rows = dg.convergence_report(seq)
    assert rows[-1]["grad_diff_l2"] <= 1e-3
    assert rows[-1]["g_sup_diff"] <= 1e-2
    np.testing.assert_allclose([r["grad_diff_l2"] for r in rows], seq.grad_diff_l2, rtol=1e-12)
