import numpy as np
import pytest

from facetflow import propcheck as pc
from facetflow.errors import UsageError


def test_euler_identity_full_size():
    rep = pc.run_suite(pc.SuiteSpec("euler_identity", samples=100000, seed=7))
    assert rep.kind == "assert"
    assert rep.violations == 0 and rep.passed


def test_truncation_lipschitz_exact_constant():
    rep = pc.run_suite(pc.SuiteSpec("truncation_lipschitz", samples=100000, seed=3))
    assert rep.violations == 0
    key = next(k for k in rep.checks if k.startswith("h=1/8"))
    assert rep.checks[key].startswith("0,")


def test_monotonicity_p_lt_2_is_stable_fit():
    rep = pc.run_suite(pc.SuiteSpec("monotonicity_p_lt_2", samples=20000, seed=1))
    assert rep.kind == "fit"
    (name, lam), = rep.fitted.items()
    assert lam > 0.0 and np.isfinite(lam)
    assert abs(rep.fitted_double[name] / lam - 1.0) <= 0.2
    assert rep.passed


@pytest.mark.parametrize("suite", pc.ASSERTING)
def test_asserting_suites_pass(suite):
    rep = pc.run_suite(pc.SuiteSpec(suite, samples=20000, seed=11))
    assert rep.passed, rep.to_text()


@pytest.mark.parametrize("suite", pc.FITTING)
def test_fitting_suites_report_finite_constants(suite):
    rep = pc.run_suite(pc.SuiteSpec(suite, samples=5000, seed=11))
    assert rep.fitted
    assert all(np.isfinite(v) and v > 0 for v in rep.fitted.values())
    assert rep.stable, rep.to_text()


def test_growth_min_form_is_reported_not_asserted():
    rep = pc.run_suite(pc.SuiteSpec("growth_p_lt_2", samples=20000, seed=2))
    assert rep.violations == 0
    key = next(k for k in rep.checks if "samples above" in k)
    assert rep.checks[key] > 0


def test_reproducible_from_seed():
    a = pc.run_suite(pc.SuiteSpec("relaxed_hessian_bounds", samples=3000, seed=5))
    b = pc.run_suite(pc.SuiteSpec("relaxed_hessian_bounds", samples=3000, seed=5))
    assert a.to_text() == b.to_text()
    f1 = pc.run_suite(pc.SuiteSpec("g_p_eps_monotone", samples=3000, seed=5))
    f2 = pc.run_suite(pc.SuiteSpec("g_p_eps_monotone", samples=3000, seed=5))
    assert f1.fitted == f2.fitted


def test_battery_is_thread_independent(monkeypatch):
    serial = pc.run_battery(seed=4, samples=2000, threads=1)
    monkeypatch.setenv("FACETFLOW_THREADS", "4")
    parallel = pc.run_battery(seed=4, samples=2000)
    assert [r.to_text() for r in serial] == [r.to_text() for r in parallel]
    assert [r.suite for r in serial] == list(pc.SUITES)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("FACETFLOW_THREADS", "3")
    assert pc.thread_count() == 3
    assert pc.thread_count(8) == 3
    monkeypatch.setenv("FACETFLOW_THREADS", "many")
    with pytest.raises(UsageError):
        pc.thread_count()


def test_violation_produces_witness():
    rep = pc.SuiteReport("x", "assert", 3)
    spec = pc.SuiteSpec("euler_identity", samples=3)
    n = pc._record(rep, np.array([0.0, 2.0, 5.0]), np.array([1.0, 1.0, 1.0]), spec,
                   {"z": np.arange(6.0).reshape(3, 2)})
    assert n == 2 and rep.violations == 2
    assert not rep.passed
    assert "worst witness" in rep.to_text()


def test_unknown_suite():
    with pytest.raises(UsageError):
        pc.SuiteSpec("nonsense")
    with pytest.raises(UsageError):
        pc.run_suite("nonsense")
