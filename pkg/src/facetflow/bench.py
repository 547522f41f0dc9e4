"""Acceptance benchmarks shared by ``facetflow bench`` and the test-suite."""
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import diagnostics as dg
from . import mollifier, propcheck
from .density import DensityParams, RelaxedDensity
from .discretize import (Grid, ProblemSpec, assemble_hessian, assemble_residual, energy_difference)
from .problems import PIPE, builtin_problem, oracle_1d, oracle_bingham_pipe
from .solver import ContinuationSchedule, continuation_solve


@dataclass
class CriterionResult:
    key: str
    title: str
    passed: bool
    seconds: float
    checks: list = field(default_factory=list)      # (label, value, limit, ok)

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  [{self.key}] {self.title} ({self.seconds:.1f}s)"

    def details(self):
        return [f"    {'ok ' if ok else 'BAD'} {label}: {_fmt(v)} (limit {lim})" for label, v, lim, ok in self.checks]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _result(key, title, t0, checks):
    return CriterionResult(key, title, all(c[3] for c in checks), time.perf_counter() - t0, checks)


PLUG_SCHEDULE = dict(delta=1e-3, eps0=0.1, factor=10.0 ** (-1.0 / 3.0), steps=10)
PIPE_SCHEDULE = dict(delta=1e-2, eps0=0.1, factor=10.0 ** (-1.0 / 3.0), steps=7)


def plug1d():
    t0 = time.perf_counter()
    spec = builtin_problem("plug1d")
    seq = continuation_solve(spec, ContinuationSchedule.geometric(**PLUG_SCHEDULE))
    u = seq.final.u.values
    orc = oracle_1d(1.0, 2.0, 2.0)
    err = float(np.max(np.abs(u - orc.value(spec.grid.coords[:, 0]))))
    mask, length = dg.facet_extract(spec.grid, u, 1e-2)
    plug = dg.plug_value(spec.grid, u, mask)
    secs = time.perf_counter() - t0
    return _result("1", "1D plug benchmark", t0, [
        ("final eps", seq.final.eps, "1e-4", abs(seq.final.eps - 1e-4) < 1e-12),
        ("max nodal error", err, "<= 5e-3", err <= 5e-3),
        ("facet length", length, "1 +- 0.04", abs(length - 1.0) <= 0.04),
        ("plug value", plug, "0.25 +- 5e-3", abs(plug - 0.25) <= 5e-3),
        ("runtime [s]", secs, "<= 10", secs <= 10.0),
    ])


def pipe2d():
    t0 = time.perf_counter()
    spec = builtin_problem("pipe2d")
    seq = continuation_solve(spec, ContinuationSchedule.geometric(**PIPE_SCHEDULE))
    u = seq.final.u.values
    orc = oracle_bingham_pipe(**PIPE)
    err = float(np.max(np.abs(u - orc(np.linalg.norm(spec.grid.coords, axis=-1)))))
    mask, area = dg.facet_extract(spec.grid, u, 1e-2)
    plug = dg.plug_value(spec.grid, u, mask)
    secs = time.perf_counter() - t0
    target = 2.0 - np.sqrt(2.0) + 0.25
    return _result("2", "2D Bingham square benchmark", t0, [
        ("final eps", seq.final.eps, "1e-3", abs(seq.final.eps - 1e-3) < 1e-12),
        ("max nodal error", err, "<= 2e-2", err <= 2e-2),
        ("facet area", area, "pi/4 +- 10%", abs(area / (np.pi / 4.0) - 1.0) <= 0.1),
        ("plateau value", plug, f"{target:.4f} +- 2e-2", abs(plug - target) <= 2e-2),
        ("runtime [s]", secs, "<= 120", secs <= 120.0),
    ])


def continuation():
    t0 = time.perf_counter()
    spec = builtin_problem("plug1d")
    delta = 0.05
    seq = continuation_solve(spec, ContinuationSchedule(delta, tuple(0.1 * 2.0**-k for k in range(8))))
    rows = dg.convergence_report(seq)
    l2 = [r["grad_diff_l2"] for r in rows]
    gs = [r["g_sup_diff"] for r in rows]
    # rows[k] compares eps_k and eps_{k+1}; monotone from the pair (1, 2) on
    tail = l2[1:]
    mono = all(b <= a for a, b in zip(tail, tail[1:]))
    gmono = all(b <= a for a, b in zip(gs[1:], gs[2:]))
    return _result("3", "continuation Cauchy property", t0, [
        ("L2 gradient differences", l2, "nonincreasing after k=1", mono),
        ("final L2 gradient difference", l2[-1], "<= 1e-3", l2[-1] <= 1e-3),
        ("sup differences of G_{2delta,eps}", gs, "decreasing", gmono),
        ("final G sup difference", gs[-1], "<= 1e-2", gs[-1] <= 1e-2),
    ])


def holder():
    t0 = time.perf_counter()
    spec = builtin_problem("pipe2d")
    delta = 0.05
    eps_list = (0.1, 0.05, 0.025, 0.0125, delta / 10.0, delta / 20.0, delta / 40.0)
    eps_list = tuple(sorted(set(eps_list), reverse=True))
    seq = continuation_solve(spec, ContinuationSchedule(delta, eps_list))
    params = dg.DiagnosticsParams(delta=delta)
    alphas, quots = [], []
    for sol in seq.solutions:
        if sol.eps in (delta / 10.0, delta / 20.0, delta / 40.0):
            z = dg._cell_gradients(spec.grid, sol.u.values)
            G = dg.truncate_relaxed(z, 2.0 * delta, sol.eps)
            fit = dg.empirical_holder(spec.grid, G, params.radii(spec.grid), None, params.n_centers,
                                      params.holder_pairs, params.seed)
            alphas.append(fit.alpha)
            quots.append(fit.sup_quotient)
    fa = max(alphas) / min(alphas)
    fq = max(quots) / min(quots)
    return _result("4", "uniform Hoelder boundedness", t0, [
        ("alpha_hat at eps = delta/10, /20, /40", alphas, ">= 0.4", min(alphas) >= 0.4),
        ("alpha_hat spread (max/min)", fa, "<= 2", fa <= 2.0),
        ("sup quotients", quots, "finite", all(np.isfinite(quots))),
        ("sup quotient spread (max/min)", fq, "<= 2", fq <= 2.0),
    ])


def battery(seed=7, samples=100000):
    t0 = time.perf_counter()
    reports = propcheck.run_battery(seed=seed, samples=samples)
    secs = time.perf_counter() - t0
    again = propcheck.run_battery(seed=seed, samples=samples, suites=propcheck.ASSERTING)
    reproducible = all(a.violations == b.violations and a.checks == b.checks and a.witness == b.witness
                       for a, b in zip([r for r in reports if r.kind == "assert"], again))
    checks = []
    for r in reports:
        if r.kind == "assert":
            checks.append((f"{r.suite} violations", r.violations, "== 0", r.violations == 0))
        else:
            ratio = {k: r.fitted_double[k] / r.fitted[k] for k in r.fitted}
            checks.append((f"{r.suite} fitted 2n/n", list(ratio.values()), "within 1 +- 0.2", r.passed))
    checks.append(("asserting suites reproducible from seed", reproducible, "True", reproducible))
    checks.append(("runtime [s]", secs, "<= 60", secs <= 60.0))
    return _result("5", "verification battery", t0, checks)


def mollified_gradient_oracle(z, eps, b, p):
    """grad (j_eps * E)(z) for the quartic kernel by adaptive 2D quadrature.

    Polar coordinates about the origin, where grad E has its only
    singularity: x = rho e(theta), rho in [|z| - eps, |z| + eps], theta in the
    angular window of the kernel support.
    """
    c = 5.0 / np.pi
    nz = float(np.linalg.norm(z))
    lo, hi = max(0.0, nz - eps), nz + eps
    if nz > eps:
        phi = np.arctan2(z[1], z[0])
        half = np.arcsin(eps / nz)
        th0, th1 = phi - half, phi + half
    else:
        th0, th1 = 0.0, 2.0 * np.pi
    out = []
    for k in range(2):
        def f(rho, th):
            e = (np.cos(th), np.sin(th))
            d2 = ((z[0] - rho * e[0]) ** 2 + (z[1] - rho * e[1]) ** 2) / eps**2
            if d2 >= 1.0:
                return 0.0
            return c * (1.0 - d2) ** 4 / eps**2 * (b + rho ** (p - 1.0)) * e[k] * rho
        v, _ = integrate.dblquad(f, th0, th1, lo, hi, epsabs=1e-12, epsrel=1e-11)
        out.append(v)
    return np.array(out)


def _calculus_problem(n):
    grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), n)
    rng = np.random.default_rng(3)
    g = np.sin(2.0 * grid.coords[:, 0]) + grid.coords[:, 1] ** 2
    f = 1.0 + grid.coords[:, 0]
    spec = ProblemSpec(grid, DensityParams(b=1.0, p=3.0), g, f)
    u = spec.apply_dirichlet(g + 0.3 * rng.standard_normal(grid.n_nodes))
    return spec, u, rng


def fd_residual_error(n=17, eps=0.1, t=1e-5):
    """max |residual - central FD of energy| / max |residual| over all free nodes."""
    spec, u, _ = _calculus_problem(n)
    r = assemble_residual(spec, eps, u)
    fd = np.zeros_like(r)
    for i in np.nonzero(spec.free)[0]:
        up, um = u.copy(), u.copy()
        up[i] += t
        um[i] -= t
        fd[i] = energy_difference(spec, eps, um, up) / (2.0 * t)
    return float(np.max(np.abs(r - fd)) / np.max(np.abs(r)))


def fd_hessian_error(n=17, eps=0.1, t=1e-6, directions=10):
    """max over random directions of |H v - central FD of residual| / |H v| (sup norms)."""
    spec, u, rng = _calculus_problem(n)
    H = assemble_hessian(spec, eps, u)
    worst = 0.0
    for _ in range(directions):
        v = rng.standard_normal(spec.grid.n_nodes)
        v[spec.grid.boundary] = 0.0
        fd = (assemble_residual(spec, eps, u + t * v) - assemble_residual(spec, eps, u - t * v)) / (2.0 * t)
        Hv = H @ v
        Hv[spec.grid.boundary] = 0.0
        worst = max(worst, float(np.max(np.abs(Hv - fd)) / np.max(np.abs(Hv))))
    return worst


def min_hessian_eigenvalue(eps=1e-3):
    """Smallest eigenvalue of the free-node block on a 3x3 grid (one free node) and a 1D 9-node grid."""
    vals = []
    for grid in (Grid.rectangle((-1.0, 1.0), (-1.0, 1.0), 3), Grid.interval(-1.0, 1.0, 9)):
        vals.append(_min_eig(grid, eps))
    return min(vals)


def _min_eig(grid, eps):
    spec = ProblemSpec(grid, DensityParams(b=1.0, p=1.5), 0.0, 1.0)
    u = spec.apply_dirichlet(np.random.default_rng(5).standard_normal(grid.n_nodes))
    H = assemble_hessian(spec, eps, u).toarray()
    free = spec.free
    return float(np.linalg.eigvalsh(H[np.ix_(free, free)]).min())


def mollified_gradient_error(points=100, eps=0.1, b=1.0, p=3.0, seed=11):
    dens = RelaxedDensity(DensityParams(b=b, p=p), eps, mode="mollified",
                          kernel=mollifier.MollifierSpec(eps=eps))
    rng = np.random.default_rng(seed)
    r = eps * np.exp(rng.uniform(np.log(1e-3), np.log(20.0), points))
    th = rng.uniform(0.0, 2.0 * np.pi, points)
    z = r[:, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)
    g = dens.grad(z)
    ref = np.array([mollified_gradient_oracle(zi, eps, b, p) for zi in z])
    return float(np.max(np.abs(g - ref)))


def calculus():
    t0 = time.perf_counter()
    r_err = fd_residual_error()
    h_err = fd_hessian_error()
    lmin = min_hessian_eigenvalue()
    m_err = mollified_gradient_error()
    return _result("6", "calculus consistency", t0, [
        ("residual vs FD of energy (17x17, rel)", r_err, "<= 1e-5", r_err <= 1e-5),
        ("Hessian vs FD of residual (17x17, rel)", h_err, "<= 1e-5", h_err <= 1e-5),
        ("smallest Hessian eigenvalue (9 nodes)", lmin, "> 0", lmin > 0.0),
        ("mollified gradient vs quadrature oracle (100 points)", m_err, "<= 1e-6", m_err <= 1e-6),
    ])


CRITERIA = {"1": plug1d, "2": pipe2d, "3": continuation, "4": holder, "5": battery, "6": calculus}


def run(keys=None):
    return [CRITERIA[k]() for k in (keys or CRITERIA)]
