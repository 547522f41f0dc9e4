"""Seeded randomized verification of density and truncation inequalities.

Every suite is either *asserting* (a closed-form constant is checked and any
violation is reported with its worst witness) or *fitting* (the constant is
not constructive; it is estimated from the sample at n and 2n draws and
required to be finite and stable within 20%).  A sample is a violation when
lhs > rhs + tol_abs + tol_rel * |rhs|.

Suite ``i`` draws from ``np.random.default_rng([seed, i])`` so every suite is
reproducible on its own and independent of scheduling.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import mollifier
from .density import DensityParams, ExactDensity, RelaxedDensity, ellipticity_bounds
from .errors import UsageError
from .truncation import lipschitz_constant

ASSERTING = ("euler_identity", "homogeneity", "truncation_lipschitz", "relaxed_hessian_bounds",
             "growth_p_lt_2")
FITTING = ("monotonicity_p_ge_2", "monotonicity_p_lt_2", "hessian_error_outside", "h_sigma_bound",
           "g_p_eps_monotone")
SUITES = ASSERTING + FITTING

STABILITY = 0.2
H_SIGMA_CAP = 20000
SIGMAS = (-1.0, -0.5, 0.0, 1.0, 2.0)


@dataclass(frozen=True)
class SuiteSpec:
    suite: str
    samples: int = 100000
    seed: int = 0
    tol_abs: float = 1e-9
    tol_rel: float = 1e-12
    b_range: tuple = (0.1, 10.0)
    p: float = None                 # fixed exponent for fitting suites (suite default if None)
    delta: float = 0.1
    radius_range: tuple = (1e-6, 1e3)

    def __post_init__(self):
        if self.suite not in SUITES:
            raise UsageError(f"unknown suite {self.suite!r}; expected one of {', '.join(SUITES)}")
        if self.samples < 1:
            raise UsageError("samples must be positive")

    @property
    def index(self):
        return SUITES.index(self.suite)

    @property
    def kind(self):
        return "assert" if self.suite in ASSERTING else "fit"


@dataclass
class SuiteReport:
    suite: str
    kind: str
    samples: int
    violations: int = 0
    witness: dict = None
    fitted: dict = field(default_factory=dict)
    fitted_double: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def stable(self):
        for k, a in self.fitted.items():
            b = self.fitted_double.get(k)
            if b is None or not (np.isfinite(a) and np.isfinite(b)) or a == 0.0:
                return False
            if abs(b / a - 1.0) > STABILITY:
                return False
        return True

    @property
    def passed(self):
        if self.kind == "assert":
            return self.violations == 0
        return self.violations == 0 and self.stable

    def to_text(self):
        lines = [f"[{self.suite}] kind={self.kind} samples={self.samples} "
                 f"violations={self.violations} {'PASS' if self.passed else 'FAIL'}"]
        for k, v in self.checks.items():
            lines.append(f"  {k}: {v}")
        for k, v in self.fitted.items():
            lines.append(f"  fitted {k}: n={v:.6g} 2n={self.fitted_double.get(k, float('nan')):.6g}")
        if self.witness:
            lines.append("  worst witness: " + ", ".join(f"{k}={_short(v)}" for k, v in self.witness.items()))
        lines.extend("  note: " + n for n in self.notes)
        return "\n".join(lines)


def _short(v):
    a = np.asarray(v)
    if a.ndim == 0:
        return f"{float(a):.17g}"
    return "[" + ", ".join(f"{x:.17g}" for x in a.ravel()) + "]"


# -- sampling ------------------------------------------------------------------

def _loguniform(rng, lo, hi, m):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), m))


def _vectors(rng, m, lo=1e-6, hi=1e3):
    r = _loguniform(rng, lo, hi, m)
    th = rng.uniform(0.0, 2.0 * np.pi, m)
    return r[:, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)


def _pairs(rng, m, lo=1e-6, hi=1e3):
    """Mix of independent pairs and nearby pairs (z2 a small perturbation of z1)."""
    z1 = _vectors(rng, m, lo, hi)
    z2 = _vectors(rng, m, lo, hi)
    near = rng.random(m) < 0.5
    rel = _loguniform(rng, 1e-6, 1.0, m)
    z2[near] = z1[near] + rel[near, None] * np.linalg.norm(z1[near], axis=-1)[:, None] * \
        _vectors(rng, int(near.sum()), 1.0, 1.0)
    return z1, z2


def _norm(z):
    return np.linalg.norm(z, axis=-1)


def _record(report, lhs, rhs, spec, inputs, tol_abs=None, tol_rel=None):
    tol_abs = spec.tol_abs if tol_abs is None else tol_abs
    tol_rel = spec.tol_rel if tol_rel is None else tol_rel
    excess = lhs - rhs - tol_abs - tol_rel * np.abs(rhs)
    bad = excess > 0.0
    n = int(np.sum(bad)) + int(np.sum(~np.isfinite(excess)))
    report.violations += n
    if n:
        i = int(np.nanargmax(np.where(np.isfinite(excess), excess, np.inf)))
        w = {k: v[i] for k, v in inputs.items()}
        w.update(lhs=lhs[i], rhs=rhs[i])
        if report.witness is None or excess[i] > report.witness.get("_excess", -np.inf):
            w["_excess"] = excess[i]
            report.witness = w
    return n


def _random_spd(rng):
    ev = rng.uniform(0.5, 2.0, 2)
    th = rng.uniform(0.0, np.pi)
    Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return Q @ np.diag(ev) @ Q.T


# -- asserting suites ------------------------------------------------------------

def _euler_identity(spec, rng, report):
    m = spec.samples
    b = _loguniform(rng, *spec.b_range, m)
    z = _vectors(rng, m, *spec.radius_range)
    w = _vectors(rng, m, *spec.radius_range)
    tol = dict(tol_abs=0.0, tol_rel=1e-12)
    instances = [("isotropic", None), ("anisotropic", _random_spd(rng))]
    for name, A in instances:
        # b enters linearly, so evaluate at b = 1 and scale
        ex = ExactDensity(DensityParams(b=1.0, p=2.0), A)
        e1 = b * ex.e1(z)
        g = b[:, None] * ex.grad_e1(z)
        inner = np.einsum("ij,ij->i", z, g)
        # Euler: <z | grad E1(z)> = E1(z), two-sided
        n1 = _record(report, np.abs(inner - e1), 1e-12 * np.abs(e1), spec, {"z": z, "b": b},
                     tol_abs=0.0, tol_rel=0.0)
        # Cauchy-Schwarz pairing <z | w> <= E1(z) * support(w)
        sup = ex.support_gauge(w) / b
        n2 = _record(report, np.einsum("ij,ij->i", z, w), e1 * sup, spec, {"z": z, "w": w, "b": b}, **tol)
        # subgradient at the origin: Ẽ1(w) <= 1  implies  <w | z> <= E1(z)
        wn = w / np.maximum(sup, 1e-300)[:, None] * rng.random(m)[:, None]
        n3 = _record(report, np.einsum("ij,ij->i", z, wn), e1, spec, {"z": z, "w": wn, "b": b}, **tol)
        report.checks[f"{name}: euler / cauchy_schwarz / subgradient violations"] = f"{n1} / {n2} / {n3}"


def _homogeneity(spec, rng, report):
    m = spec.samples
    b = _loguniform(rng, *spec.b_range, m)
    z = _vectors(rng, m, *spec.radius_range)
    ex = ExactDensity(DensityParams(b=1.0, p=2.0))
    g = b[:, None] * ex.grad_e1(z)
    H = b[:, None, None] * ex.hess_e1(z)
    for lam in (0.1, 1.0, 10.0):
        gl = b[:, None] * ex.grad_e1(lam * z)
        Hl = b[:, None, None] * ex.hess_e1(lam * z)
        dg = _norm(gl - g)
        dH = np.linalg.norm(Hl - H / lam, axis=(1, 2), ord=2)
        n1 = _record(report, dg, 1e-12 * _norm(g), spec, {"z": z, "b": b}, tol_abs=0.0, tol_rel=0.0)
        n2 = _record(report, dH, 1e-12 * np.linalg.norm(H / lam, axis=(1, 2), ord=2), spec,
                     {"z": z, "b": b}, tol_abs=0.0, tol_rel=0.0)
        report.checks[f"lambda={lam:g}: gradient / hessian violations"] = f"{n1} / {n2}"


def _truncation_lipschitz(spec, rng, report):
    m = spec.samples
    cases = [("h=1/8 (c=1+64/sqrt(255))", 0.125, 1.0 + 64.0 / np.sqrt(255.0)),
             ("h=1/10", 0.1, lipschitz_constant(0.1)),
             ("h random in (0,2)", None, None)]
    for name, h, c in cases:
        delta = _loguniform(rng, 1e-3, 0.99, m)
        hh = np.full(m, h) if h is not None else rng.uniform(1e-3, 1.999, m)
        eps = rng.uniform(0.0, 1.0, m) * hh * delta
        cc = np.full(m, c) if c is not None else 1.0 + 8.0 / np.sqrt(4.0 - hh * hh)
        # one third generic pairs, two thirds at the scale of the dead zone 2 delta
        z1, z2 = _pairs(rng, m, *spec.radius_range)
        k = m // 3
        s = (2.0 * delta[k:])[:, None]
        z1[k:] = s * _vectors(rng, m - k, 0.5, 2.0)
        z2[k:] = np.where(rng.random(m - k)[:, None] < 0.5,
                          s * _vectors(rng, m - k, 0.5, 2.0),
                          z1[k:] + s * _vectors(rng, m - k, 1e-6, 0.5))
        G1 = truncate_relaxed_batch(z1, 2.0 * delta, eps)
        G2 = truncate_relaxed_batch(z2, 2.0 * delta, eps)
        lhs = _norm(G1 - G2)
        rhs = cc * _norm(z1 - z2)
        n = _record(report, lhs, rhs, spec, {"z1": z1, "z2": z2, "delta": delta, "eps": eps, "c": cc})
        report.checks[f"{name}: violations, max ratio"] = f"{n}, {float(np.max(lhs / np.maximum(rhs, 1e-300))):.6g}"


def truncate_relaxed_batch(z, delta, eps):
    """G_{delta,eps} with per-sample delta and eps."""
    nz = _norm(z)
    v = np.hypot(eps, nz)
    safe = np.where(nz < 1e-300, 1.0, nz)
    return np.where((nz < 1e-300)[:, None], 0.0, (np.maximum(v - delta, 0.0) / safe)[:, None] * z)


def _relaxed_hessian_bounds(spec, rng, report):
    m = spec.samples
    b = np.where(rng.random(m) < 0.1, 0.0, _loguniform(rng, *spec.b_range, m))
    p = rng.uniform(1.05, 6.0, m)
    eps = _loguniform(rng, 1e-6, 0.999, m)
    z = _vectors(rng, m, *spec.radius_range)
    s = eps**2 + np.sum(z**2, axis=-1)
    a = b / np.sqrt(s) + s ** (p / 2.0 - 1.0)
    c = -b * s**-1.5 + (p - 2.0) * s ** (p / 2.0 - 2.0)
    # vectorised closed form here; the library evaluation is spot-checked below
    H = a[:, None, None] * np.eye(2) + c[:, None, None] * z[:, :, None] * z[:, None, :]
    ev = np.linalg.eigvalsh(H)
    lam = np.minimum(1.0, p - 1.0)
    Lam = np.maximum(1.0, p - 1.0)
    lower = lam * s ** (p / 2.0 - 1.0)
    upper = Lam * s ** (p / 2.0 - 1.0) + b / np.sqrt(s)
    inputs = {"z": z, "b": b, "p": p, "eps": eps}
    n1 = _record(report, lower, ev[:, 0], spec, inputs, tol_abs=spec.tol_abs, tol_rel=1e-12)
    n2 = _record(report, ev[:, 1], upper, spec, inputs, tol_abs=spec.tol_abs, tol_rel=1e-12)
    # spot check that the library evaluation agrees with the expression above
    k = min(m, 2000)
    n3 = 0
    for i in range(k):
        pr = DensityParams(b=float(b[i]), p=float(p[i]))
        Hi = RelaxedDensity(pr, float(eps[i])).hess(z[i])
        lo, hi = ellipticity_bounds(pr, float(eps[i]), z[i])
        e = np.linalg.eigvalsh(Hi)
        n3 += int(e[0] < lo - spec.tol_abs - 1e-12 * hi) + int(e[1] > hi + spec.tol_abs + 1e-12 * hi)
    report.violations += n3
    report.checks["lower / upper / library spot-check violations"] = f"{n1} / {n2} / {n3}"


def _growth_p_lt_2(spec, rng, report):
    m = spec.samples
    p = rng.uniform(1.05, 1.999, m)
    eps = np.where(rng.random(m) < 0.1, 0.0, _loguniform(rng, 1e-6, 0.999, m))
    z1, z2 = _pairs(rng, m, *spec.radius_range)
    anti = rng.random(m) < 0.2
    z2[anti] = -z1[anti] * _loguniform(rng, 0.1, 10.0, int(anti.sum()))[:, None]
    g1 = _gp(z1, p, eps)
    g2 = _gp(z2, p, eps)
    d = _norm(z1 - z2)
    lhs = _norm(g1 - g2)
    C = 2.0 ** (2.0 - p) / (p - 1.0)
    rhs = C * d ** (p - 1.0)
    n = _record(report, lhs, rhs, spec, {"z1": z1, "z2": z2, "p": p, "eps": eps}, tol_rel=1e-10)
    report.checks["holder form C = 2^(2-p)/(p-1): violations, max lhs/rhs"] = \
        f"{n}, {float(np.max(lhs / np.maximum(rhs, 1e-300))):.6g}"
    # min-form |dG| <= C min{|z1|^(p-2), |z2|^(p-2)} |z1 - z2|: report only
    mn = np.minimum(_norm(z1), _norm(z2))
    mx = np.maximum(_norm(z1), _norm(z2))
    ratio_min_form = lhs / (np.minimum(mn ** (p - 2.0), mx ** (p - 2.0)) * d)
    min_form_c = 2.0 ** (-p)
    report.checks["min form: samples above the constant 2^(-p) L (L = 1)"] = \
        int(np.sum(ratio_min_form > min_form_c * (1 + 1e-12)))
    report.checks["min form: observed max of |dG| / (min |z|^(p-2) |dz|)"] = \
        f"{float(np.max(ratio_min_form)):.6g}"
    report.notes.append("the min-form constant 2^(-p) L fails already at z1 = z2 (ratio -> 1); "
                        "the Hoelder form with 2^(2-p)/(p-1) is asserted instead")


def _gp(z, p, eps):
    """grad E_{p,eps}(z) = (eps^2 + |z|^2)^(p/2 - 1) z, per-sample p and eps."""
    s = eps**2 + np.sum(z**2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(s > 0.0, s ** (p / 2.0 - 1.0), 0.0)
    return fac[:, None] * z


# -- fitting suites --------------------------------------------------------------

def _fit_twice(spec, rng, report, draw, m_cap=None):
    """Run ``draw(rng, m) -> (dict of per-sample ratios, violations)`` at n and 2n (superset)."""
    n = spec.samples if m_cap is None else min(spec.samples, m_cap)
    if m_cap is not None and spec.samples > m_cap:
        report.notes.append(f"sample count capped at {m_cap} (and {2 * m_cap}) for runtime")
    first, v1 = draw(rng, n)
    second, v2 = draw(rng, n)
    report.violations += v1 + v2
    report.samples = 2 * n
    for k, (agg, vals) in first.items():
        report.fitted[k] = float(agg(vals))
        report.fitted_double[k] = float(agg(np.concatenate([vals, second[k][1]])))


def _monotonicity_p_ge_2(spec, rng, report):
    p = spec.p if spec.p is not None else 3.0
    lam = min(1.0, p - 1.0)

    def draw(rng, m):
        eps = _loguniform(rng, 1e-6, 0.999, m)
        z1, z2 = _pairs(rng, m, *spec.radius_range)
        lhs = np.einsum("ij,ij->i", _gp(z1, p, eps) - _gp(z2, p, eps), z1 - z2)
        d2 = np.sum((z1 - z2) ** 2, axis=-1)
        mx = np.maximum(np.sum(z1**2, -1), np.sum(z2**2, -1))
        max_form = lhs / (mx ** (p / 2.0 - 1.0) * d2)
        power_form = lhs / ((eps**2 + mx) ** (p / 2.0 - 1.0) * d2)
        neg = int(np.sum(lhs < -spec.tol_abs))
        return {"C_max_form": (np.min, max_form), "C_power_form": (np.min, power_form)}, neg

    _fit_twice(spec, rng, report, draw)
    ref = 2.0 ** (-p) * lam
    report.checks["p"] = p
    report.checks["reference constant 2^(-p) lambda"] = f"{ref:.6g}"
    report.checks["fitted constants above reference"] = all(v >= ref for v in report.fitted.values())


def _monotonicity_p_lt_2(spec, rng, report):
    p = spec.p if spec.p is not None else 1.5

    def draw(rng, m):
        eps = _loguniform(rng, 1e-6, 0.999, m)
        z1, z2 = _pairs(rng, m, *spec.radius_range)
        lhs = np.einsum("ij,ij->i", _gp(z1, p, eps) - _gp(z2, p, eps), z1 - z2)
        d2 = np.sum((z1 - z2) ** 2, axis=-1)
        w = eps**2 + np.sum(z1**2, -1) + np.sum(z2**2, -1)
        neg = int(np.sum(lhs < -spec.tol_abs))
        return {"lambda_hat": (np.min, lhs / (w ** (p / 2.0 - 1.0) * d2))}, neg

    _fit_twice(spec, rng, report, draw)
    report.checks["p"] = p


def _hessian_error_outside(spec, rng, report):
    p = spec.p if spec.p is not None else 3.0
    delta = spec.delta
    beta0 = 1.0
    params = DensityParams(b=1.0, p=p)

    def draw(rng, m):
        eps = _loguniform(rng, 1e-6, delta / 8.0 * 0.999, m)
        mu = _loguniform(rng, delta * 1.0001, 10.0, m)
        r1 = rng.uniform(delta + mu / 4.0, delta + mu)
        th1 = rng.uniform(0.0, 2.0 * np.pi, m)
        z1 = r1[:, None] * np.stack([np.cos(th1), np.sin(th1)], -1)
        # log-uniform radii reach the neighbourhood of the kink at 0, where the supremum sits
        r2 = (delta + mu) * _loguniform(rng, 1e-6, 1.0, m)
        th2 = rng.uniform(0.0, 2.0 * np.pi, m)
        z2 = r2[:, None] * np.stack([np.cos(th2), np.sin(th2)], -1)
        near = rng.random(m) < 0.5
        z2[near] = z1[near] + (mu[near] * _loguniform(rng, 1e-4, 0.25, int(near.sum())))[:, None] * \
            _vectors(rng, int(near.sum()), 1.0, 1.0)
        out = _norm(z2) > delta + mu
        z2[out] *= ((delta + mu[out]) / _norm(z2[out]))[:, None]
        # closed-form expressions, vectorised over eps
        H1 = _hess_closed(z1, 1.0, p, eps)
        lhs = _norm(np.einsum("ijk,ik->ij", H1, z2 - z1)
                    - (_grad_closed(z2, 1.0, p, eps) - _grad_closed(z1, 1.0, p, eps)))
        ratio = lhs / (mu ** (p - 2.0 - beta0) * _norm(z1 - z2) ** (1.0 + beta0))
        return {"C": (np.max, ratio)}, 0

    _fit_twice(spec, rng, report, draw)
    report.checks["p, delta, beta0"] = f"{p}, {delta}, {beta0}"
    report.notes.append(f"density b|z| + |z|^p/p relaxed in closed form, K = {params.K}")


def _grad_closed(z, b, p, eps):
    s = eps**2 + np.sum(z**2, axis=-1)
    return (b / np.sqrt(s) + s ** (p / 2.0 - 1.0))[:, None] * z


def _hess_closed(z, b, p, eps):
    s = eps**2 + np.sum(z**2, axis=-1)
    a = b / np.sqrt(s) + s ** (p / 2.0 - 1.0)
    c = -b * s**-1.5 + (p - 2.0) * s ** (p / 2.0 - 2.0)
    return a[:, None, None] * np.eye(2) + c[:, None, None] * z[:, :, None] * z[:, None, :]


def _h_sigma_bound(spec, rng, report):
    kernel = mollifier.MollifierSpec(eps=0.5)

    def draw(rng, m):
        out = {}
        for sigma in SIGMAS:
            eps = _loguniform(rng, 1e-6, 0.999, m)
            z = _vectors(rng, m, *spec.radius_range)
            # h_{sigma,eps}(z) = eps^sigma h_{sigma,1}(z/eps): evaluate at a fixed kernel width
            w = z / eps[:, None] * kernel.eps
            h = radial_scaled(kernel, sigma, w) * (eps / kernel.eps) ** sigma
            ratio = h / (eps**2 + np.sum(z**2, -1)) ** (sigma / 2.0)
            out[f"C(sigma={sigma:g})"] = (np.max, ratio)
        return out, 0

    _fit_twice(spec, rng, report, draw, m_cap=H_SIGMA_CAP)
    report.notes.append("h_{sigma,eps} evaluated through the scaling h_{sigma,eps}(z) = eps^sigma h_{sigma,1}(z/eps)")


def radial_scaled(kernel, sigma, w):
    return mollifier.radial_power_convolution(kernel, sigma, w)


def _g_p_eps_monotone(spec, rng, report):
    p = spec.p if spec.p is not None else 3.0

    def draw(rng, m):
        eps = _loguniform(rng, 1e-6, 0.999, m)
        z1, z2 = _pairs(rng, m, *spec.radius_range)
        d = z1 - z2
        lhs = np.einsum("ij,ij->i", map_gp_eps_batch(z1, p, eps) - map_gp_eps_batch(z2, p, eps), d)
        neg = int(np.sum(lhs < -spec.tol_abs))
        return {"c(p)": (np.min, lhs / _norm(d) ** (p + 1.0))}, neg

    _fit_twice(spec, rng, report, draw)
    report.checks["p"] = p


def map_gp_eps_batch(z, p, eps):
    s = eps**2 + np.sum(z**2, axis=-1)
    return (s ** ((p - 1.0) / 2.0))[:, None] * z


_RUNNERS = {
    "euler_identity": _euler_identity,
    "homogeneity": _homogeneity,
    "truncation_lipschitz": _truncation_lipschitz,
    "relaxed_hessian_bounds": _relaxed_hessian_bounds,
    "growth_p_lt_2": _growth_p_lt_2,
    "monotonicity_p_ge_2": _monotonicity_p_ge_2,
    "monotonicity_p_lt_2": _monotonicity_p_lt_2,
    "hessian_error_outside": _hessian_error_outside,
    "h_sigma_bound": _h_sigma_bound,
    "g_p_eps_monotone": _g_p_eps_monotone,
}


def run_suite(spec):
    """Run one suite and return its report."""
    if isinstance(spec, str):
        spec = SuiteSpec(spec)
    rng = np.random.default_rng([spec.seed, spec.index])
    report = SuiteReport(spec.suite, spec.kind, spec.samples)
    with np.errstate(over="ignore", under="ignore"):
        _RUNNERS[spec.suite](spec, rng, report)
    if report.witness is not None:
        report.witness.pop("_excess", None)
    return report


def thread_count(requested=None):
    env = os.environ.get("FACETFLOW_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise UsageError(f"FACETFLOW_THREADS must be an integer, got {env!r}")
    return cap if requested is None else max(1, min(cap, int(requested)))


def run_battery(seed=0, samples=100000, suites=None, threads=None, **overrides):
    """Run several suites concurrently; reports come back in suite order."""
    names = SUITES if suites is None else tuple(suites)
    specs = [SuiteSpec(n, samples=samples, seed=seed, **overrides) for n in names]
    workers = min(thread_count(threads), len(specs))
    if workers <= 1:
        return [run_suite(s) for s in specs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_suite, specs))
