"""Benchmark problems and their semi-analytic reference solutions."""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .density import DensityParams
from .discretize import Grid, ProblemSpec
from .errors import ConfigError, DomainError, OracleError

BUILTINS = ("plug1d", "pipe2d", "spohn2d")


def _quad(func, a, b, **kw):
    # tolerances sit at the round-off level on purpose; quad's warning about that is noise here
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(func, a, b, **kw)


def flux_inverse(s, b, p):
    """Psi^{-1}(s) = sign(s) (|s| - b)_+^(1/(p-1)), the inverse of Psi(t) = b sign(t) + |t|^(p-2) t."""
    s = np.asarray(s, dtype=float)
    return np.sign(s) * np.maximum(np.abs(s) - b, 0.0) ** (1.0 / (p - 1.0))


@dataclass(frozen=True, eq=False)
class OracleSolution1D:
    b: float
    p: float
    interval: tuple
    ua: float
    c: float
    facet: tuple          # (a_minus, a_plus), or None when the flux never enters [-b, b]
    _F: object

    def sigma(self, x):
        return self.c - self._F(np.asarray(x, dtype=float))

    def derivative(self, x):
        return flux_inverse(self.sigma(x), self.b, self.p)

    def value(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        a = self.interval[0]
        pts = [q for q in (self.facet or ()) if a < q]
        out = np.empty_like(x)
        for i, xi in enumerate(x):
            brk = [q for q in pts if q < xi]
            v, _ = _quad(lambda t: float(self.derivative(t)), a, xi, points=brk or None,
                                  epsabs=1e-14, epsrel=1e-13, limit=200)
            out[i] = self.ua + v
        return out

    def __call__(self, x):
        return self.value(x), self.derivative(x)

    @property
    def facet_length(self):
        return 0.0 if self.facet is None else self.facet[1] - self.facet[0]


def _primitive(f, a):
    """x -> int_a^x f."""
    if callable(f):
        return np.vectorize(lambda x: _quad(f, a, x, epsabs=1e-14, epsrel=1e-13, limit=200)[0])
    c = float(f)
    return lambda x: c * (np.asarray(x, dtype=float) - a)


def oracle_1d(b, p, f, interval=(-1.0, 1.0), boundary=(0.0, 0.0), tol=1e-12):
    """Weak solution of -(b sign(u') + |u'|^(p-2) u')' = f on an interval.

    The flux sigma = c - int f is fixed by bisection on c so that
    int Psi^{-1}(sigma) matches the boundary increment.
    """
    if b < 0.0 or not p > 1.0:
        raise DomainError("need b >= 0 and p > 1")
    a, bb = (float(v) for v in interval)
    ua, ub = (float(v) for v in boundary)
    F = _primitive(f, a)
    xs = np.linspace(a, bb, 2049)
    Fx = F(xs)

    def increment(c):
        s = c - Fx
        # Psi^{-1}(sigma) has a root-type kink where |sigma| = b; locate each one exactly
        kinks = []
        for lvl in (b, -b):
            d = s - lvl
            for i in np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]:
                kinks.append(optimize.brentq(lambda x: c - F(x) - lvl, xs[i], xs[i + 1], xtol=1e-15))
        edges = [a] + sorted(kinks) + [bb]
        v = 0.0
        for lo, hi in zip(edges, edges[1:]):
            v += _quad(lambda t: float(flux_inverse(c - F(t), b, p)), lo, hi,
                                epsabs=1e-14, epsrel=1e-13, limit=400)[0]
        return v - (ub - ua)

    span = float(np.max(np.abs(Fx))) + b + abs(ub - ua) ** (p - 1.0) / (bb - a) ** (p - 1.0) + 1.0
    lo, hi = -span, span
    for _ in range(60):
        if increment(lo) <= 0.0 <= increment(hi):
            break
        lo, hi = 2.0 * lo, 2.0 * hi
    else:
        raise OracleError("could not bracket the flux constant")
    flo = increment(lo)
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        fm = increment(mid)
        if fm == 0.0:
            lo = hi = mid
            break
        if (fm < 0.0) == (flo < 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    facet = _facet(lambda x: c - F(x), xs, c - Fx, b)
    return OracleSolution1D(b, p, (a, bb), ua, c, facet, F)


def _facet(sigma, xs, s, b):
    inside = np.abs(s) <= b
    if b == 0.0 or not np.any(inside):
        # without a dead zone the facet is (at most) the critical set
        return None
    idx = np.nonzero(inside)[0]
    i0, i1 = idx[0], idx[-1]

    def edge(i_out, i_in):
        lvl = b if abs(s[i_out] - b) < abs(s[i_out] + b) else -b
        return optimize.brentq(lambda x: sigma(x) - lvl, xs[i_out], xs[i_in], xtol=1e-15)

    left = xs[0] if i0 == 0 else edge(i0 - 1, i0)
    right = xs[-1] if i1 == len(xs) - 1 else edge(i1 + 1, i1)
    return (float(left), float(right))


@dataclass(frozen=True)
class OracleRadial:
    """Laminar Bingham flow in a pipe of radius R_eff."""

    R_eff: float
    G: float
    gamma: float
    mu: float

    def __post_init__(self):
        if min(self.R_eff, self.G, self.mu) <= 0.0 or self.gamma < 0.0:
            raise DomainError("R_eff, G, mu must be positive and gamma nonnegative")
        if self.r0 >= self.R_eff:
            raise OracleError(f"plug radius {self.r0:g} >= R_eff {self.R_eff:g}: the flow is fully rigid")

    @property
    def r0(self):
        return 2.0 * self.gamma / self.G

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        rr = np.maximum(r, self.r0)
        return (self.G / (4.0 * self.mu)) * (self.R_eff**2 - rr**2) - (self.gamma / self.mu) * (self.R_eff - rr)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.r0, 0.0, -(self.G * r / 2.0 - self.gamma) / self.mu)

    def __call__(self, r):
        return self.profile(r)

    @property
    def plug_value(self):
        return float(self.profile(0.0))

    def gradient(self, xy):
        xy = np.asarray(xy, dtype=float)
        r = np.linalg.norm(xy, axis=-1)
        safe = np.where(r > 0.0, r, 1.0)
        return (self.derivative(r) / safe)[..., None] * xy


def oracle_bingham_pipe(R_eff, G, gamma, mu):
    return OracleRadial(float(R_eff), float(G), float(gamma), float(mu))


PIPE = dict(R_eff=np.sqrt(2.0), G=4.0, gamma=1.0, mu=1.0)


def builtin_problem(name, resolution=None):
    """ProblemSpec of a named benchmark; ``resolution`` overrides the node count(s)."""
    if name == "plug1d":
        n = _res(resolution, 1, (513,))
        grid = Grid.interval(-1.0, 1.0, n[0])
        return ProblemSpec(grid, DensityParams(b=1.0, p=2.0), 0.0, 2.0, q=np.inf, name=name)
    if name == "pipe2d":
        n = _res(resolution, 2, (129, 129))
        grid = Grid.rectangle((-1.0, 1.0), (-1.0, 1.0), *n)
        orc = oracle_bingham_pipe(**PIPE)
        g = orc(np.linalg.norm(grid.coords, axis=-1))
        return ProblemSpec(grid, DensityParams(b=1.0, p=2.0), g, PIPE["G"], q=np.inf, name=name)
    if name == "spohn2d":
        n = _res(resolution, 2, (65, 65))
        grid = Grid.rectangle((-1.0, 1.0), (-1.0, 1.0), *n)
        kappa = 1.0
        r2 = np.sum(grid.coords**2, axis=-1)
        f = 8.0 * np.exp(-8.0 * r2)
        return ProblemSpec(grid, DensityParams(b=1.0 / (3.0 * kappa), p=3.0), 0.0, f, q=np.inf, name=name)
    raise ConfigError(f"unknown builtin problem {name!r} (expected one of {', '.join(BUILTINS)})",
                      field="problem")


def _res(resolution, dim, default):
    if resolution is None:
        return default
    res = tuple(int(v) for v in np.atleast_1d(resolution))
    if len(res) == 1 and dim == 2:
        res = res * 2
    if len(res) != dim or min(res) < 2:
        raise ConfigError(f"grid resolution {resolution!r} does not fit a {dim}D problem", field="grid")
    return res


def reference_solution(spec):
    """Nodal reference values for a builtin benchmark, or None."""
    if spec.name == "plug1d":
        orc = oracle_1d(spec.params.b, spec.params.p, 2.0)
        return orc.value(spec.grid.coords[:, 0])
    if spec.name == "pipe2d":
        return oracle_bingham_pipe(**PIPE)(np.linalg.norm(spec.grid.coords, axis=-1))
    return None
