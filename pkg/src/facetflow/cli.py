"""Command-line front end: ``facetflow {solve,verify,diagnose,export,bench}``."""
import argparse
import ast
import json
import logging
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import bench, diagnostics as dg, propcheck
from .density import DensityParams
from .discretize import Grid, ProblemSpec, _cell_gradients
from .errors import ConfigError, DomainError, FacetflowError, LinearSolverError, NonConvergenceError, UsageError
from .problems import BUILTINS, builtin_problem, reference_solution
from .solver import CGConfig, ContinuationSchedule, SolverConfig, continuation_solve
from .truncation import truncate_relaxed, v_eps

log = logging.getLogger("facetflow")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONV, EXIT_VIOLATION = 0, 1, 2, 3, 4
FORMATS = ("csv", "vtk")

# default continuation schedules of the builtin problems
DEFAULT_SCHEDULES = {
    "plug1d": dict(delta=1e-3, eps0=0.1, factor=10.0 ** (-1.0 / 3.0), steps=10),
    "pipe2d": dict(delta=1e-2, eps0=0.1, factor=10.0 ** (-1.0 / 3.0), steps=7),
    "spohn2d": dict(delta=0.05, eps0=0.1, factor=0.5, steps=6),
    "custom": dict(delta=0.05, eps0=0.1, factor=0.5, steps=6),
}


# -- closed-form expressions for f and g ----------------------------------------------

_FUNCS = {name: getattr(np, name) for name in
          ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh", "cosh", "arctan", "arctan2",
           "minimum", "maximum", "where", "sign", "hypot")}
_CONSTS = {"pi": np.pi, "e": np.e}
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
            ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
            ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE)


def evaluate_expression(expr, coords, field="expression"):
    """Evaluate a closed-form expression in x (and y) at the grid nodes."""
    if isinstance(expr, (int, float)):
        return np.full(coords.shape[0], float(expr))
    if not isinstance(expr, str):
        raise ConfigError("must be a number or an expression string", field=field)
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse {expr!r}: {exc.msg}", field=field)
    names = dict(_FUNCS, **_CONSTS, x=coords[:, 0], r=np.linalg.norm(coords, axis=-1))
    if coords.shape[1] > 1:
        names["y"] = coords[:, 1]
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ConfigError(f"unsupported syntax {type(node).__name__} in {expr!r}", field=field)
        if isinstance(node, ast.Name) and node.id not in names:
            raise ConfigError(f"unknown name {node.id!r} in {expr!r}", field=field)
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"only the functions {sorted(_FUNCS)} may be called", field=field)
    with np.errstate(all="ignore"):
        val = eval(compile(tree, "<expr>", "eval"), {"__builtins__": {}}, names)
    val = np.broadcast_to(np.asarray(val, dtype=float), (coords.shape[0],)).copy()
    if not np.all(np.isfinite(val)):
        raise ConfigError(f"{expr!r} is not finite at every node", field=field)
    return val


# -- configuration ----------------------------------------------------------------

def _parse_grid(text):
    try:
        return tuple(int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise ConfigError(f"cannot parse {text!r}; use e.g. 513 or 129x129", field="grid")


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", field="config")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc.msg} (line {exc.lineno})", field="config")
    if not isinstance(cfg, dict):
        raise ConfigError("top level must be a JSON object", field="config")
    return cfg


def _get(section, key, kind, field, default=None):
    v = section.get(key, default)
    if v is None:
        return None
    try:
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {kind.__name__}, got {v!r}", field=field)


def build_run(args):
    """Merge config file and flags; validate everything before any compute."""
    cfg = _load_config(getattr(args, "config", None))
    problem = args.problem if getattr(args, "problem", None) else cfg.get("problem", "plug1d")
    density = cfg.get("density", {})
    grid_cfg = cfg.get("grid", {})
    resolution = grid_cfg.get("resolution")
    if getattr(args, "grid", None):
        resolution = _parse_grid(args.grid)

    if isinstance(problem, dict):
        spec = _custom_problem(problem, density, resolution)
    elif isinstance(problem, str):
        if problem not in BUILTINS:
            raise ConfigError(f"unknown builtin problem {problem!r} (expected one of {', '.join(BUILTINS)})",
                              field="problem")
        spec = builtin_problem(problem, resolution)
        if density:
            b = _get(density, "b", float, "density.b", spec.params.b)
            p = _get(density, "p", float, "density.p", spec.params.p)
            try:
                spec = spec.with_params(DensityParams(b=b, p=p))
            except DomainError as exc:
                raise ConfigError(str(exc), field="density")
    else:
        raise ConfigError("must be a builtin name or an object", field="problem")

    sch_cfg = cfg.get("schedule", {})
    base = dict(DEFAULT_SCHEDULES.get(spec.name, DEFAULT_SCHEDULES["custom"]))
    delta = _get(sch_cfg, "delta", float, "schedule.delta", base["delta"])
    if args.delta is not None:
        delta = args.delta
    eps_list = sch_cfg.get("eps")
    eps0 = _get(sch_cfg, "eps0", float, "schedule.eps0", base["eps0"])
    factor = _get(sch_cfg, "factor", float, "schedule.factor", base["factor"])
    steps = _get(sch_cfg, "steps", int, "schedule.steps", base["steps"])
    if any(v is not None for v in (args.eps0, args.eps_factor, args.eps_steps)):
        eps_list = None
    eps0 = args.eps0 if args.eps0 is not None else eps0
    factor = args.eps_factor if args.eps_factor is not None else factor
    steps = args.eps_steps if args.eps_steps is not None else steps
    try:
        if eps_list is not None:
            schedule = ContinuationSchedule(delta, tuple(float(e) for e in eps_list))
        else:
            schedule = ContinuationSchedule.geometric(delta, eps0, factor, steps)
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field="schedule")

    solver = _solver_config(cfg.get("solver", {}))
    diag = _diag_config(cfg.get("diagnostics", {}), schedule.delta, spec.q)
    if not schedule.eps_list[-1] < schedule.delta / 8.0:
        raise ConfigError(f"final eps {schedule.eps_list[-1]:g} must be below delta/8 = {schedule.delta / 8:g} "
                          "for the diagnostics", field="schedule")

    out_cfg = cfg.get("output", {})
    out = getattr(args, "out", None) or out_cfg.get("directory") or os.path.join("runs", spec.name)
    formats = out_cfg.get("formats", ["csv"])
    if getattr(args, "format", None):
        formats = [f.strip() for f in args.format.split(",") if f.strip()]
    bad = [f for f in formats if f not in FORMATS]
    if bad or not formats:
        raise ConfigError(f"unsupported format(s) {bad}; choose from {', '.join(FORMATS)}", field="format")
    return dict(spec=spec, schedule=schedule, solver=solver, diag=diag, out=out, formats=list(formats))


def _custom_problem(prob, density, resolution):
    dim = _get(prob, "dim", int, "problem.dim", 2)
    if dim not in (1, 2):
        raise ConfigError("dim must be 1 or 2", field="problem.dim")
    bounds = prob.get("bounds", [[-1.0, 1.0]] * dim)
    res = resolution if resolution is not None else prob.get("resolution", [65] * dim)
    res = tuple(int(v) for v in np.atleast_1d(res))
    if len(res) == 1 and dim == 2:
        res = res * 2
    try:
        grid = Grid(tuple(tuple(b) for b in bounds), res)
        params = DensityParams(b=_get(density, "b", float, "density.b", 1.0),
                               p=_get(density, "p", float, "density.p", 2.0))
    except (UsageError, DomainError, TypeError) as exc:
        raise ConfigError(str(exc), field="problem")
    f = evaluate_expression(prob.get("f", 0.0), grid.coords, "problem.f")
    g = evaluate_expression(prob.get("g", 0.0), grid.coords, "problem.g")
    q = float(prob.get("q", np.inf))
    mode = prob.get("mode", "closed_form")
    try:
        return ProblemSpec(grid, params, g, f, q=q, mode=mode, name=str(prob.get("name", "custom")))
    except (UsageError, DomainError) as exc:
        raise ConfigError(str(exc), field="problem")


def _solver_config(s):
    try:
        cg = CGConfig(**s.get("cg", {}))
        rest = {k: v for k, v in s.items() if k != "cg"}
        return SolverConfig(cg=cg, **rest)
    except TypeError as exc:
        raise ConfigError(str(exc), field="solver")
    except UsageError as exc:
        raise ConfigError(str(exc), field="solver")


def _diag_config(d, delta, q):
    try:
        return dg.DiagnosticsParams(delta=delta, q=q, **d)
    except TypeError as exc:
        raise ConfigError(str(exc), field="diagnostics")
    except DomainError as exc:
        raise ConfigError(str(exc), field="diagnostics")


# -- field output --------------------------------------------------------------------

def node_fields(grid, u, eps, delta):
    """Nodal export quantities; cell gradients are averaged onto nodes."""
    z = _cell_gradients(grid, u)
    acc = np.zeros((grid.n_nodes, grid.dim))
    cnt = np.zeros(grid.n_nodes)
    for k in range(grid.cells.shape[1]):
        np.add.at(acc, grid.cells[:, k], z)
        np.add.at(cnt, grid.cells[:, k], 1.0)
    gn = acc / cnt[:, None]
    return gn, v_eps(gn, eps), truncate_relaxed(gn, 2.0 * delta, eps)


def _write_rows(fh, data):
    # repr of a Python float round-trips exactly
    for row in data.tolist():
        fh.write(",".join(repr(v) for v in row) + "\n")


def write_csv(path, grid, u, eps, delta):
    gn, V, G = node_fields(grid, u, eps, delta)
    with open(path, "w", encoding="utf-8") as fh:
        if grid.dim == 1:
            fh.write("x,u,du,Veps,Gdelta\n")
            data = np.column_stack([grid.coords[:, 0], u, gn[:, 0], V, G[:, 0]])
        else:
            fh.write("x,y,u,ux,uy,veps,g2d_x,g2d_y\n")
            data = np.column_stack([grid.coords, u, gn, V, G])
        _write_rows(fh, data)


def write_cells_csv(path, grid, u, eps, delta):
    z = _cell_gradients(grid, u)
    G = truncate_relaxed(z, 2.0 * delta, eps)
    cols = ["cx", "cy"][:grid.dim] + ["gx", "gy"][:grid.dim] + ["veps"] + ["Gx", "Gy"][:grid.dim]
    data = np.column_stack([grid.centroids, z, v_eps(z, eps), G])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        _write_rows(fh, data)


def write_vtk(path, grid, u, eps, delta):
    _, _, G = node_fields(grid, u, eps, delta)
    dims = list(grid.shape) + [1] * (3 - grid.dim)
    origin = [b[0] for b in grid.bounds] + [0.0] * (3 - grid.dim)
    spacing = list(grid.h) + [1.0] * (3 - grid.dim)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\nfacetflow solution\nASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write("DIMENSIONS {} {} {}\n".format(*dims))
        fh.write("ORIGIN {} {} {}\n".format(*(repr(float(v)) for v in origin)))
        fh.write("SPACING {} {} {}\n".format(*(repr(float(v)) for v in spacing)))
        fh.write(f"POINT_DATA {grid.n_nodes}\n")
        fh.write("SCALARS u double 1\nLOOKUP_TABLE default\n")
        fh.writelines(f"{v!r}\n" for v in np.asarray(u, dtype=float).tolist())
        fh.write("SCALARS G2delta_norm double 1\nLOOKUP_TABLE default\n")
        fh.writelines(f"{v!r}\n" for v in np.linalg.norm(G, axis=-1).tolist())


def read_u_csv(path, n_nodes):
    """Nodal values from an exported u.csv (column ``u``)."""
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            col = header.index("u")
            vals = [float(line.split(",")[col]) for line in fh if line.strip()]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read nodal field from {path}: {exc}", field="out")
    if len(vals) != n_nodes:
        raise ConfigError(f"{path} has {len(vals)} rows, expected {n_nodes}", field="out")
    return np.array(vals)


def _meta(spec, schedule, diag, formats):
    return {
        "problem": spec.name,
        "grid": {"bounds": [list(b) for b in spec.grid.bounds], "resolution": list(spec.grid.shape)},
        "density": {"b": spec.params.b, "p": spec.params.p},
        "q": None if np.isinf(spec.q) else spec.q,
        "mode": spec.mode,
        "schedule": {"delta": schedule.delta, "eps": list(schedule.eps_list)},
        "diagnostics": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(diag).items()
                        if k not in ("delta", "q")},
        "formats": formats,
    }


def _grid_from_meta(meta):
    g = meta["grid"]
    return Grid(tuple(tuple(b) for b in g["bounds"]), tuple(g["resolution"]))


def _write_outputs(out, grid, u, eps, delta, formats):
    if "csv" in formats:
        write_csv(os.path.join(out, "u.csv"), grid, u, eps, delta)
        write_cells_csv(os.path.join(out, "cells.csv"), grid, u, eps, delta)
    if "vtk" in formats:
        write_vtk(os.path.join(out, "u.vtk"), grid, u, eps, delta)


def _report_text(report, seq=None, reference=None, u=None):
    lines = []
    if seq is not None:
        lines.append("# continuation")
        for k, sol in enumerate(seq.solutions):
            lines.append(f"eps[{k}]: {sol.eps!r} newton={sol.iterations} residual={sol.residual:.3e} "
                         f"energy={sol.energy!r} interior_grad_sup={seq.grad_sup_interior[k]!r}")
        for k, (a, b, c) in enumerate(zip(seq.grad_diff_lp, seq.grad_diff_l2, seq.g_sup_diff)):
            lines.append(f"diff[{k}->{k + 1}]: grad_Lp={a!r} grad_L2={b!r} G_sup={c!r}")
        if reference is not None:
            lines.append(f"max_error_vs_reference: {float(np.max(np.abs(u - reference)))!r}")
        lines.append("# diagnostics")
    return "\n".join(lines) + ("\n" if lines else "") + report.to_text()


# -- subcommands ----------------------------------------------------------------------

def cmd_solve(args):
    run = build_run(args)
    spec, schedule = run["spec"], run["schedule"]
    out = run["out"]
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    seq = continuation_solve(spec, schedule, run["solver"])
    u = seq.final.u.values
    report = dg.diagnose(spec.grid, u, seq.final.eps, spec.params, run["diag"])
    meta = _meta(spec, schedule, run["diag"], run["formats"])
    meta["seconds"] = time.perf_counter() - t0
    with open(os.path.join(out, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    # the nodal field is always kept so that diagnose/export can reload it
    _write_outputs(out, spec.grid, u, seq.final.eps, schedule.delta, sorted(set(run["formats"]) | {"csv"}))
    text = _report_text(report, seq, reference_solution(spec), u)
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    with open(os.path.join(out, "diagnostics.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    print(text, end="")
    return EXIT_OK


def _load_run(out):
    if not out:
        raise ConfigError("--out must name a directory written by 'solve'", field="out")
    try:
        with open(os.path.join(out, "meta.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {out}/meta.json: {exc.strerror}", field="out")
    grid = _grid_from_meta(meta)
    u = read_u_csv(os.path.join(out, "u.csv"), grid.n_nodes)
    return meta, grid, u


def rediagnose(out):
    """Recompute the diagnostics report from a run directory."""
    meta, grid, u = _load_run(out)
    params = DensityParams(**meta["density"])
    q = np.inf if meta.get("q") is None else meta["q"]
    d = {k: (tuple(v) if isinstance(v, list) else v) for k, v in meta["diagnostics"].items()}
    diag = dg.DiagnosticsParams(delta=meta["schedule"]["delta"], q=q, **d)
    return dg.diagnose(grid, u, meta["schedule"]["eps"][-1], params, diag)


def cmd_diagnose(args):
    report = rediagnose(args.out)
    text = report.to_text()
    with open(os.path.join(args.out, "diagnose.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    return EXIT_OK


def cmd_export(args):
    meta, grid, u = _load_run(args.out)
    formats = [f.strip() for f in (args.format or "csv,vtk").split(",") if f.strip()]
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ConfigError(f"unsupported format(s) {bad}; choose from {', '.join(FORMATS)}", field="format")
    _write_outputs(args.out, grid, u, meta["schedule"]["eps"][-1], meta["schedule"]["delta"], formats)
    print(f"exported {', '.join(formats)} to {args.out}")
    return EXIT_OK


def cmd_verify(args):
    seed = 0 if args.seed is None else args.seed
    samples = 100000 if args.samples is None else args.samples
    if samples < 1:
        raise ConfigError("must be positive", field="samples")
    reports = propcheck.run_battery(seed=seed, samples=samples)
    for r in reports:
        print(r.to_text())
    failed = [r.suite for r in reports if r.kind == "assert" and not r.passed]
    unstable = [r.suite for r in reports if r.kind == "fit" and not r.passed]
    print(f"asserting suites failed: {', '.join(failed) or 'none'}")
    print(f"fitting suites unstable: {', '.join(unstable) or 'none'}")
    return EXIT_VIOLATION if failed else EXIT_OK


def cmd_bench(args):
    keys = None
    if args.problem:
        keys = [k.strip() for k in args.problem.split(",")]
        bad = [k for k in keys if k not in bench.CRITERIA]
        if bad:
            raise ConfigError(f"unknown criteria {bad}; choose from {', '.join(bench.CRITERIA)}", field="problem")
    results = []
    for key in keys or bench.CRITERIA:
        r = bench.CRITERIA[key]()
        results.append(r)
        print(r.line())
        print("\n".join(r.details()))
        sys.stdout.flush()
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return EXIT_OK if n_fail == 0 else EXIT_VIOLATION


def make_parser():
    ap = argparse.ArgumentParser(prog="facetflow", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--problem", help="builtin problem (plug1d, pipe2d, spohn2d)")
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--eps0", type=float)
        p.add_argument("--eps-factor", type=float)
        p.add_argument("--eps-steps", type=int)
        p.add_argument("--delta", type=float)
        p.add_argument("--grid", help="node counts, e.g. 513 or 129x129")
        p.add_argument("--format", help="comma separated subset of csv,vtk")

    for name, helptext in [("solve", "run the eps-continuation and write fields and reports"),
                           ("verify", "run the randomized verification battery"),
                           ("diagnose", "recompute diagnostics from a saved run (--out)"),
                           ("export", "write saved fields in other formats (--out, --format)"),
                           ("bench", "run the acceptance benchmarks (--problem 1,2,... selects)")]:
        common(sub.add_parser(name, help=helptext))
    return ap


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "diagnose": cmd_diagnose, "export": cmd_export,
            "bench": cmd_bench}


def run(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except LinearSolverError as exc:
        print(f"linear solver failed: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (DomainError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FacetflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main():
    sys.exit(run())
