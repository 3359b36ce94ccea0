"""Scenario-driven command line.

    srpmc <command> --scenario FILE [--out DIR] [--seed N] [--grid NXxNT]

A scenario is a flat ``key = value`` file; ``#`` starts a comment and
expressions may be quoted.  Every run writes ``summary.json`` to the output
directory.  Exit status: 0 success, 1 parse or configuration error,
2 numerical failure (non-convergence, degenerate metric, failed check).
"""

from __future__ import annotations

import argparse
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .curves import (
    curve_table,
    foliation_jacobian,
    geodesic_check,
    mean_curvature_along,
    regularity_diagnostic,
    trace,
)
from .expr import DomainError, ExprSyntaxError, as_field, parse
from .geometry import ContactMetric, DegenerateMetricError
from .graph import GraphDomain, IntrinsicGraph, area, pmc_value, volume
from .io import write_csv, write_curve_csv, write_graph_csv, write_json, write_surface_csv
from .solver import DiscretizedProblem, SolverConfig, refine_study, solve, volume_constrained_solve
from .suites import geometry_identity_suite, graph_variation_suite, random_ambient_field, surface_variation_suite
from .variation import ParamSurface, first_variation_general, flow_area_derivative, sr_area

COMMANDS = (
    "area",
    "volume",
    "variation-check",
    "trace",
    "solve",
    "solve-constrained",
    "regularity",
    "geometry-check",
    "surface-variation",
)

EXPRESSION_KEYS = {"g11", "g12", "g22", "f", "u", "boundary", "frozen", "surface_u"}

DEFAULTS = {
    "g11": "1",
    "g12": "0",
    "g22": "1",
    "f": "0",
    "u": "0",
    "boundary": None,
    "sign": "-",
    "x0": 0.0,
    "x1": 1.0,
    "t0": 0.0,
    "t1": 1.0,
    "nx": 33,
    "nt": None,
    "a": 0.5,
    "b": 0.5,
    "halfwidth": 0.25,
    "step": 1e-3,
    "tol": 1e-10,
    "max_iter": 100,
    "vol_tol": 1e-12,
    "target_volume": None,
    "levels": "33,65,129",
    "starts": "0.5 0.3; 0.5 0.4; 0.5 0.5; 0.5 0.6; 0.5 0.7",
    "frozen": None,
    "cases": 20,
    "grid": 64,
    "s_step": 1e-4,
    "rel_tol": 1e-6,
    "metrics": 10,
    "points": 100,
    "surfaces": 10,
    "fields": 5,
    "surface": None,
    "surface_u": None,
    "box": None,
    "seed": 0,
}

INT_KEYS = {"nx", "nt", "max_iter", "cases", "grid", "metrics", "points", "surfaces", "fields", "seed"}
FLOAT_KEYS = {"x0", "x1", "t0", "t1", "a", "b", "halfwidth", "step", "tol", "vol_tol", "target_volume", "s_step", "rel_tol"}


class ConfigError(ValueError):
    pass


class CheckFailed(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# scenario files


def parse_scenario(text, source="<scenario>"):
    """Parse ``key = value`` lines into a dict of raw strings."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        try:
            tokens = shlex.split(value, comments=True)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
        if not key.isidentifier():
            raise ConfigError(f"{source}:{lineno}: bad key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = " ".join(tokens)
    return raw


def build_config(raw, source="<scenario>"):
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
    cfg = dict(DEFAULTS)
    for key, value in raw.items():
        try:
            if key in INT_KEYS:
                cfg[key] = int(value)
            elif key in FLOAT_KEYS:
                cfg[key] = float(value)
            else:
                cfg[key] = value
        except ValueError:
            raise ConfigError(f"{source}: {key} = {value!r} is not a number") from None
    for key in EXPRESSION_KEYS:
        if cfg[key] is not None:
            try:
                parse(cfg[key])
            except ExprSyntaxError as exc:
                raise ConfigError(f"{source}: {key}: {exc}") from None
    if cfg["nt"] is None:
        cfg["nt"] = cfg["nx"]
    if cfg["nx"] < 3 or cfg["nt"] < 3:
        raise ConfigError(f"{source}: grid sizes must be at least 3")
    if cfg["sign"] not in ("-", "+"):
        raise ConfigError(f"{source}: sign must be '-' or '+'")
    if cfg["x1"] <= cfg["x0"] or cfg["t1"] <= cfg["t0"]:
        raise ConfigError(f"{source}: empty domain rectangle")
    try:
        cfg["levels"] = [int(v) for v in str(cfg["levels"]).replace(",", " ").split()]
        cfg["starts"] = [tuple(float(v) for v in pair.split()) for pair in str(cfg["starts"]).split(";") if pair.strip()]
        if cfg["box"] is not None:
            cfg["box"] = [float(v) for v in str(cfg["box"]).split()]
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if any(len(p) != 2 for p in cfg["starts"]):
        raise ConfigError(f"{source}: starts must be 'a b' pairs separated by ';'")
    if cfg["box"] is not None and len(cfg["box"]) != 6:
        raise ConfigError(f"{source}: box needs six numbers x0 y0 t0 x1 y1 t1")
    if cfg["boundary"] is None:
        cfg["boundary"] = cfg["u"]
    return cfg


def _grid_override(text):
    try:
        nx, nt = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--grid expects NXxNT, got {text!r}") from None
    if nx < 3 or nt < 3:
        raise ConfigError("grid sizes must be at least 3")
    return nx, nt


# ---------------------------------------------------------------------------
# commands


def _metric(cfg):
    return ContactMetric(cfg["g11"], cfg["g12"], cfg["g22"])


def _domain(cfg):
    return GraphDomain(cfg["x0"], cfg["x1"], cfg["t0"], cfg["t1"], cfg["nx"], cfg["nt"])


def _graph(cfg):
    return IntrinsicGraph.from_expression(_domain(cfg), cfg["u"])


def _solver_config(cfg):
    return SolverConfig(tol=cfg["tol"], max_iter=cfg["max_iter"], vol_tol=cfg["vol_tol"])


def _problem(cfg):
    return DiscretizedProblem(_domain(cfg), cfg["boundary"], _metric(cfg), cfg["f"], cfg["sign"])


def cmd_area(cfg, out):
    g = _graph(cfg)
    value = area(g, _metric(cfg))
    write_graph_csv(out / "graph.csv", g)
    return {"area": value}, f"area = {float(value)!r}"


def cmd_volume(cfg, out):
    g = _graph(cfg)
    m = _metric(cfg)
    vol = volume(g, m)
    functional = pmc_value(g, m, cfg["f"], cfg["sign"])
    return {"volume": vol, "functional": functional}, f"volume = {float(vol)!r}"


def cmd_variation_check(cfg, out):
    cases = graph_variation_suite(cfg["cases"], cfg["seed"], cfg["grid"], cfg["s_step"])
    rows = [[k, c.analytic, c.oracle, c.rel_error] for k, c in enumerate(cases)]
    write_csv(out / "variation_check.csv", ["case", "first_variation", "fd_oracle", "rel_error"], rows)
    worst = max(c.rel_error for c in cases)
    scalars = {"cases": len(cases), "max_rel_error": worst}
    if worst > cfg["rel_tol"]:
        raise CheckFailed(f"max relative error {worst:.3e} exceeds {cfg['rel_tol']:g}", scalars)
    return scalars, f"variation-check: {len(cases)} cases, max rel error {worst:.3e}"


def cmd_trace(cfg, out):
    g = _graph(cfg)
    m = _metric(cfg)
    curve = trace(g, (cfg["a"], cfg["b"]), cfg["halfwidth"], cfg["step"])
    curve.q = foliation_jacobian(g, curve)
    rep = regularity_diagnostic(g, m, cfg["f"], [curve], cfg["sign"])
    write_curve_csv(out / "curve.csv", curve_table(curve, rep.residuals[0]))
    scalars = {
        "samples": len(curve.s),
        "step": curve.step,
        "clipped": curve.clipped,
        "diagnostic_sup": rep.sup,
        "min_q": float(np.min(curve.q)),
    }
    return scalars, f"trace: {len(curve.s)} samples, sup|dM/ds - K| = {rep.sup:.3e}"


def _solve_outputs(out, prob, res, name):
    g = res.graph(prob.domain)
    write_graph_csv(out / f"{name}.csv", g)
    report = {
        "residual": res.residual,
        "iterations": res.iterations,
        "converged": res.converged,
        "history": res.history,
        "multiplier": res.multiplier,
        "volume": res.volume,
        "multipliers": res.multipliers,
    }
    write_json(out / f"{name}.json", report)
    return report


def cmd_solve(cfg, out):
    prob = _problem(cfg)
    res = solve(prob, _solver_config(cfg))
    report = _solve_outputs(out, prob, res, "solution")
    scalars = {k: report[k] for k in ("residual", "iterations", "converged")}
    if not res.converged:
        raise CheckFailed(f"solver did not converge (residual {res.residual:.3e})", scalars)
    return scalars, f"solve: converged in {res.iterations} iterations, residual {res.residual:.3e}"


def cmd_solve_constrained(cfg, out):
    if cfg["target_volume"] is None:
        raise ConfigError("solve-constrained needs target_volume")
    prob = _problem(cfg)
    res = volume_constrained_solve(prob, cfg["target_volume"], _solver_config(cfg), seed=cfg["seed"])
    report = _solve_outputs(out, prob, res, "solution")
    scalars = {k: report[k] for k in ("residual", "iterations", "converged", "multiplier", "volume", "multipliers")}
    if not res.converged:
        raise CheckFailed(f"constrained solver did not converge (residual {res.residual:.3e})", scalars)
    return scalars, f"solve-constrained: H0 = {res.multiplier:.12g}, residual {res.residual:.3e}"


def cmd_regularity(cfg, out):
    prob = _problem(cfg)
    report, results = refine_study(
        prob, cfg["levels"], cfg["starts"], cfg["halfwidth"], cfg["step"], _solver_config(cfg), cfg["frozen"]
    )
    prob_f, _, graph, curves = results[-1]
    f_field = as_field(cfg["f"])
    levels = []
    for (p, res, g, cs), h, sup in zip(results, report.levels, report.sups):
        row = {"n": p.domain.nx, "h": h, "diagnostic_sup": sup}
        if res is not None:
            row["residual"] = res.residual
        if f_field.is_constant:
            c = f_field.value
            herr = geo = 0.0
            for cv in cs:
                H = mean_curvature_along(g, p.metric, cv)
                herr = max(herr, float(np.nanmax(np.abs(H[2:-2] - c))))
                geo = max(geo, geodesic_check(g, p.metric, cv, c))
            row["H_error"] = herr
            row["geodesic_residual"] = geo
        levels.append(row)
    rep = regularity_diagnostic(graph, prob_f.metric, cfg["f"], curves, cfg["sign"])
    for k, cv in enumerate(curves):
        cv.q = foliation_jacobian(graph, cv)
        write_curve_csv(out / f"curve_{k}.csv", curve_table(cv, rep.residuals[k]))
    write_graph_csv(out / "solution.csv", graph)
    scalars = {"levels": levels, "orders": report.orders, "order": report.order}
    write_json(out / "regularity.json", scalars)
    return scalars, "regularity: sups " + ", ".join(f"{s:.3e}" for s in report.sups) + f", order {report.order:.3f}"


def cmd_geometry_check(cfg, out):
    worst = geometry_identity_suite(cfg["metrics"], cfg["points"], cfg["seed"])
    limits = {"bracket": 1e-8, "J_T": 1e-8, "tau_T": 1e-8, "nabla_T": 1e-6, "compatibility": 1e-6, "DTT": 1e-8}
    failed = [k for k, lim in limits.items() if not worst[k] <= lim]
    if not worst["orientation_min"] > 0:
        failed.append("orientation_min")
    scalars = {"residuals": worst, "limits": limits}
    if failed:
        raise CheckFailed("identity check failed: " + ", ".join(failed), scalars)
    return scalars, f"geometry-check: {cfg['metrics']} metrics x {cfg['points']} points, all identities hold"


def _surface(cfg, base):
    if cfg["surface"] is not None:
        try:
            return ParamSurface.read_csv(base / cfg["surface"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load surface: {exc}") from None
    d = _domain(cfg)
    return ParamSurface.intrinsic_graph(cfg["surface_u"], d.x, d.t)


def _tolerance(value):
    return max(1e-6, 1e-4 * abs(value))


def _default_box(P):
    """Central 60% of the bounding box in x and t, unbounded in y."""
    pmin, pmax = P.reshape(-1, 3).min(0), P.reshape(-1, 3).max(0)
    mid, half = 0.5 * (pmin + pmax), 0.5 * (pmax - pmin)
    lo, hi = mid - 0.6 * half, mid + 0.6 * half
    lo[1], hi[1] = pmin[1] - 1.0, pmax[1] + 1.0
    return lo, hi


def cmd_surface_variation(cfg, out, base):
    scalars = {}
    if cfg["surface"] is None and cfg["surface_u"] is None:
        cases = surface_variation_suite(cfg["surfaces"], cfg["fields"], cfg["seed"], s_step=cfg["s_step"])
        rows = [[k, c.analytic, c.oracle, c.error] for k, c in enumerate(cases)]
    else:
        m = _metric(cfg)
        surf = _surface(cfg, base)
        if cfg["box"] is not None:
            lo, hi = np.array(cfg["box"][:3]), np.array(cfg["box"][3:])
        else:
            lo, hi = _default_box(surf.samples()[0])
        rng = np.random.default_rng(cfg["seed"])
        rows = []
        for k in range(cfg["fields"]):
            U = random_ambient_field(rng, (lo, hi))
            a = first_variation_general(surf, m, U)
            b = flow_area_derivative(surf, m, U, cfg["s_step"])
            rows.append([k, a, b, abs(a - b)])
        write_surface_csv(out / "surface.csv", surf)
        scalars["sr_area"] = sr_area(surf, m)
    write_csv(out / "surface_variation.csv", ["case", "first_variation", "flow_oracle", "abs_error"], rows)
    worst = max(r[3] / _tolerance(r[2]) for r in rows)
    scalars.update(cases=len(rows), max_error_over_tolerance=worst)
    if worst > 1.0:
        raise CheckFailed(f"first variation disagrees with the flow oracle (ratio {worst:.3g})", scalars)
    return scalars, f"surface-variation: {len(rows)} cases, worst error/tolerance {worst:.3e}"


HANDLERS = {
    "area": cmd_area,
    "volume": cmd_volume,
    "variation-check": cmd_variation_check,
    "trace": cmd_trace,
    "solve": cmd_solve,
    "solve-constrained": cmd_solve_constrained,
    "regularity": cmd_regularity,
    "geometry-check": cmd_geometry_check,
}


def run(command, scenario_path, out_dir, seed=None, grid=None):
    """Run one command; returns the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"command": command, "scenario": str(scenario_path), "version": __version__}
    code = 0
    try:
        try:
            path = Path(scenario_path)
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario: {exc}") from None
        cfg = build_config(parse_scenario(text, str(scenario_path)), str(scenario_path))
        if seed is not None:
            cfg["seed"] = seed
        if grid is not None:
            cfg["nx"], cfg["nt"] = _grid_override(grid)
        summary["seed"] = cfg["seed"]
        summary["tolerances"] = {"tol": cfg["tol"], "vol_tol": cfg["vol_tol"], "rel_tol": cfg["rel_tol"]}
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        try:
            _metric(cfg)
        except DegenerateMetricError as exc:
            raise ConfigError(str(exc)) from None
        try:
            if command == "surface-variation":
                scalars, line = cmd_surface_variation(cfg, out, path.parent)
            else:
                scalars, line = HANDLERS[command](cfg, out)
        except ConfigError:
            raise
        except CheckFailed as exc:
            summary["scalars"] = exc.args[1] if len(exc.args) > 1 else {}
            raise
        summary.update(status="ok", scalars=scalars, message=line)
        print(line)
    except ConfigError as exc:
        code = 1
        summary.update(status="config_error", message=str(exc))
        print(f"error: {exc}", file=sys.stderr)
    except CheckFailed as exc:
        code = 2
        summary.update(status="numerical_failure", message=str(exc.args[0]))
        print(f"failed: {exc.args[0]}", file=sys.stderr)
    except (ArithmeticError, DomainError, DegenerateMetricError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        code = 2
        summary.update(status="numerical_failure", message=f"{type(exc).__name__}: {exc}")
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
    except Exception as exc:  # anything unexpected still leaves a summary behind
        code = 2
        summary.update(status="internal_error", message=f"{type(exc).__name__}: {exc}")
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
    summary["exit_code"] = code
    write_json(out / "summary.json", summary)
    return code


def main(argv=None):
    parser = argparse.ArgumentParser(prog="srpmc", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", required=True, help="key = value scenario file")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized suites")
    parser.add_argument("--grid", default=None, help="grid override NXxNT")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    args = parser.parse_args(argv)
    return run(args.command, args.scenario, args.out, args.seed, args.grid)


if __name__ == "__main__":
    sys.exit(main())
