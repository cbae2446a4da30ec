"""Command line entry point: ``mfgc solve|sweep|check|diagnose``.

Exit codes: 0 success, 1 configuration error, 2 non-convergence,
3 assumption violations (``check``), 4 converged but diagnostics not verified.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .assumptions import crowd_existence_region, h4_sweep, verify_sampled
from .config import RunConfig, load_config, parse_config, set_dotted
from .coupler import SolveResult, solve_with_continuation
from .diagnostics import run_diagnostics
from .errors import ConfigError, MfgcError
from .grid import TimeGrid, TorusGrid
from .models import CrowdMotion
from .mufix import lambda_moment

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV, EXIT_VIOLATION, EXIT_UNVERIFIED = 0, 1, 2, 3, 4
FIELDS = ("u", "m", "alpha")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _finite(x):
    """JSON has no infinities; encode them as strings."""
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def write_field_csv(path, values, times, nodes):
    t = np.repeat(times, nodes.size)
    x = np.tile(nodes, times.size)
    data = np.column_stack([t, x, np.asarray(values).ravel()])
    with open(path, "w", newline="") as fh:
        fh.write("t,x,value\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def read_field_csv(path, nt, n):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 2].reshape(nt + 1, n)


def output_dir(cfg: RunConfig) -> Path:
    env = os.environ.get("MFGC_OUT")
    return Path(env) if env else cfg.output_dir


def initial_guess(cfg: RunConfig, model):
    if cfg.initial_guess == "terminal":
        g = model.terminal_cost(cfg.m0)
        return np.tile(g, (cfg.tgrid.nt + 1, 1))
    return None


def run_solve(cfg: RunConfig) -> SolveResult:
    model = cfg.build_model()
    return solve_with_continuation(model, cfg.tgrid, cfg.m0, cfg.solver,
                                   u_init=initial_guess(cfg, model))


def summary_dict(result: SolveResult, cfg_echo: dict) -> dict:
    diag = result.diagnostics.to_dict() if result.diagnostics is not None else None
    return _finite({
        "converged": bool(result.converged),
        "outer_iterations": int(result.outer_iterations),
        "residual_history": [float(r) for r in result.residual_history],
        "diagnostics": diag,
        "config_echo": cfg_echo,
        "status": result.status,
        "verified": bool(result.diagnostics.verified) if result.diagnostics else False,
        "truncation_radius": result.M,
        "truncation_inactive": result.truncation_inactive,
        "system_residuals": result.system_residuals,
        "mu_contraction_max": result.mu_contraction_max,
    })


def write_outputs(result: SolveResult, cfg: RunConfig, out: Path, figures: bool):
    out.mkdir(parents=True, exist_ok=True)
    times, nodes = result.tgrid.times, result.grid.nodes
    for name in FIELDS:
        write_field_csv(out / f"{name}.csv", getattr(result, name), times, nodes)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary_dict(result, cfg.echo()), fh, indent=2, default=_json_default)
        fh.write("\n")
    if figures:
        # matplotlib is only loaded when figures are requested
        from .plotting import write_figures
        write_figures(result, out)


def solve_exit_code(result: SolveResult) -> int:
    if not result.converged:
        return EXIT_NOCONV
    return EXIT_OK if result.diagnostics.verified else EXIT_UNVERIFIED


def one_line(result: SolveResult) -> str:
    res = result.residual_history[-1] if result.residual_history else float("nan")
    verified = "VERIFIED" if result.diagnostics and result.diagnostics.verified else "UNVERIFIED"
    return (f"converged={result.converged} status={result.status} "
            f"outer_iterations={result.outer_iterations} final_residual={res:.3e} {verified}")


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    result = run_solve(cfg)
    out = output_dir(cfg)
    write_outputs(result, cfg, out, cfg.figures and not args.no_figures)
    print(one_line(result))
    return solve_exit_code(result)


def _parse_value(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


SWEEP_COLUMNS = ("value", "converged", "status", "outer_iterations", "final_residual", "u_sup",
                 "lambda_inf_max", "mass_max_dev", "m_min", "energy_identity_residual",
                 "lambda_bound_margin", "max_principle_margin", "grad_value_ratio", "verified")


def _sweep_one(job):
    raw, key, value = job
    try:
        cfg = parse_config(set_dotted(raw, key, value))
        result = run_solve(cfg)
    except MfgcError as exc:
        return {"value": value, "converged": False, "status": f"error: {exc}"}, []
    d = result.diagnostics
    row = {
        "value": value, "converged": result.converged, "status": result.status,
        "outer_iterations": result.outer_iterations,
        "final_residual": result.residual_history[-1] if result.residual_history else float("nan"),
        "u_sup": float(np.max(np.abs(result.u))),
        "lambda_inf_max": max(lambda_moment(mu, math.inf) for mu in result.measures()),
        "mass_max_dev": d.mass_max_dev, "m_min": d.m_min,
        "energy_identity_residual": d.energy_identity_residual,
        "lambda_bound_margin": d.lambda_bound_margin,
        "max_principle_margin": d.max_principle_margin,
        "grad_value_ratio": d.grad_value_ratio, "verified": d.verified,
    }
    return row, list(result.residual_history)


def _csv_cell(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return "" if v is None else str(v)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = [v for v in (args.values or "").split(",") if v.strip()]
    if not values:
        raise ConfigError("--values: empty value list")
    raw = dict(cfg.raw)
    jobs = [(raw, args.param, _parse_value(v)) for v in values]
    for _, key, value in jobs:  # validate every variant before computing
        parse_config(set_dotted(raw, key, value))
    threads = max(1, args.threads or 1)
    if threads == 1:
        outcomes = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_sweep_one, jobs))
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for row, _ in outcomes:
            w.writerow([_csv_cell(row.get(c)) for c in SWEEP_COLUMNS])
    with open(out / "sweep.json", "w") as fh:
        json.dump(_finite({"param": args.param,
                           "runs": [{"value": r["value"], "residual_history": h}
                                    for r, h in outcomes]}), fh, indent=2, default=_json_default)
    for row, _ in outcomes:
        print(f"{args.param}={row['value']}: converged={row['converged']} status={row['status']}")
    return EXIT_OK if all(r["converged"] for r, _ in outcomes) else EXIT_NOCONV


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    model = cfg.build_model()
    chk = cfg.check
    report = verify_sampled(model, n_samples=chk["n_samples"], seed=cfg.seed, p_max=chk["p_max"],
                            amp_max=chk["amp_max"], constants=cfg.constants_override(model))
    print(f"assumption check: model={model.name} seed={cfg.seed}")
    for line in report.lines():
        print("  " + line)
    payload = {"assumptions": report.to_dict()}
    violations = report.violations
    for name, c in report.checks.items():
        if c.witness is not None:
            print(f"  witness for {name}: x={c.witness['x']!r} p={c.witness['p']!r} "
                  f"lhs={c.witness['lhs']!r} rhs={c.witness['rhs']!r} measure={c.witness['measure']}")
    if chk["h4"] or args.h4:
        lam_min, rel = h4_sweep(chk["h4_tuples"], seed=cfg.seed)
        ok = lam_min >= 1.0 - 1e-10
        violations += 0 if ok else 1
        print(f"  matrix positivity: min eigenvalue={lam_min:.12g} path agreement={rel:.3e} "
              f"{'ok' if ok else 'VIOLATION'}")
        payload["h4"] = {"min_eigenvalue": lam_min, "max_rel_disagreement": rel}
    if isinstance(model, CrowdMotion):
        cases = crowd_existence_region(model.theta, model.lambda_tilde, model.a, model.b,
                                       model.q0, kernel_constant=model.kernel.is_constant())
        print(f"  crowd existence cases: {','.join(cases) or 'none'}")
        payload["crowd_cases"] = cases
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "check.json", "w") as fh:
        json.dump(_finite(payload), fh, indent=2, default=_json_default)
    return EXIT_OK if violations == 0 else EXIT_VIOLATION


def load_run(run_dir) -> SolveResult:
    run_dir = Path(run_dir)
    try:
        summary = json.loads((run_dir / "summary.json").read_text())
    except OSError as exc:
        raise ConfigError(f"{run_dir}: no readable summary.json") from exc
    cfg = parse_config(summary["config_echo"])
    model = cfg.build_model()
    nt, n = cfg.tgrid.nt, cfg.grid.n
    fields = {name: read_field_csv(run_dir / f"{name}.csv", nt, n) for name in FIELDS}
    M = summary.get("truncation_radius", cfg.solver.M)
    M = math.inf if M == "inf" else float(M)
    return SolveResult(model=model, tgrid=cfg.tgrid, config=cfg.solver, residual_history=
                       summary.get("residual_history", []),
                       outer_iterations=summary.get("outer_iterations", 0),
                       converged=bool(summary.get("converged", False)),
                       status=summary.get("status", ""), M=M, **fields)


def cmd_diagnose(args) -> int:
    result = load_run(args.run_dir)
    report = run_diagnostics(result)
    for k, v in report.to_dict().items():
        print(f"{k}: {v}")
    if not result.converged:
        return EXIT_NOCONV
    return EXIT_OK if report.verified else EXIT_UNVERIFIED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfgc", description="Mean field games of controls on the 1-D torus")
    ap.add_argument("--threads", type=int, default=1, help="max concurrent solves in a sweep")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve one configuration")
    p.add_argument("config")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("sweep", help="solve a family of configurations")
    p.add_argument("config")
    p.add_argument("--param", required=True, help="dotted config key, e.g. model.eps")
    p.add_argument("--values", required=True, help="comma separated values")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("check", help="sample the structural assumptions")
    p.add_argument("config")
    p.add_argument("--h4", action="store_true", help="include the matrix positivity sweep")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("diagnose", help="recompute diagnostics of a finished run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MfgcError as exc:
        print(f"solve failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
