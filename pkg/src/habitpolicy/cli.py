"""Command line front end: solve | sweep | verify | simulate.

Exit codes: 0 success, 1 usage/config error, 2 solver failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from .dual import DualSolution
from .errors import (
    NoCrossingError,
    SolverError,
    UsageError,
    ValidationError,
)
from .fbp import solve_free_boundary
from .params import ModelParams, derive_constants
from .policy import PolicySolution, build_policy
from .runio import (
    MODEL_KEYS,
    RunConfig,
    append_summary,
    build_run_config,
    parse_kv_file,
    write_csv,
    write_summary,
)
from .simulate import PolicyTable, mc_value, reconstruct_wealth, simulate_path
from .sweep import SWEEPABLE, run_sweep
from .verify import certificate_suite, corrupted_policy, hjb_residual_max, mc_comparison

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_VERIFY = 3


class _Parser(argparse.ArgumentParser):
    # route argparse failures through the usual usage-error exit code
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="habitpolicy",
        description="Optimal investment/consumption under a habit-formation constraint",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="flat key=value configuration file")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (repeatable)")
        sp.add_argument("--seed", type=int, help="override sim.seed")
        sp.add_argument("--threads", type=int, default=1)
        for key in MODEL_KEYS:
            sp.add_argument(f"--{key}", type=float, help=f"override model parameter {key}")

    sp_solve = sub.add_parser("solve", help="solve and write CSV artifacts")
    common(sp_solve)

    sp_sweep = sub.add_parser("sweep", help="one-parameter sweep")
    common(sp_sweep)
    sp_sweep.add_argument("--parameter", required=True, choices=SWEEPABLE)
    sp_sweep.add_argument("--values", required=True,
                          help="comma-separated list of parameter values")

    sp_verify = sub.add_parser("verify", help="run the certificate suite")
    common(sp_verify)
    sp_verify.add_argument("--corrupt-y-star", type=float, default=0.0,
                           help=argparse.SUPPRESS)
    sp_verify.add_argument("--skip-mc", action="store_true",
                           help="skip the Monte Carlo cross-check even if sim.* is configured")

    sp_sim = sub.add_parser("simulate", help="Monte Carlo cross-validation")
    common(sp_sim)
    sp_sim.add_argument("--paths-csv", type=int, default=3,
                        help="number of sample paths to dump as CSV")
    return ap


def _load_config(args) -> RunConfig:
    kv: dict[str, str] = {}
    if args.config is not None:
        if not args.config.exists():
            raise UsageError(f"config file not found: {args.config}")
        kv.update(parse_kv_file(args.config))
    for key in MODEL_KEYS:
        val = getattr(args, key)
        if val is not None:
            kv[key] = repr(val)
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE (got {item!r})")
        key, value = item.split("=", 1)
        kv[key.strip()] = value.strip()
    if args.seed is not None:
        kv["sim.seed"] = str(args.seed)
    cfg = build_run_config(kv, out_dir=args.out)
    return cfg


def _solve(cfg: RunConfig):
    consts = derive_constants(cfg.params)
    fbp = solve_free_boundary(consts, cfg.ode, eta_tol=cfg.eta_tol)
    dual = DualSolution(fbp=fbp, consts=consts)
    return consts, fbp, dual, build_policy(dual)


def _write_artifacts(cfg: RunConfig, consts, fbp, dual, policy: PolicySolution,
                     wall_time: float) -> dict:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)

    write_csv(out / "phi_H.csv", ["y", "phi", "H"], [fbp.ys, fbp.phis, fbp.Hs])
    etas = np.array([h[0] for h in fbp.bracket_history])
    kinds = [h[1] for h in fbp.bracket_history]
    exit_ys = np.array([h[2] for h in fbp.bracket_history])
    write_csv(out / "bracket_history.csv", ["eta", "exit_kind", "exit_y"],
              [etas, kinds, exit_ys])

    ygrid = dual.default_y_grid(cfg.grid.y_count)
    write_csv(
        out / "dual.csv",
        ["y", "u", "u_prime", "u_second", "residual"],
        [ygrid, dual.u(ygrid), dual.u_prime(ygrid), dual.u_second(ygrid),
         dual.dual_residual(ygrid)],
    )

    xgrid = policy.default_x_grid(cfg.grid.x_count, cfg.grid.x_cap)
    write_csv(
        out / "policy.csv",
        ["x", "c_star", "theta_star", "v", "ce"],
        [xgrid, policy.c_star(xgrid), policy.theta_star(xgrid),
         policy.value(xgrid), policy.ce(xgrid)],
    )

    try:
        x0, c0 = policy.crossing_point()
        crossing_status = "ok"
    except NoCrossingError:
        x0 = c0 = math.nan
        crossing_status = "no_crossing"

    ymask = np.abs(ygrid - fbp.y_star) > 1e-12 * fbp.y_star
    max_dual = float(np.max(np.abs(dual.dual_residual(ygrid[ymask]))))
    summary = {
        "y_star": fbp.y_star,
        "x_star": policy.x_star,
        "x_floor": consts.x_floor,
        "beta_hat": policy.beta_hat,
        "x0": x0,
        "c0": c0,
        "crossing_status": crossing_status,
        "max_hjb_residual": hjb_residual_max(policy),
        "max_dual_residual": max_dual,
        "bisection_iterations": fbp.bisection_iterations,
        "wall_time_s": wall_time,
        "kappa": consts.kappa,
        "lambda": consts.lam,
        "lambda_prime": consts.lam_prime,
        "eta1": consts.eta1,
        "eta2": consts.eta2,
        "x_max": policy.x_max,
        "y_min": fbp.y_min,
        "tail_extended": int(fbp.tail_extended),
        "seam_y": fbp.seam_y,
        "seam_dphi_rel": fbp.seam_dphi_rel,
        "seam_dH": fbp.seam_dH,
    }
    write_summary(out / "summary.txt", summary)
    return summary


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    t0 = time.perf_counter()
    consts, fbp, dual, policy = _solve(cfg)
    wall = time.perf_counter() - t0
    summary = _write_artifacts(cfg, consts, fbp, dual, policy, wall)
    print(f"y_star={summary['y_star']:.12g} x_star={summary['x_star']:.12g} "
          f"x0={summary['x0']:.6g} c0={summary['c0']:.6g} ({wall:.2f}s)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --values list: {args.values!r}") from exc
    if not values:
        raise UsageError("--values is empty")
    rows = run_sweep(cfg.params, args.parameter, values, ode=cfg.ode,
                     eta_tol=cfg.eta_tol, threads=args.threads)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(
        cfg.out_dir / "sweep.csv",
        ["param", "value", "y_star", "x_star", "beta_hat", "max_residual", "status"],
        [
            [r["parameter"] for r in rows],
            np.array([r["value"] for r in rows]),
            np.array([r["y_star"] for r in rows]),
            np.array([r["x_star"] for r in rows]),
            np.array([r["beta_hat"] for r in rows]),
            np.array([r["max_residual"] for r in rows]),
            [r["status"] for r in rows],
        ],
    )
    n_err = sum(1 for r in rows if r["status"] != "ok")
    print(f"sweep {args.parameter}: {len(rows)} points, {n_err} failed "
          f"-> {cfg.out_dir / 'sweep.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    _, fbp, dual, policy = _solve(cfg)
    if args.corrupt_y_star:
        policy = corrupted_policy(policy, args.corrupt_y_star)
    mc_cfg = None if args.skip_mc else cfg.sim
    results = certificate_suite(policy, mc_cfg=mc_cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    lines = [r.line() for r in results]
    (cfg.out_dir / "verify_report.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    n_fail = sum(1 for r in results if not r.passed)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_VERIFY


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if cfg.sim is None:
        raise UsageError("simulate needs a sim.* section (e.g. sim.n_paths, sim.dt)")
    _, fbp, dual, policy = _solve(cfg)
    table = PolicyTable.build(policy)
    est = mc_value(policy, cfg.sim, table=table)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(min(args.paths_csv, cfg.sim.n_paths)):
        path = simulate_path(policy, cfg.sim, k, table=table)
        w, z = reconstruct_wealth(path, w0=cfg.sim.x0, policy=policy, table=table)
        cs, ths = table.lookup(path.x_values)
        write_csv(
            cfg.out_dir / f"path_{k}.csv",
            ["t", "x", "c", "theta", "w", "z"],
            [path.times, path.x_values, cs, ths, w, z],
        )
    check = mc_comparison(policy, est, cfg.sim)
    summary_path = cfg.out_dir / "summary.txt"
    entries = {
        "mc_mean": est.mean,
        "mc_stderr": est.stderr,
        "mc_tail_bound": est.tail_bound,
        "mc_n_paths": est.n_paths,
        "mc_clamp_count": est.clamp_count,
        "mc_cap_count": est.cap_count,
        "mc_value_at_x0": policy.value(cfg.sim.x0),
        "mc_check": "pass" if check.passed else "fail",
    }
    if summary_path.exists():
        append_summary(summary_path, entries)
    else:
        write_summary(summary_path, entries)
    print(check.line())
    if est.cap_count > 0:
        print(f"warning: {est.cap_count} path steps were capped at x_max")
    return EXIT_OK if check.passed else EXIT_VERIFY


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
