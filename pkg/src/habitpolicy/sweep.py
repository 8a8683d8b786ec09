"""One-parameter sweeps over independent solves.

Each sweep point is a fresh free-boundary solve (no continuation), so points
are independent, failures stay local to their row, and the work can fan out
across processes.  A sharpe_ratio sweep moves mu with r and sigma fixed:
the solve depends on (mu, sigma) only through kappa = SR**2/2, so one axis
is enough.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .dual import DualSolution
from .fbp import solve_free_boundary
from .ode import OdeControls
from .params import ModelParams, derive_constants
from .policy import build_policy
from .verify import hjb_residual_max
from .errors import UsageError

SWEEPABLE = ("delta", "alpha", "sharpe_ratio", "rho", "gamma")

_POINT_KEYS = ("parameter", "value", "y_star", "x_star", "beta_hat", "max_residual", "status")


def apply_sweep_value(params: ModelParams, parameter: str, value: float) -> ModelParams:
    if parameter == "sharpe_ratio":
        return dataclasses.replace(params, mu=params.r + value * params.sigma)
    if parameter in SWEEPABLE:
        return dataclasses.replace(params, **{parameter: value})
    raise UsageError(f"unknown sweep parameter {parameter!r}; choose from {SWEEPABLE}")


def sweep_point(payload: tuple) -> dict:
    """Solve one sweep point; exceptions are folded into the status column."""
    base_dict, parameter, value, ode_dict, eta_tol = payload
    row = {k: math.nan for k in _POINT_KEYS}
    row["parameter"] = parameter
    row["value"] = value
    row["status"] = "ok"
    try:
        params = apply_sweep_value(ModelParams(**base_dict), parameter, value)
        consts = derive_constants(params)
        fbp = solve_free_boundary(consts, OdeControls(**ode_dict), eta_tol=eta_tol)
        dual = DualSolution(fbp=fbp, consts=consts)
        policy = build_policy(dual)
        ygrid = dual.default_y_grid()
        ygrid = ygrid[np.abs(ygrid - fbp.y_star) > 1e-12 * fbp.y_star]
        max_dual = float(np.max(np.abs(dual.dual_residual(ygrid))))
        _, rem = dual.phi_ode_residual_nodes()
        max_res = max(max_dual, float(np.max(np.abs(rem))), hjb_residual_max(policy, 100))
        row.update(
            y_star=fbp.y_star,
            x_star=policy.x_star,
            beta_hat=policy.beta_hat,
            max_residual=max_res,
        )
    except Exception as exc:  # per-point failures must not kill the sweep
        msg = f"error: {type(exc).__name__}: {exc}"
        row["status"] = msg.replace(",", ";").replace("\n", " ")
    return row


def run_sweep(
    base: ModelParams,
    parameter: str,
    values: list[float],
    ode: OdeControls | None = None,
    eta_tol: float = 1e-12,
    threads: int = 1,
) -> list[dict]:
    """Solve every value; rows come back in input order regardless of scheduling."""
    if parameter not in SWEEPABLE:
        raise UsageError(f"unknown sweep parameter {parameter!r}; choose from {SWEEPABLE}")
    ode = ode or OdeControls()
    payloads = [
        (dataclasses.asdict(base), parameter, float(v), dataclasses.asdict(ode), eta_tol)
        for v in values
    ]
    if threads <= 1:
        return [sweep_point(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(sweep_point, payloads))
