"""Adaptive Dormand-Prince 4(5) integration in the direction of decreasing t.

Small explicit integrator for systems of a handful of equations.  States are
plain tuples of floats; the stepper is deterministic (no randomized pivots or
timing-dependent branches), so identical inputs give bit-identical output.
Stop predicates are localized within the step by bisection on a cubic Hermite
interpolant, which is what the exit-classification layer needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError

State = tuple[float, ...]
Rhs = Callable[[float, State], Sequence[float]]
StopPredicate = Callable[[float, State], bool]

# Dormand-Prince 5(4) tableau (FSAL: the propagating weights are row 7).
_C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)
_A = (
    (),
    (1.0 / 5.0,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0),
)
_B = _A[6]
_E = (71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
      -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

STOP_LOCALIZE_REL_TOL = 1e-10  # within-step bisection tolerance in t


class Termination(Enum):
    PREDICATE_HIT = "predicate_hit"
    REACHED_ENDPOINT = "reached_endpoint"
    STEP_BUDGET_EXHAUSTED = "step_budget_exhausted"
    STEP_UNDERFLOW = "step_underflow"


@dataclass(frozen=True)
class OdeControls:
    """Step-size control knobs.

    Defaults target local error well below the 1e-6 residual certificates
    the downstream checks impose.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    min_step: float = 1e-14
    max_steps: int = 10**6
    max_rel_step: float | None = None  # cap |dt| <= max_rel_step * |t|

    def __post_init__(self) -> None:
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValidationError("tolerances must be positive")
        if not (0 < self.min_step < self.max_step):
            raise ValidationError("need 0 < min_step < max_step")
        if self.max_steps < 1:
            raise ValidationError("max_steps must be >= 1")
        if self.max_rel_step is not None and not (self.max_rel_step > 0):
            raise ValidationError("max_rel_step must be positive when set")


@dataclass
class Trajectory:
    """Sampled solution with strictly decreasing ``ts``."""

    ts: np.ndarray
    states: np.ndarray  # shape (len(ts), dim)
    termination: Termination
    n_accepted: int
    n_rejected: int

    @property
    def t_final(self) -> float:
        return float(self.ts[-1])

    @property
    def final_state(self) -> State:
        return tuple(self.states[-1])


def _hermite(t0, y0, f0, t1, y1, f1, t):
    """Cubic Hermite value at t for the step [t0, t1] (t1 < t0 allowed)."""
    dt = t1 - t0
    s = (t - t0) / dt
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    return tuple(
        h00 * a + h10 * dt * fa + h01 * b + h11 * dt * fb
        for a, fa, b, fb in zip(y0, f0, y1, f1)
    )


def _try_step(rhs: Rhs, t: float, y: State, f0: Sequence[float], h_signed: float):
    """One DP45 attempt; returns (y_new, f_new, err) or None if a stage blew up."""
    k = [tuple(f0)]
    try:
        for i in range(1, 7):
            ti = t + _C[i] * h_signed
            ai = _A[i]
            yi = tuple(
                y[j] + h_signed * sum(ai[m] * k[m][j] for m in range(i))
                for j in range(len(y))
            )
            fi = tuple(float(v) for v in rhs(ti, yi))
            if any(not math.isfinite(v) for v in fi):
                return None
            k.append(fi)
    except (ValueError, ZeroDivisionError, OverflowError, FloatingPointError):
        return None
    y_new = tuple(
        y[j] + h_signed * sum(_B[m] * k[m][j] for m in range(6))
        for j in range(len(y))
    )
    if any(not math.isfinite(v) for v in y_new):
        return None
    # k7 = f(t+h, y_new); FSAL stage, reused as the next step's k1
    f_new = k[6]
    err = tuple(
        h_signed * (sum(_E[m] * k[m][j] for m in range(6)) + _E[6] * f_new[j])
        for j in range(len(y))
    )
    return y_new, f_new, err


def _fill_times(t0: float, t1: float, rel_spacing: float):
    """Interior sample times between t0 and t1 capping |dt| <= rel_spacing*|t|."""
    if t0 > 0.0 and t1 > 0.0:
        n = int(math.ceil(abs(math.log(t1 / t0)) / rel_spacing))
        if n <= 1:
            return []
        return list(np.geomspace(t0, t1, n + 1)[1:-1])
    span = abs(t1 - t0)
    scale = max(abs(t0), abs(t1), span)
    n = int(math.ceil(span / (rel_spacing * scale)))
    if n <= 1:
        return []
    return list(np.linspace(t0, t1, n + 1)[1:-1])


def integrate_decreasing(
    rhs: Rhs,
    t_start: float,
    state0: Sequence[float],
    t_end: float,
    stop: StopPredicate | None = None,
    controls: OdeControls | None = None,
    dense_rel_spacing: float | None = None,
) -> Trajectory:
    """Integrate ``state' = rhs(t, state)`` from ``t_start`` down to ``t_end``.

    Parameters
    ----------
    stop : optional predicate; when it flips to True at an accepted step the
        crossing is localized by bisection on the step interpolant to relative
        tolerance ``STOP_LOCALIZE_REL_TOL`` in t, and integration ends with
        ``Termination.PREDICATE_HIT``.
    dense_rel_spacing : if given, interpolated samples are inserted so that
        consecutive sample times satisfy |dt| <= dense_rel_spacing * |t|.

    Step-size failures are reported through ``Trajectory.termination`` rather
    than raised, so a shooting layer can classify them.
    """
    controls = controls or OdeControls()
    if not (t_end < t_start):
        raise ValidationError(f"need t_end < t_start (got {t_end} >= {t_start})")
    y = tuple(float(v) for v in state0)
    if stop is not None and stop(t_start, y):
        raise ValidationError("stop predicate already true at t_start")

    t = t_start
    f = tuple(float(v) for v in rhs(t, y))
    ts = [t]
    states = [y]
    h = min(controls.max_step, (t_start - t_end) * 1e-3)
    h = max(h, controls.min_step)
    n_acc = 0
    n_rej = 0
    inv_order = 1.0 / 5.0

    termination = Termination.REACHED_ENDPOINT
    for _ in range(controls.max_steps):
        if t - t_end <= 0.0:
            break
        h = min(h, controls.max_step, t - t_end)
        if controls.max_rel_step is not None:
            h = min(h, controls.max_rel_step * max(abs(t), controls.min_step))
        attempt = _try_step(rhs, t, y, f, -h)
        if attempt is None:
            err_norm = math.inf
        else:
            y_new, f_new, err = attempt
            acc = 0.0
            for j in range(len(y)):
                sc = controls.abs_tol + controls.rel_tol * max(abs(y[j]), abs(y_new[j]))
                acc += (err[j] / sc) ** 2
            err_norm = math.sqrt(acc / len(y))

        if err_norm > 1.0:
            n_rej += 1
            factor = 0.2 if not math.isfinite(err_norm) else max(0.2, 0.9 * err_norm**-inv_order)
            h *= factor
            if h < controls.min_step:
                termination = Termination.STEP_UNDERFLOW
                break
            continue

        n_acc += 1
        t_new = t - h

        def interp(tt: float) -> State:
            return _hermite(t, y, f, t_new, y_new, f_new, tt)

        hit = stop is not None and stop(t_new, y_new)
        if hit:
            # bisect [t (false), t_new (true)] on the step interpolant
            a, b = t, t_new
            scale = max(abs(a), abs(b), 1e-300)
            while abs(a - b) > STOP_LOCALIZE_REL_TOL * scale:
                mid = 0.5 * (a + b)
                if stop(mid, interp(mid)):
                    b = mid
                else:
                    a = mid
            if dense_rel_spacing is not None:
                for tt in _fill_times(t, b, dense_rel_spacing):
                    ts.append(float(tt))
                    states.append(interp(float(tt)))
            ts.append(b)
            states.append(interp(b) if b != t_new else y_new)
            termination = Termination.PREDICATE_HIT
            break

        if dense_rel_spacing is not None:
            for tt in _fill_times(t, t_new, dense_rel_spacing):
                ts.append(float(tt))
                states.append(interp(float(tt)))
        ts.append(t_new)
        states.append(y_new)
        t, y, f = t_new, y_new, f_new
        if err_norm == 0.0:
            h *= 5.0
        else:
            h *= min(5.0, max(0.2, 0.9 * err_norm**-inv_order))
    else:
        termination = Termination.STEP_BUDGET_EXHAUSTED

    return Trajectory(
        ts=np.asarray(ts, dtype=float),
        states=np.asarray(states, dtype=float),
        termination=termination,
        n_accepted=n_acc,
        n_rejected=n_rej,
    )
