"""Free-boundary solve for the coupled (phi, H) system.

The solve has two legs.  A bisection on the trial boundary eta classifies
backward-shot trajectories by which face of the admissible box they exit
(top: H reaches kappa/rho; bottom: H reaches 0) and pins the free boundary
y* where the classification flips.  Because the critical trajectory is an
unstable manifold of the backward flow, double precision cannot follow it
all the way to the numerical floor y_min: amplified roundoff ejects even
the converged-bracket trajectories at moderate y.  The deep tail is
therefore rebuilt in the stable direction: a reduced march along the
slaved-H curve supplies a starting guess phi(y_min), a forward integration
(strongly contracting onto the same trajectory) is anchored by a bracketed
secant so that phi matches the backward leg at a seam where the two
bracket trajectories still agree, and the legs are concatenated.  The seam
mismatch is recorded and certified small.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import DomainError, NoSignChangeError, SolverError, TailUnderflowError
from .ode import OdeControls, Termination, Trajectory, integrate_decreasing
from .params import DerivedConstants

H_CONTACT_BAND_FRAC = 1e-8     # boundary-contact band, as a fraction of kappa/rho
PHI_ZERO_BAND_FRAC = 1e-12     # phi considered collapsed below this fraction of alpha**-gamma
Y_MIN_FRAC = 1e-6              # numerical floor, as a fraction of eta1
DEFAULT_ETA_TOL = 1e-12
DEFAULT_SEAM_TOL = 1e-10


class ExitKind(Enum):
    EXIT_TOP = "exit_top"
    EXIT_BOTTOM = "exit_bottom"
    EXIT_PHI_ZERO = "exit_phi_zero"
    REACHED_YMIN = "reached_ymin"
    INTEGRATOR_STALL = "integrator_stall"


_TOP_SIDE = {ExitKind.EXIT_TOP}
# A phi -> 0 collapse indicates drift toward the bottom regime and is
# classified on the bottom side for bisection purposes.
_BOTTOM_SIDE = {ExitKind.EXIT_BOTTOM, ExitKind.EXIT_PHI_ZERO}


@dataclass
class ShootingOutcome:
    eta: float
    exit: ExitKind
    exit_point: tuple[float, float, float]  # (y, phi, H)
    trajectory: Trajectory

    @property
    def exit_y(self) -> float:
        return self.exit_point[0]


def rhs_phi_H(y: float, phi: float, H: float, consts: DerivedConstants) -> tuple[float, float]:
    """Right-hand side (dphi/dy, dH/dy) of the coupled first-order system."""
    if y <= 0.0:
        raise DomainError(f"y must be positive (got {y})")
    if phi <= 0.0:
        raise DomainError(f"phi must be positive (got {phi})")
    p = consts.params
    kr = consts.h_top
    w = (p.rho / (consts.kappa * y)) * (kr - H)
    dphi = w * phi
    dH = (
        w * (phi ** (-1.0 / p.gamma) - H - (p.r + p.rho - p.delta) / p.rho)
        + (p.r + p.rho) / (p.rho * phi)
        - p.delta / (p.rho * y)
    )
    return dphi, dH


def boundary_H(eta: float, consts: DerivedConstants) -> float:
    """Boundary value of H at a trial free boundary eta."""
    return consts.h_top * (1.0 - consts.lam * (1.0 - eta / consts.eta1))


def _make_rhs(consts: DerivedConstants):
    """Closure over plain floats; the hot path of every shot."""
    p = consts.params
    kr = consts.h_top
    inv_kappa = p.rho / consts.kappa
    neg_inv_gamma = -1.0 / p.gamma
    crd = (p.r + p.rho - p.delta) / p.rho
    c_phi = (p.r + p.rho) / p.rho
    c_y = p.delta / p.rho

    def rhs(y, s):
        phi, H = s
        if y <= 0.0 or phi <= 0.0:
            raise ValueError("left domain")
        w = inv_kappa / y * (kr - H)
        return (
            w * phi,
            w * (phi**neg_inv_gamma - H - crd) + c_phi / phi - c_y / y,
        )

    return rhs


def _make_stop(consts: DerivedConstants):
    kr = consts.h_top
    h_band = H_CONTACT_BAND_FRAC * kr
    phi_floor = PHI_ZERO_BAND_FRAC * consts.alpha_pow

    def stop(t, s):
        phi, H = s
        return H >= kr - h_band or H <= h_band or phi <= phi_floor

    return stop


def _classify(traj: Trajectory, consts: DerivedConstants) -> ExitKind:
    kr = consts.h_top
    h_band = H_CONTACT_BAND_FRAC * kr
    phi, H = traj.final_state
    if traj.termination is Termination.PREDICATE_HIT:
        if H >= kr - h_band:
            return ExitKind.EXIT_TOP
        if H <= h_band:
            return ExitKind.EXIT_BOTTOM
        return ExitKind.EXIT_PHI_ZERO
    if traj.termination is Termination.REACHED_ENDPOINT:
        return ExitKind.REACHED_YMIN
    return ExitKind.INTEGRATOR_STALL


def shoot(
    eta: float,
    consts: DerivedConstants,
    controls: OdeControls | None = None,
    y_min: float | None = None,
    dense_rel_spacing: float | None = None,
) -> ShootingOutcome:
    """Integrate backward from a trial boundary eta and classify the exit.

    Starts at phi(eta) = alpha**(-gamma), H(eta) given by :func:`boundary_H`,
    and runs down toward ``y_min`` unless a face of the admissible box is
    contacted first.  Integrator stalls are reported as
    ``ExitKind.INTEGRATOR_STALL`` rather than raised.
    """
    if not (consts.eta1 < eta < consts.eta2):
        raise DomainError(f"eta={eta} outside (eta1, eta2)=({consts.eta1}, {consts.eta2})")
    y_min = Y_MIN_FRAC * consts.eta1 if y_min is None else y_min
    traj = integrate_decreasing(
        _make_rhs(consts),
        eta,
        (consts.alpha_pow, boundary_H(eta, consts)),
        y_min,
        stop=_make_stop(consts),
        controls=controls,
        dense_rel_spacing=dense_rel_spacing,
    )
    kind = _classify(traj, consts)
    phi, H = traj.final_state
    return ShootingOutcome(eta=eta, exit=kind, exit_point=(traj.t_final, phi, H), trajectory=traj)


@dataclass
class FbpSolution:
    """Free boundary y* plus the sampled trajectory on [y_min, y*].

    ``ys`` is strictly decreasing with ``ys[0] == y_star``.  ``phi_at`` and
    ``H_at`` are cubic Hermite interpolants built from the exact nodal
    derivatives of the differential system, which keeps the interpolation
    error fourth order uniformly (endpoint intervals included) at the
    stored spacing; monotonicity of phi between samples is verified at
    construction and the build falls back to the monotone PCHIP form if a
    probe ever failed.
    """

    y_star: float
    ys: np.ndarray
    phis: np.ndarray
    Hs: np.ndarray
    y_min: float
    bisection_iterations: int
    bracket_history: list[tuple[float, str, float]]
    consts: DerivedConstants
    tail_extended: bool = False
    seam_y: float = math.nan
    seam_dphi_rel: float = math.nan
    seam_dH: float = math.nan
    anchor_iterations: int = 0
    phi_at: CubicHermiteSpline = field(init=False, repr=False)
    H_at: CubicHermiteSpline = field(init=False, repr=False)
    _dphi_at: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self) -> None:
        inc = slice(None, None, -1)
        if not np.all(np.diff(self.ys) < 0):
            raise SolverError("stored grid is not strictly decreasing in y")
        if not np.all(np.diff(self.phis) < 0):
            raise SolverError("phi is not strictly increasing in y on the grid")
        if self.phis[0] != self.consts.alpha_pow:
            raise SolverError("phi(y_star) != alpha**-gamma")
        if not (self.Hs.min() > 0.0 and self.Hs.max() <= self.consts.h_top):
            raise SolverError("H left (0, kappa/rho] on the grid")
        y_inc = self.ys[inc]
        phi_inc = self.phis[inc]
        H_inc = self.Hs[inc]
        dphi_inc, dH_inc = _rhs_on_grid(y_inc, phi_inc, H_inc, self.consts)
        phi_sp = CubicHermiteSpline(y_inc, phi_inc, dphi_inc, extrapolate=False)
        if _is_increasing(phi_sp, y_inc):
            self.phi_at = phi_sp
        else:
            self.phi_at = PchipInterpolator(y_inc, phi_inc, extrapolate=False)
        self.H_at = CubicHermiteSpline(y_inc, H_inc, dH_inc, extrapolate=False)
        self._dphi_at = self.phi_at.derivative()

    @property
    def H_at_y_min(self) -> float:
        return float(self.Hs[-1])

    def phi(self, y):
        return self._eval(self.phi_at, y)

    def H(self, y):
        return self._eval(self.H_at, y)

    def dphi(self, y):
        return self._eval(self._dphi_at, y)

    def _eval(self, interp, y):
        y_arr = np.asarray(y, dtype=float)
        lo = self.ys[-1] * (1.0 - 1e-12)
        hi = self.ys[0] * (1.0 + 1e-12)
        if np.any(y_arr < lo) or np.any(y_arr > hi):
            raise DomainError(
                f"y outside stored range [{self.ys[-1]}, {self.ys[0]}]"
            )
        out = interp(np.clip(y_arr, self.ys[-1], self.ys[0]))
        return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


def _rhs_on_grid(y: np.ndarray, phi: np.ndarray, H: np.ndarray, consts: DerivedConstants):
    """Vectorized system right-hand side at stored nodes."""
    p = consts.params
    kr = consts.h_top
    w = (p.rho / (consts.kappa * y)) * (kr - H)
    dphi = w * phi
    dH = (
        w * (phi ** (-1.0 / p.gamma) - H - (p.r + p.rho - p.delta) / p.rho)
        + (p.r + p.rho) / (p.rho * phi)
        - p.delta / (p.rho * y)
    )
    return dphi, dH


def _is_increasing(spline: CubicHermiteSpline, y_inc: np.ndarray) -> bool:
    """Probe the spline derivative inside every interval."""
    d = spline.derivative()
    for frac in (0.25, 0.5, 0.75):
        probe = y_inc[:-1] + frac * np.diff(y_inc)
        if not np.all(d(probe) > 0.0):
            return False
    return True


def _h_slaved(y: float, phi: float, consts: DerivedConstants) -> float:
    """Positive root of the balance h**2 + A*h - R = 0 on the slaved-H curve."""
    p = consts.params
    kr = consts.h_top
    a_coef = phi ** (-1.0 / p.gamma) - kr - (p.r + p.rho - p.delta) / p.rho
    r_coef = kr * (p.delta / p.rho - (p.r + p.rho) * y / (p.rho * phi))
    disc = a_coef * a_coef + 4.0 * r_coef
    if disc < 0.0:
        return math.nan
    return 0.5 * (-a_coef + math.sqrt(disc))


def _march_phi_guess(y_from: float, phi_from: float, y_to: float,
                     consts: DerivedConstants, n_steps: int = 4000) -> float:
    """RK4 march of the reduced slaved-manifold flow in s = ln y."""
    p = consts.params
    c = p.rho / consts.kappa

    def f(s, phi):
        h = _h_slaved(math.exp(s), phi, consts)
        if not math.isfinite(h):
            h = 0.0
        return c * max(h, 0.0) * phi

    s0, s1 = math.log(y_from), math.log(y_to)
    h_step = (s1 - s0) / n_steps
    s, phi = s0, phi_from
    for _ in range(n_steps):
        k1 = f(s, phi)
        k2 = f(s + 0.5 * h_step, phi + 0.5 * h_step * k1)
        k3 = f(s + 0.5 * h_step, phi + 0.5 * h_step * k2)
        k4 = f(s + h_step, phi + h_step * k3)
        phi += h_step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        s += h_step
    return phi


def _forward_leg(phi0: float, y_min: float, y_sw: float, consts: DerivedConstants,
                 controls: OdeControls, dense_rel_spacing: float | None):
    """Integrate the system upward from y_min to y_sw via tau = 1/y.

    Returns (status, trajectory): status "ok" when y_sw is reached, "low"
    ("phi0 too small" side) or "high" when a box face was contacted first.
    """
    h0 = _h_slaved(y_min, phi0, consts)
    kr = consts.h_top
    h_band = H_CONTACT_BAND_FRAC * kr
    if not math.isfinite(h0) or h0 <= h_band:
        return "low", None
    rhs_y = _make_rhs(consts)

    def rhs_tau(tau, s):
        y = 1.0 / tau
        d = rhs_y(y, s)
        scale = -y * y
        return (scale * d[0], scale * d[1])

    stop = _make_stop(consts)
    traj = integrate_decreasing(
        rhs_tau,
        1.0 / y_min,
        (phi0, kr - h0),
        1.0 / y_sw,
        stop=lambda t, s: stop(t, s),
        controls=controls,
        dense_rel_spacing=dense_rel_spacing,
    )
    if traj.termination is Termination.REACHED_ENDPOINT:
        return "ok", traj
    if traj.termination is Termination.PREDICATE_HIT:
        phi, H = traj.final_state
        if H >= kr - h_band or phi <= PHI_ZERO_BAND_FRAC * consts.alpha_pow:
            return "low", traj
        return "high", traj
    raise TailUnderflowError(f"forward leg stalled: {traj.termination}")


def _anchor_tail(phi_guess: float, phi_target: float, y_min: float, y_sw: float,
                 consts: DerivedConstants, controls: OdeControls):
    """Bracketed secant on phi(y_min) so the forward leg hits phi_target at y_sw.

    In strongly contracting regimes the seam gap bottoms out well above
    machine precision no matter how precisely phi(y_min) is tuned; the loop
    detects that plateau and accepts the best value reached instead of
    burning its full iteration budget.
    """

    def g(phi0):
        status, traj = _forward_leg(phi0, y_min, y_sw, consts, controls, None)
        if status == "ok":
            return math.log(traj.states[-1][0] / phi_target)
        return -math.inf if status == "low" else math.inf

    lo = hi = phi_guess
    g_lo = g(lo)
    tries = 0
    while not (g_lo < 0.0) and tries < 120:
        lo *= 0.75
        g_lo = g(lo)
        tries += 1
    g_hi = g(hi)
    while not (g_hi > 0.0) and tries < 240:
        hi *= 1.25
        g_hi = g(hi)
        tries += 1
    if not (g_lo < 0.0 < g_hi):
        raise TailUnderflowError(
            f"could not bracket the tail anchor around phi_guess={phi_guess}"
        )
    iters = 0
    best_phi, best_g = None, math.inf
    stall = 0
    for _ in range(60):
        iters += 1
        if math.isfinite(g_lo) and math.isfinite(g_hi):
            m = lo - g_lo * (hi - lo) / (g_hi - g_lo)
            if not (lo < m < hi):
                m = 0.5 * (lo + hi)
        else:
            m = 0.5 * (lo + hi)
        g_m = g(m)
        if math.isfinite(g_m) and abs(g_m) < best_g:
            if abs(g_m) > 0.25 * best_g:
                stall += 1
            else:
                stall = 0
            best_phi, best_g = m, abs(g_m)
        else:
            stall += 1
        if best_g < 1e-13:
            break
        if stall >= 3 and best_phi is not None:
            break
        if g_m < 0.0:
            lo, g_lo = m, g_m
        else:
            hi, g_hi = m, g_m
        if (hi - lo) < 4e-16 * hi:
            break
    if best_phi is None:
        raise TailUnderflowError("tail anchor did not converge")
    return best_phi, iters


def _hermite_pair(traj: Trajectory, consts: DerivedConstants):
    rev = slice(None, None, -1)
    y = traj.ts[rev]
    phi = traj.states[rev, 0]
    H = traj.states[rev, 1]
    dphi, dH = _rhs_on_grid(y, phi, H, consts)
    return (
        CubicHermiteSpline(y, phi, dphi),
        CubicHermiteSpline(y, H, dH),
    )


def _seam_location(head: Trajectory, other: Trajectory, y_star: float,
                   seam_tol: float, consts: DerivedConstants):
    """Deepest y at which the two final-bracket trajectories agree, at the
    tightest achievable tolerance.

    A tighter seam keeps the kink between the backward head and the anchored
    forward tail below what the residual certificates can see; the tolerance
    ladder relaxes toward ``seam_tol`` only when the brackets never agree
    more closely.
    """
    p_head, q_head = _hermite_pair(head, consts)
    p_other, q_other = _hermite_pair(other, consts)
    y_low = max(head.t_final, other.t_final) * (1.0 + 1e-9)
    y_high = y_star * (1.0 - 1e-6)
    if y_low >= y_high:
        raise TailUnderflowError("bracket trajectories exit immediately below y*")
    probes = np.geomspace(y_low, y_high, 800)
    dphi = np.abs(p_head(probes) / p_other(probes) - 1.0)
    dH = np.abs(q_head(probes) - q_other(probes)) / consts.h_top
    mismatch = np.maximum(dphi, dH)
    floor = float(np.min(mismatch))
    if floor > max(1e-4, seam_tol):
        raise TailUnderflowError(
            f"final bracket trajectories never agree (best mismatch {floor:.3e})"
        )
    agree = mismatch < max(seam_tol, 4.0 * floor, 1e-14)
    y_sw = float(probes[np.argmax(agree)])
    return y_sw, float(p_head(y_sw)), float(q_head(y_sw))


def _min_spacing_filter(ys: np.ndarray, states: np.ndarray, min_rel: float = 2e-4):
    """Drop nodes closer than ``min_rel`` (relative) to their kept neighbor.

    Tiny intervals arise where a clipped final step or a seam junction lands
    next to a regular node; they would destabilize the finite-difference
    certificates without adding information.
    """
    keep = [0]
    last = ys[0]
    for i in range(1, len(ys) - 1):
        if abs(ys[i] - last) >= min_rel * abs(last):
            keep.append(i)
            last = ys[i]
    if len(keep) > 1 and abs(ys[-1] - last) < min_rel * abs(last):
        keep.pop()
    keep.append(len(ys) - 1)
    idx = np.asarray(keep)
    return ys[idx], states[idx]


def solve_free_boundary(
    consts: DerivedConstants,
    controls: OdeControls | None = None,
    eta_tol: float = DEFAULT_ETA_TOL,
    y_min: float | None = None,
    bracket_frac: float = 1e-3,
    grid_rel_step: float = 5e-3,
    seam_tol: float = DEFAULT_SEAM_TOL,
) -> FbpSolution:
    """Locate y* by bisection on the exit side and assemble the full grid.

    Bisection trials run with unconstrained step sizes; the trajectories that
    are *stored* are re-integrated with steps capped at ``grid_rel_step``
    relative to y, so every stored node carries integrator-grade accuracy at
    a spacing fine enough for the downstream residual certificates.

    Raises
    ------
    NoSignChangeError
        if the initial bracket endpoints classify on the same side.
    TailUnderflowError
        if the trajectory cannot be continued down to ``y_min``.
    """
    controls = controls or OdeControls()
    grid_controls = dataclasses.replace(controls, max_rel_step=grid_rel_step)
    # with loose integrator or bisection tolerances the bracket trajectories
    # cannot agree tightly; degrade the seam requirement instead of failing
    seam_tol = max(seam_tol, 10.0 * controls.rel_tol, 10.0 * eta_tol)
    y_min = Y_MIN_FRAC * consts.eta1 if y_min is None else y_min
    span = consts.eta2 - consts.eta1
    eta_lo = consts.eta1 + bracket_frac * span
    eta_hi = consts.eta2 - bracket_frac * span
    if not (consts.eta1 < eta_lo < eta_hi < consts.eta2):
        raise SolverError(
            "bracket (eta1, eta2) degenerates at this parameter set "
            f"(width {span:.3e}); the market is too close to kappa = 0"
        )

    history: list[tuple[float, str, float]] = []

    def record(out: ShootingOutcome) -> ShootingOutcome:
        history.append((out.eta, out.exit.value, out.exit_y))
        return out

    out_lo = record(shoot(eta_lo, consts, controls, y_min))
    out_hi = record(shoot(eta_hi, consts, controls, y_min))
    accepted_eta = None
    for out in (out_lo, out_hi):
        if out.exit is ExitKind.REACHED_YMIN:
            accepted_eta = out.eta
        elif out.exit is ExitKind.INTEGRATOR_STALL:
            raise SolverError(f"integrator stalled at eta={out.eta}")
    iterations = 0
    lo, hi = eta_lo, eta_hi
    if accepted_eta is None:
        if out_lo.exit not in _TOP_SIDE or out_hi.exit not in _BOTTOM_SIDE:
            raise NoSignChangeError(
                f"bracket endpoints classify as ({out_lo.exit.value}, {out_hi.exit.value}); "
                "expected (exit_top, exit_bottom)"
            )
        while (hi - lo) > eta_tol * hi:
            iterations += 1
            if iterations > 200:
                raise SolverError("bisection failed to converge in 200 iterations")
            mid = 0.5 * (lo + hi)
            out = record(shoot(mid, consts, controls, y_min))
            if out.exit is ExitKind.REACHED_YMIN:
                accepted_eta = mid  # converged: the trajectory is pinched against H = kappa/rho
                break
            if out.exit is ExitKind.INTEGRATOR_STALL:
                raise SolverError(f"integrator stalled at eta={mid}")
            if out.exit in _TOP_SIDE:
                lo = mid
            else:
                hi = mid
        if accepted_eta is None:
            accepted_eta = lo

    y_star = accepted_eta
    head = shoot(y_star, consts, grid_controls, y_min)
    ys = head.trajectory.ts
    states = head.trajectory.states

    tail_extended = False
    seam_y = seam_dphi = seam_dH = math.nan
    anchor_iters = 0
    if head.trajectory.t_final > y_min * (1.0 + 1e-9):
        # deep tail unreachable by backward shooting: rebuild it forward,
        # using the live bottom-side bracket endpoint as the comparison shot
        other = shoot(hi, consts, grid_controls, y_min)
        y_sw, phi_sw, H_sw = _seam_location(head.trajectory, other.trajectory, y_star, seam_tol, consts)
        phi_guess = _march_phi_guess(y_sw, phi_sw, y_min, consts)
        phi0, anchor_iters = _anchor_tail(phi_guess, phi_sw, y_min, y_sw, consts, grid_controls)
        status, fwd = _forward_leg(phi0, y_min, y_sw, consts, grid_controls, None)
        if status != "ok":
            raise TailUnderflowError("anchored forward leg left the admissible box")
        seam_y = y_sw
        seam_dphi = float(fwd.states[-1][0] / phi_sw - 1.0)
        seam_dH = float(fwd.states[-1][1] - H_sw)
        keep = ys > y_sw
        y_fwd = 1.0 / fwd.ts            # increasing y from y_min to y_sw
        ys = np.concatenate([ys[keep], y_fwd[::-1]])
        states = np.concatenate([states[keep], fwd.states[::-1]])
        tail_extended = True

    ys, states = _min_spacing_filter(ys, states)
    return FbpSolution(
        y_star=y_star,
        ys=ys,
        phis=states[:, 0],
        Hs=states[:, 1],
        y_min=y_min,
        bisection_iterations=iterations,
        bracket_history=history,
        consts=consts,
        tail_extended=tail_extended,
        seam_y=seam_y,
        seam_dphi_rel=seam_dphi,
        seam_dH=seam_dH,
        anchor_iterations=anchor_iters,
    )
