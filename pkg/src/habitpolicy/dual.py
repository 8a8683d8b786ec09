"""Piecewise dual function u(y) with derivatives and residual certificates.

Above the free boundary u has the closed power-law form; below it u is
assembled from the interpolated (phi, H) trajectory.  The residual operation
is a runtime certificate: on the closed branch it vanishes to roundoff by
construction, while on the trajectory branch it measures how well the
interpolated phi actually solves its differential equation (the second
derivative is taken from the interpolant, not from the algebraic identity,
otherwise the check would be vacuous).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .fbp import FbpSolution
from .params import DerivedConstants


@dataclass
class DualSolution:
    fbp: FbpSolution
    consts: DerivedConstants

    def __post_init__(self) -> None:
        c = self.consts
        ys = self.fbp.y_star
        num = ys * (1.0 + c.params.rho * c.x_floor) - c.alpha_pow
        self.coef_C = num / (c.params.rho * c.lam * ys**c.lam)

    @property
    def y_star(self) -> float:
        return self.fbp.y_star

    @property
    def y_min(self) -> float:
        return self.fbp.y_min

    def _split(self, y):
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any(y_arr < self.y_min * (1.0 - 1e-12)):
            raise DomainError(f"u(y) undefined below y_min={self.y_min}")
        above = y_arr >= self.y_star
        return y_arr, above

    def _wrap(self, y, out):
        return float(out[0]) if np.ndim(y) == 0 else out

    def u(self, y):
        """Dual value; closed form for y >= y*, (phi, H) form below."""
        c = self.consts
        p = c.params
        y_arr, above = self._split(y)
        out = np.empty_like(y_arr)
        if above.any():
            ya = y_arr[above]
            out[above] = self.coef_C * ya**c.lam - c.x_floor * ya + c.u_floor_const
        if (~above).any():
            yb = y_arr[~above]
            phi = self.fbp.phi(yb)
            H = self.fbp.H(yb)
            out[~above] = (
                phi * H
                + p.gamma / (1.0 - p.gamma) * phi ** (1.0 - 1.0 / p.gamma)
                + (p.r + p.rho - p.delta) / p.rho * (phi - yb)
            ) / p.delta
        return self._wrap(y, out)

    def u_prime(self, y):
        c = self.consts
        p = c.params
        y_arr, above = self._split(y)
        out = np.empty_like(y_arr)
        if above.any():
            ya = y_arr[above]
            out[above] = self.coef_C * c.lam * ya ** (c.lam - 1.0) - c.x_floor
        if (~above).any():
            yb = y_arr[~above]
            out[~above] = (1.0 - self.fbp.phi(yb) / yb) / p.rho
        return self._wrap(y, out)

    def u_second(self, y):
        c = self.consts
        y_arr, above = self._split(y)
        out = np.empty_like(y_arr)
        if above.any():
            ya = y_arr[above]
            out[above] = self.coef_C * c.lam * (c.lam - 1.0) * ya ** (c.lam - 2.0)
        if (~above).any():
            yb = y_arr[~above]
            out[~above] = self.fbp.phi(yb) * self.fbp.H(yb) / (c.kappa * yb * yb)
        return self._wrap(y, out)

    def dual_residual(self, y):
        """Left-minus-right residual of the dual ODE on the applicable branch.

        Below y*, u'' is obtained from the derivative of the phi interpolant
        so the residual genuinely certifies the stored trajectory.
        """
        c = self.consts
        p = c.params
        y_arr, above = self._split(y)
        out = np.empty_like(y_arr)
        if above.any():
            ya = y_arr[above]
            u = self.coef_C * ya**c.lam - c.x_floor * ya + c.u_floor_const
            up = self.coef_C * c.lam * ya ** (c.lam - 1.0) - c.x_floor
            upp = self.coef_C * c.lam * (c.lam - 1.0) * ya ** (c.lam - 2.0)
            lhs = (
                -c.kappa * ya * ya * upp
                + (p.r + p.rho * (1.0 - p.alpha) - p.delta) * ya * up
                + p.delta * u
            )
            rhs = p.alpha ** (1.0 - p.gamma) / (1.0 - p.gamma) - p.alpha * ya
            out[above] = lhs - rhs
        if (~above).any():
            yb = y_arr[~above]
            phi = self.fbp.phi(yb)
            H = self.fbp.H(yb)
            dphi = self.fbp.dphi(yb)
            u = (
                phi * H
                + p.gamma / (1.0 - p.gamma) * phi ** (1.0 - 1.0 / p.gamma)
                + (p.r + p.rho - p.delta) / p.rho * (phi - yb)
            ) / p.delta
            up = (1.0 - phi / yb) / p.rho
            upp_num = phi / (p.rho * yb * yb) - dphi / (p.rho * yb)
            lhs = -c.kappa * yb * yb * upp_num + (p.r + p.rho - p.delta) * yb * up + p.delta * u
            rhs = p.gamma / (1.0 - p.gamma) * phi ** (1.0 - 1.0 / p.gamma)
            out[~above] = lhs - rhs
        return self._wrap(y, out)

    def default_y_grid(self, n: int = 400) -> np.ndarray:
        """Log-spaced grid [y_min, 100 y*] used for reports and certificates."""
        return np.geomspace(self.y_min, 100.0 * self.y_star, n)

    def pasting_gaps(self, eps: float = 1e-6) -> tuple[float, float, float]:
        """Relative mismatch of (u, u', u'') between the trajectory branch
        evaluated just below y* and the closed branch at the same point.

        Evaluation stays inside the stored grid, so a free boundary that is
        inconsistent with the grid shows up as a large gap instead of a
        range error.
        """
        y = min(self.y_star, float(self.fbp.ys[0])) * (1.0 - eps)
        c = self.consts
        p = c.params
        phi = self.fbp.phi(y)
        H = self.fbp.H(y)
        u_m = (
            phi * H
            + p.gamma / (1.0 - p.gamma) * phi ** (1.0 - 1.0 / p.gamma)
            + (p.r + p.rho - p.delta) / p.rho * (phi - y)
        ) / p.delta
        up_m = (1.0 - phi / y) / p.rho
        upp_m = phi * H / (c.kappa * y * y)
        u_p = self.coef_C * y**c.lam - c.x_floor * y + c.u_floor_const
        up_p = self.coef_C * c.lam * y ** (c.lam - 1.0) - c.x_floor
        upp_p = self.coef_C * c.lam * (c.lam - 1.0) * y ** (c.lam - 2.0)
        return (
            abs(u_m / u_p - 1.0),
            abs(up_m / up_p - 1.0),
            abs(upp_m / upp_p - 1.0),
        )

    def free_boundary_residual(self) -> float:
        """y* - rho*y**u'(y*) - alpha**-gamma (should vanish)."""
        c = self.consts
        ys = self.y_star
        return ys - c.params.rho * ys * self.u_prime(ys) - c.alpha_pow

    def u_upper_bound(self) -> float:
        """(kappa + r + rho - delta) * alpha**-gamma / (delta*rho)."""
        c = self.consts
        p = c.params
        return (c.kappa + p.r + p.rho - p.delta) * c.alpha_pow / (p.delta * p.rho)

    def phi_ode_residual_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Second-order phi-ODE residual at interior grid nodes.

        phi' and phi'' come from five-point finite differences (a local
        quartic fit, exact on any node spacing), so this cross-checks the
        whole (phi, H) solve without using H.
        """
        c = self.consts
        p = c.params
        y = self.fbp.ys[::-1]
        phi = self.fbp.phis[::-1]
        idx = np.arange(2, y.size - 2)
        offs = np.arange(-2, 3)
        win_y = y[idx[:, None] + offs]
        win_p = phi[idx[:, None] + offs]
        t = win_y - y[idx][:, None]
        scale = np.max(np.abs(t), axis=1, keepdims=True)
        ts = t / scale
        vand = ts[..., None] ** np.arange(5)
        coef = np.linalg.solve(vand, win_p[..., None])[..., 0]
        dphi = coef[:, 1] / scale[:, 0]
        d2phi = 2.0 * coef[:, 2] / scale[:, 0] ** 2
        ym = y[idx]
        pm = phi[idx]
        res = (
            c.kappa / p.rho * ym * ym * d2phi
            + (pm ** (-1.0 / p.gamma) - (p.r + p.rho - p.delta) / p.rho) * ym * dphi
            - p.delta / p.rho * pm
            + (p.r + p.rho) / p.rho * ym
        )
        return ym, res
