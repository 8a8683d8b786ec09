"""Primal policy objects recovered from the dual solution.

The dual-to-primal inversion J(xi) uses the closed power-law branch above
the free boundary and monotone bracketing on the stored grid below it.  The
value function on the constrained region is evaluated from the closed form
obtained by inverting the power-law branch (verified against the Legendre
identity u(J(-x)) + x*J(-x), which the tests treat as the mutual oracle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dual import DualSolution
from .errors import DomainError, NoCrossingError
from .params import DerivedConstants

_J_BISECT_ITERS = 48


@dataclass
class DualInverse:
    """Inverse J of u': maps xi in (-x_max, -x_floor) to y in (y_min, inf)."""

    dual: DualSolution
    x_star: float
    x_max: float
    x_grid: np.ndarray  # increasing; x-image of the stored y grid
    y_grid: np.ndarray  # matching, decreasing

    def __call__(self, xi):
        return self.j_of_x(-np.asarray(xi, dtype=float))

    def j_of_x(self, x):
        """J(-x) for wealth-to-habit ratios x in (x_floor, x_max]."""
        c = self.dual.consts
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x_arr > self.x_max * (1.0 + 1e-12)):
            raise DomainError(f"x beyond covered range (x_max={self.x_max})")
        if np.any(x_arr <= c.x_floor):
            raise DomainError("J(-x) diverges at and below x_floor")
        out = np.empty_like(x_arr)
        low = x_arr <= self.x_star
        if low.any():
            out[low] = self._closed_branch(x_arr[low])
        if (~low).any():
            out[~low] = self._grid_branch(x_arr[~low])
        return float(out[0]) if np.ndim(x) == 0 else out

    def _closed_branch(self, x):
        c = self.dual.consts
        ys = self.dual.y_star
        kq = c.params.rho * ys / (c.alpha_pow - ys * (1.0 + c.params.rho * c.x_floor))
        return ys * (kq * (x - c.x_floor)) ** (1.0 / (c.lam - 1.0))

    def _grid_branch(self, x):
        # phi(y)/y is strictly decreasing in y, so each query is bracketed by
        # its grid interval and bisected (monotone cubic pre-localization).
        c = self.dual.consts
        fbp = self.dual.fbp
        target = 1.0 + c.params.rho * x
        idx = np.clip(np.searchsorted(self.x_grid, x), 1, len(self.x_grid) - 1)
        y_lo = self.y_grid[idx]
        y_hi = self.y_grid[idx - 1]
        for _ in range(_J_BISECT_ITERS):
            mid = 0.5 * (y_lo + y_hi)
            too_low = fbp.phi_at(mid) / mid < target  # y too large
            y_hi = np.where(too_low, mid, y_hi)
            y_lo = np.where(too_low, y_lo, mid)
        return 0.5 * (y_lo + y_hi)


@dataclass
class PolicySolution:
    """Optimal consumption/investment per unit habit, value and inverses."""

    dual: DualSolution
    x_star: float
    x_max: float
    beta_hat: float
    inverse: DualInverse = field(repr=False)

    @property
    def consts(self) -> DerivedConstants:
        return self.dual.consts

    @property
    def x_floor(self) -> float:
        return self.consts.x_floor

    # -- domain helpers -------------------------------------------------

    def _check_domain(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x_arr < self.x_floor * (1.0 - 1e-12)) or np.any(
            x_arr > self.x_max * (1.0 + 1e-12)
        ):
            raise DomainError(
                f"x outside policy domain [x_floor, x_max] = [{self.x_floor}, {self.x_max}]"
            )
        return np.clip(x_arr, self.x_floor, self.x_max)

    def _wrap(self, x, out):
        return float(out[0]) if np.ndim(x) == 0 else out

    # -- policies --------------------------------------------------------

    def c_star(self, x):
        """Optimal consumption-to-habit ratio; equals alpha up to x_star."""
        c = self.consts
        x_arr = self._check_domain(x)
        out = np.full_like(x_arr, float(c.params.alpha))
        m = x_arr > self.x_star
        if m.any():
            xm = x_arr[m]
            y = self.inverse.j_of_x(xm)
            # phi(J(-x)) = (1 + rho x) J(-x) along the inversion identity
            out[m] = ((1.0 + c.params.rho * xm) * y) ** (-1.0 / c.params.gamma)
        return self._wrap(x, out)

    def theta_star(self, x):
        """Optimal risky-investment-to-habit ratio."""
        c = self.consts
        p = c.params
        x_arr = self._check_domain(x)
        out = c.constrained_slope * (x_arr - c.x_floor)
        m = x_arr > self.x_star
        if m.any():
            xm = x_arr[m]
            y = self.inverse.j_of_x(xm)
            H = self.dual.fbp.H(y)
            out[m] = (p.mu - p.r) / (c.kappa * p.sigma**2) * H * (1.0 + p.rho * xm)
        return self._wrap(x, out)

    def value(self, x):
        """Value function v(x) (utility units, negative for gamma > 1)."""
        c = self.consts
        p = c.params
        x_arr = self._check_domain(x)
        out = np.empty_like(x_arr)
        low = x_arr <= self.x_star
        if low.any():
            t = x_arr[low] - c.x_floor
            ys = self.dual.y_star
            kq = p.rho * ys / (c.alpha_pow - ys * (1.0 + p.rho * c.x_floor))
            out[low] = (
                (c.lam - 1.0) / c.lam * ys * kq ** (1.0 / (c.lam - 1.0))
                * t ** (c.lam / (c.lam - 1.0))
                + c.u_floor_const
            )
        if (~low).any():
            xm = x_arr[~low]
            y = self.inverse.j_of_x(xm)
            phi = (1.0 + p.rho * xm) * y
            H = self.dual.fbp.H(y)
            out[~low] = (
                phi * H
                + p.gamma / (1.0 - p.gamma) * phi ** (1.0 - 1.0 / p.gamma)
                + (p.r + p.rho) / p.rho * (phi - y)
            ) / p.delta
        return self._wrap(x, out)

    def ce(self, x):
        """Certainty-equivalent constant consumption-to-habit ratio."""
        p = self.consts.params
        v = np.atleast_1d(np.asarray(self.value(x), dtype=float))
        out = (p.delta * (1.0 - p.gamma) * v) ** (1.0 / (1.0 - p.gamma))
        return self._wrap(x, out)

    def v_prime(self, x):
        """v'(x) = J(-x), the dual variable at x."""
        x_arr = self._check_domain(x)
        out = self.inverse.j_of_x(np.maximum(x_arr, self.x_floor * (1.0 + 1e-15)))
        return self._wrap(x, np.atleast_1d(out))

    def v_second(self, x):
        """v''(x) = -1/u''(J(-x)) < 0."""
        x_arr = self._check_domain(x)
        y = np.atleast_1d(self.inverse.j_of_x(x_arr))
        out = -1.0 / np.atleast_1d(np.asarray(self.dual.u_second(y), dtype=float))
        return self._wrap(x, out)

    # -- derived quantities ------------------------------------------------

    def crossing_point(self, n_probe: int = 400) -> tuple[float, float]:
        """Point (x0, c0) where c*(x) crosses CE(x), by bracketed bisection.

        Both curves equal alpha at the wealth floor, so the bracket starts at
        a small interior offset.
        """
        x_lo = self.x_floor + 1e-4 * (self.x_star - self.x_floor)
        x_hi = 0.9 * self.x_max
        probes = np.geomspace(x_lo, x_hi, n_probe)
        gap = np.atleast_1d(self.c_star(probes)) - np.atleast_1d(self.ce(probes))
        sign_flip = np.nonzero(np.diff(np.sign(gap)) != 0)[0]
        if sign_flip.size == 0:
            raise NoCrossingError(
                f"c* - CE has no sign change on [{x_lo}, {x_hi}]"
            )
        a = float(probes[sign_flip[0]])
        b = float(probes[sign_flip[0] + 1])
        ga = float(gap[sign_flip[0]])
        for _ in range(200):
            mid = 0.5 * (a + b)
            gm = float(self.c_star(mid) - self.ce(mid))
            if gm == 0.0:
                a = b = mid
                break
            if (gm < 0.0) == (ga < 0.0):
                a, ga = mid, gm
            else:
                b = mid
            if abs(b - a) <= 1e-10 * abs(b):
                break
        x0 = 0.5 * (a + b)
        return x0, float(self.ce(x0))

    def absolute_policy(self, w: float, z: float) -> tuple[float, float]:
        """Currency-units policy (pi, C) for wealth w and habit z."""
        if z <= 0.0:
            raise DomainError(f"habit must be positive (got {z})")
        x = w / z
        if x < self.x_floor * (1.0 - 1e-12):
            raise DomainError(
                f"wealth-to-habit ratio {x} below the bankruptcy floor {self.x_floor}"
            )
        return z * self.theta_star(x), z * self.c_star(x)

    def default_x_grid(self, n: int = 400, x_cap: float = 50.0) -> np.ndarray:
        hi = min(x_cap, self.x_max)
        return np.geomspace(self.x_floor * (1.0 + 1e-4), hi, n)


def x_star(dual: DualSolution) -> float:
    """Critical wealth-to-habit ratio -u'(y*) = alpha**-gamma/(rho y*) - 1/rho."""
    c = dual.consts
    return c.alpha_pow / (c.params.rho * dual.y_star) - 1.0 / c.params.rho


def invert_dual(dual: DualSolution) -> DualInverse:
    """Build the inverse J of u' from the dual solution."""
    c = dual.consts
    fbp = dual.fbp
    x_grid = fbp.phis / (c.params.rho * fbp.ys) - 1.0 / c.params.rho
    if not np.all(np.diff(x_grid) > 0):
        raise DomainError("x image of the stored grid is not strictly increasing")
    return DualInverse(
        dual=dual,
        x_star=x_star(dual),
        x_max=float(x_grid[-1]),
        x_grid=x_grid,
        y_grid=fbp.ys,
    )


def build_policy(dual: DualSolution) -> PolicySolution:
    """Assemble the policy layer from a dual solution."""
    inverse = invert_dual(dual)
    beta_hat = dual.fbp.H_at_y_min / dual.consts.h_top
    return PolicySolution(
        dual=dual,
        x_star=inverse.x_star,
        x_max=inverse.x_max,
        beta_hat=beta_hat,
        inverse=inverse,
    )
