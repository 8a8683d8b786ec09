"""Model inputs and the closed-form constants derived from them.

All downstream modules consume ``DerivedConstants`` rather than re-deriving
quantities from raw inputs, so the numerically stable quadratic-root recipe
lives in exactly one place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class ModelParams:
    """Market and preference inputs.

    Parameters
    ----------
    r : riskless rate (1/time)
    mu : risky-asset drift (1/time), must exceed ``r``
    sigma : risky-asset volatility (1/sqrt(time))
    rho : habit decay rate (1/time)
    alpha : habit-constraint fraction in (0, 1]; ``alpha = 1`` is the
        addictive case
    delta : aggregate discount rate (1/time)
    gamma : relative risk aversion, must exceed 1
    """

    r: float
    mu: float
    sigma: float
    rho: float
    alpha: float
    delta: float
    gamma: float


def validate(params: ModelParams) -> None:
    """Raise :class:`ValidationError` naming the violated bound, if any.

    Rejects rather than clamps: silently repaired inputs would corrupt
    parameter sweeps.
    """
    p = params
    if not (p.r > 0):
        raise ValidationError(f"r must be positive (got {p.r})")
    if not (p.mu > p.r):
        raise ValidationError(f"mu must exceed r (got mu={p.mu}, r={p.r})")
    if not (p.sigma > 0):
        raise ValidationError(f"sigma must be positive (got {p.sigma})")
    if not (p.rho > 0):
        raise ValidationError(f"rho must be positive (got {p.rho})")
    if not (0 < p.alpha <= 1):
        raise ValidationError(f"alpha must be in (0,1] (got {p.alpha})")
    if not (p.delta > 0):
        raise ValidationError(f"delta must be positive (got {p.delta})")
    if not (p.gamma > 1):
        raise ValidationError(f"gamma must exceed 1 (got {p.gamma})")
    for name in ("r", "mu", "sigma", "rho", "alpha", "delta", "gamma"):
        if not math.isfinite(getattr(p, name)):
            raise ValidationError(f"{name} must be finite")


@dataclass(frozen=True)
class DerivedConstants:
    """Closed-form constants of the model.

    ``lam`` / ``lam_prime`` are the negative and positive roots of

        f(xi) = -kappa*xi**2 + (kappa + r + rho*(1-alpha) - delta)*xi + delta,

    with ``lam`` in (-delta/kappa, 0) and ``lam_prime`` > 1.  ``eta1`` and
    ``eta2`` bracket the free boundary y*; ``x_floor`` is the minimum
    admissible wealth-to-habit ratio.
    """

    params: ModelParams
    kappa: float
    lam: float
    lam_prime: float
    x_floor: float
    eta1: float
    eta2: float
    merton_slope: float
    constrained_slope: float
    quad_residual_lam: float
    quad_residual_lam_prime: float

    @property
    def alpha_pow(self) -> float:
        """alpha**(-gamma), the marginal-utility level at the free boundary."""
        return self.params.alpha ** (-self.params.gamma)

    @property
    def h_top(self) -> float:
        """kappa/rho, the upper bound of the auxiliary function H."""
        return self.kappa / self.params.rho

    @property
    def u_floor_const(self) -> float:
        """alpha**(1-gamma) / (delta*(1-gamma)), the value at the wealth floor."""
        p = self.params
        return p.alpha ** (1.0 - p.gamma) / (p.delta * (1.0 - p.gamma))


def _quad_rel_residual(kappa: float, a_lin: float, delta: float, xi: float) -> float:
    val = -kappa * xi * xi + a_lin * xi + delta
    scale = kappa * xi * xi + abs(a_lin * xi) + delta
    return abs(val) / scale


def derive_constants(params: ModelParams) -> DerivedConstants:
    """Validate ``params`` and compute every closed-form constant.

    The quadratic roots are computed with the multiply-by-conjugate recipe:
    the root that would suffer cancellation is recovered from the product
    lam*lam_prime = -delta/kappa.  This matters in Sharpe-ratio sweeps that
    drive kappa toward zero.
    """
    validate(params)
    p = params
    kappa = (p.mu - p.r) ** 2 / (2.0 * p.sigma**2)
    a_lin = kappa + p.r + p.rho * (1.0 - p.alpha) - p.delta
    disc = math.sqrt(a_lin * a_lin + 4.0 * p.delta * kappa)
    if a_lin >= 0.0:
        lam_prime = (a_lin + disc) / (2.0 * kappa)
        lam = -p.delta / (kappa * lam_prime)
    else:
        lam = (a_lin - disc) / (2.0 * kappa)
        lam_prime = -p.delta / (kappa * lam)

    x_floor = p.alpha / (p.r + p.rho * (1.0 - p.alpha))
    alpha_pow = p.alpha ** (-p.gamma)
    denom = 1.0 + p.rho * x_floor
    eta2 = alpha_pow / denom
    eta1 = lam * alpha_pow / ((lam - 1.0) * denom)

    consts = DerivedConstants(
        params=p,
        kappa=kappa,
        lam=lam,
        lam_prime=lam_prime,
        x_floor=x_floor,
        eta1=eta1,
        eta2=eta2,
        merton_slope=(p.mu - p.r) / p.sigma**2,
        constrained_slope=(p.mu - p.r) * (1.0 - lam) / p.sigma**2,
        quad_residual_lam=_quad_rel_residual(kappa, a_lin, p.delta, lam),
        quad_residual_lam_prime=_quad_rel_residual(kappa, a_lin, p.delta, lam_prime),
    )

    if not (-p.delta / kappa < lam < 0.0):
        raise ValidationError(f"lambda={lam} outside (-delta/kappa, 0)")
    if not (lam_prime > 1.0):
        raise ValidationError(f"lambda_prime={lam_prime} not > 1")
    if not (0.0 < eta1 < eta2):
        raise ValidationError(f"eta bracket degenerate: ({eta1}, {eta2})")
    return consts
