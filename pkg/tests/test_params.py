import dataclasses
import math

import numpy as np
import pytest

import habitpolicy as hp
from habitpolicy.errors import ValidationError
from habitpolicy.params import ModelParams, derive_constants, validate


def test_base_params_valid(base_params):
    validate(base_params)  # no raise


@pytest.mark.parametrize(
    "field,value,msg",
    [
        ("alpha", 0.0, r"alpha must be in \(0,1\]"),
        ("alpha", 1.2, r"alpha must be in \(0,1\]"),
        ("gamma", 1.0, "gamma must exceed 1"),
        ("mu", 0.02, "mu must exceed r"),
        ("sigma", 0.0, "sigma must be positive"),
        ("rho", -0.1, "rho must be positive"),
        ("delta", 0.0, "delta must be positive"),
        ("r", 0.0, "r must be positive"),
    ],
)
def test_validation_names_the_bound(base_params, field, value, msg):
    bad = dataclasses.replace(base_params, **{field: value})
    with pytest.raises(ValidationError, match=msg):
        validate(bad)


def test_kappa_and_floor_arithmetic(base_consts):
    # kappa = (0.12-0.02)^2 / (2*0.2^2) and x_floor = 0.75 / 0.27
    assert base_consts.kappa == pytest.approx(0.125, rel=1e-14)
    assert base_consts.x_floor == pytest.approx(0.75 / 0.27, rel=1e-14)
    assert base_consts.merton_slope == pytest.approx(2.5, rel=1e-14)


def test_root_values_frozen(base_consts):
    # evaluated by an independent root-finder ahead of time
    assert base_consts.lam == pytest.approx(-1.215117, abs=1e-5)
    assert base_consts.lam_prime == pytest.approx(1.975117, abs=1e-5)
    assert base_consts.eta1 == pytest.approx(0.258144, abs=1e-5)
    assert base_consts.eta2 == pytest.approx(0.470588, abs=1e-5)
    assert base_consts.constrained_slope == pytest.approx(5.537793, abs=1e-5)


def test_roots_match_independent_solver(base_params, base_consts):
    p = base_params
    a_lin = base_consts.kappa + p.r + p.rho * (1 - p.alpha) - p.delta
    roots = np.sort(np.roots([-base_consts.kappa, a_lin, p.delta]))
    assert base_consts.lam == pytest.approx(roots[0], rel=1e-10)
    assert base_consts.lam_prime == pytest.approx(roots[1], rel=1e-10)


def test_quadratic_residuals(base_consts):
    assert base_consts.quad_residual_lam < 1e-12
    assert base_consts.quad_residual_lam_prime < 1e-12


def test_root_ordering(base_params, base_consts):
    c = base_consts
    assert -base_params.delta / c.kappa < c.lam < 0.0 < 1.0 < c.lam_prime
    assert 0.0 < c.eta1 < c.eta2
    assert c.constrained_slope > c.merton_slope  # lam < 0


def test_eta_ratio_identity(base_consts):
    c = base_consts
    assert c.eta1 / c.eta2 == pytest.approx(c.lam / (c.lam - 1.0), rel=1e-14)
    assert 0.0 < c.eta1 / c.eta2 < 1.0


def test_x_floor_increasing_in_alpha(base_params):
    floors = [
        derive_constants(dataclasses.replace(base_params, alpha=a)).x_floor
        for a in np.linspace(0.05, 1.0, 12)
    ]
    assert all(b > a for a, b in zip(floors, floors[1:]))


def test_x_floor_addictive_case(base_params):
    c = derive_constants(dataclasses.replace(base_params, alpha=1.0))
    assert c.x_floor == pytest.approx(1.0 / base_params.r, rel=1e-14)
    assert c.x_floor == pytest.approx(50.0, rel=1e-14)


def test_stable_roots_for_tiny_kappa(base_params):
    # Sharpe sweeps push kappa toward zero; the conjugate-form recipe must
    # keep the root product identity lam*lam_prime = -delta/kappa exact
    for sr in (1e-2, 1e-4, 1e-6):
        p = dataclasses.replace(base_params, mu=base_params.r + sr * base_params.sigma)
        c = derive_constants(p)
        assert c.lam * c.lam_prime == pytest.approx(-p.delta / c.kappa, rel=1e-12)
        assert -p.delta / c.kappa < c.lam < 0.0
        assert c.lam_prime > 1.0


def test_helper_properties(base_consts):
    assert base_consts.alpha_pow == pytest.approx(0.75 ** -2.0, rel=1e-15)
    assert base_consts.h_top == pytest.approx(0.125, rel=1e-14)
    assert base_consts.u_floor_const == pytest.approx(-4.444444444444445, rel=1e-12)
