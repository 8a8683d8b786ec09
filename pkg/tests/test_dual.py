import math

import numpy as np
import pytest

from habitpolicy.dual import DualSolution
from habitpolicy.errors import DomainError


@pytest.fixture(scope="module")
def dual(base_policy):
    return base_policy.dual


def test_coef_C_positive(dual, base_consts):
    # y* < eta2 makes the closed-branch numerator negative and lam < 0
    assert dual.coef_C > 0.0


def test_smooth_pasting(dual):
    for eps in (1e-6, 1e-5):
        du, dup, dupp = dual.pasting_gaps(eps)
        assert du < 1e-6 and dup < 1e-6 and dupp < 1e-6


def test_u_prime_at_y_star_is_minus_x_star(dual, base_policy):
    got = dual.u_prime(dual.y_star)
    assert got == pytest.approx(-base_policy.x_star, rel=1e-12)
    # trajectory-branch form just below agrees too
    below = dual.u_prime(dual.y_star * (1.0 - 1e-9))
    assert below == pytest.approx(-base_policy.x_star, rel=1e-6)


def test_u_prime_limit_at_infinity(dual, base_consts):
    # u'(y) -> -x_floor = -2.777778
    assert dual.u_prime(1e6 * dual.y_star) == pytest.approx(
        -base_consts.x_floor, abs=1e-10
    )
    assert base_consts.x_floor == pytest.approx(2.777778, abs=1e-6)


def test_u_value_closed_branch_hand_substitution(dual, base_consts):
    # u(2 y*) written out from scratch against the library's evaluation
    c = base_consts
    p = c.params
    ys = dual.y_star
    num = ys * (1.0 + p.rho * c.x_floor) - c.alpha_pow
    coef = num / (p.rho * c.lam * ys**c.lam)
    y = 2.0 * ys
    expected = coef * y**c.lam - c.x_floor * y + p.alpha ** (1.0 - p.gamma) / (
        p.delta * (1.0 - p.gamma)
    )
    assert dual.u(y) == pytest.approx(expected, rel=1e-13)


def test_u_asymptote_constant(dual, base_consts):
    # u(y) + x_floor*y -> alpha**(1-gamma)/(delta*(1-gamma)) as y -> inf
    y = 1e6 * dual.y_star
    resid = dual.u(y) + base_consts.x_floor * y - base_consts.u_floor_const
    assert abs(resid) < 1e-8


def test_u_second_against_finite_difference(dual):
    for y in (0.3 * dual.y_star, 0.7 * dual.y_star, 2.0 * dual.y_star):
        h = 1e-5 * y
        fd = (dual.u_prime(y + h) - dual.u_prime(y - h)) / (2.0 * h)
        assert dual.u_second(y) == pytest.approx(fd, rel=1e-5)


def test_dual_residual_closed_branch_roundoff(dual):
    ys = np.geomspace(dual.y_star, 100.0 * dual.y_star, 50)
    assert np.max(np.abs(dual.dual_residual(ys))) < 1e-10


def test_dual_residual_trajectory_branch(dual):
    ys = np.geomspace(dual.y_min, dual.y_star * (1.0 - 1e-9), 300)
    assert np.max(np.abs(dual.dual_residual(ys))) < 1e-6


def test_free_boundary_condition(dual, base_consts):
    # y* - rho y* u'(y*) = alpha**-gamma
    assert abs(dual.free_boundary_residual()) < 1e-10 * base_consts.alpha_pow


def test_u_shape_on_wide_grid(dual):
    ys = np.geomspace(dual.y_min, 100.0 * dual.y_star, 1000)
    up = np.asarray(dual.u_prime(ys))
    upp = np.asarray(dual.u_second(ys))
    assert np.all(up < 0.0)
    assert np.all(upp > 0.0)
    assert np.all(np.diff(up) >= 0.0)
    strict = ys[1:] <= 2.0 * dual.y_star
    assert np.all(np.diff(up)[strict] > 0.0)


def test_u_upper_bound(dual):
    # (kappa + r + rho - delta) * alpha**-gamma / (delta rho) = 5.0074074...
    bound = dual.u_upper_bound()
    assert bound == pytest.approx(5.007407407407407, rel=1e-12)
    ys = np.geomspace(dual.y_min, 100.0 * dual.y_star, 1000)
    assert float(np.max(np.asarray(dual.u(ys)))) <= bound


def test_y_u_second_asymptote(dual):
    y = 1e4 * dual.y_star
    assert abs(y * dual.u_second(y)) < 1e-6


def test_domain_error_below_floor(dual):
    with pytest.raises(DomainError):
        dual.u(dual.y_min * 0.5)
    with pytest.raises(DomainError):
        dual.u_prime(np.array([dual.y_star, dual.y_min * 0.1]))


def test_phi_ode_nodes_cover_interior(dual):
    ym, res = dual.phi_ode_residual_nodes()
    assert ym[0] > dual.y_min
    assert ym[-1] < dual.y_star
    assert np.max(np.abs(res)) < 1e-5


def test_scalar_and_array_evaluation_agree(dual):
    ys = np.array([0.5 * dual.y_star, 1.5 * dual.y_star])
    vec = np.asarray(dual.u(ys))
    assert vec[0] == dual.u(float(ys[0]))
    assert vec[1] == dual.u(float(ys[1]))
