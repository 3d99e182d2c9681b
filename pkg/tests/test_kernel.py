import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from heatpot import kernel as K
from heatpot.errors import ParameterError

# frozen reference values (closed forms at 30 digits in mpmath)
R0 = {1: 0.28209479177387814, 2: 0.34219828031221653, 3: 0.41910558881140858}
VOL_E1 = {1: 0.030629383078988447, 2: 0.019894367886486917, 3: 0.014793706657475995}
OFFDIAG = {1: 0.58416900483135988, 2: 0.68250685241132273, 3: 1.0358512935050442}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_unit_mass(n):
    for t in (0.1, 1.0):
        if n == 1:
            val, _ = integrate.quad(lambda x: float(K.heat_kernel(np.array([x]), t)), -np.inf, np.inf)
        else:
            area = K.unit_sphere_area(n)
            val, _ = integrate.quad(lambda r: area * r ** (n - 1) * float(
                K.heat_kernel(np.array([r] + [0.0] * (n - 1)), t)), 0, np.inf)
        assert abs(val - 1) < 1e-10


def test_vanishes_for_nonpositive_time():
    x = np.zeros((3, 2))
    assert np.all(K.heat_kernel(x, np.array([0.0, -1.0, -1e-300])) == 0)


def test_semigroup():
    t, s, x = 0.3, 0.5, np.array([0.4])
    val, _ = integrate.quad(lambda y: float(K.heat_kernel(x - y, t) * K.heat_kernel(np.array([y]), s)),
                            -np.inf, np.inf, epsabs=1e-13)
    assert abs(val - float(K.heat_kernel(x, t + s))) < 1e-10


@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 2), st.floats(0.01, 2), st.floats(0.1, 10))
def test_parabolic_scaling(x, t, r):
    lhs = K.heat_kernel(np.array([r * x]), r * r * t)
    rhs = K.heat_kernel(np.array([x]), t) / r
    assert math.isclose(float(lhs), float(rhs), rel_tol=1e-12, abs_tol=1e-300)


def test_heat_equation_by_differences():
    x, t, d = 0.3, 0.2, 1e-4
    phi = lambda a, b: float(K.heat_kernel(np.array([a]), b))
    ut = (phi(x, t + d) - phi(x, t - d)) / (2 * d)
    uxx = (phi(x + d, t) - 2 * phi(x, t) + phi(x - d, t)) / d ** 2
    assert abs(ut - uxx) < 1e-5 * abs(ut)


def test_kernel_power():
    x, t = np.array([0.2, 0.1]), 0.4
    assert K.kernel_power(x, t, 2.0) == pytest.approx(K.heat_kernel(x, t))
    assert K.kernel_power(x, t, 1.0) == pytest.approx(K.heat_kernel(x, t) ** 1.5)
    assert K.kernel_power(x, t, 4.0) == 1.0
    assert K.kernel_power(x, -t, 4.0) == 0.0
    with pytest.raises(ParameterError):
        K.kernel_power(x, t, 5.0)
    with pytest.raises(ParameterError):
        K.eval_J(K.SpaceTimePoint(x, t), 0.0)


def test_point_validation():
    with pytest.raises(ParameterError):
        K.SpaceTimePoint([0.0] * 4, 1.0)
    with pytest.raises(ParameterError):
        K.SpaceTimePoint([math.nan], 1.0)
    with pytest.raises(ParameterError):
        K.eval_phi(K.SpaceTimePoint([0.0], 1.0), n=2)


def test_heat_ball_membership():
    c = K.SpaceTimePoint([0.0], 0.0)
    assert not K.in_heat_ball(K.HeatBall(c, 1.0), K.SpaceTimePoint([0.0], 0.0))
    assert K.in_heat_ball(K.HeatBall(c, 1.0), K.SpaceTimePoint([0.0], -0.01))
    assert not K.in_heat_ball(K.HeatBall(c, 1.0), K.SpaceTimePoint([0.0], 0.01))
    assert K.in_heat_ball(K.HeatBall(c, math.inf), K.SpaceTimePoint([5.0], -0.01))
    assert not K.in_heat_ball(K.HeatBall(c, 0.0), K.SpaceTimePoint([0.0], -0.01))
    with pytest.raises(ParameterError):
        K.HeatBall(c, -1.0)


def test_metric_and_cylinders():
    p, q = K.SpaceTimePoint([0.0], 0.0), K.SpaceTimePoint([0.3], -0.16)
    assert K.metric_d(p, q) == pytest.approx(0.4)
    assert K.in_Q(p, 0.5, q) and K.in_P(p, 0.5, q)
    assert not K.in_P(p, 0.5, K.SpaceTimePoint([0.0], 0.1))
    # rescaled cylinder P_{sqrt r}
    assert K.in_cal_P(p, 0.25, K.SpaceTimePoint([0.49], -0.2))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_geometry_constants(n):
    g = K.geometry_constants(n)
    assert g.r0 == pytest.approx(R0[n], rel=1e-9)
    assert g.vol_E1 == pytest.approx(VOL_E1[n], rel=1e-9)
    assert g.vol_E1 == pytest.approx(K.vol_E1_closed_form(n), rel=1e-10)
    assert g.offdiag_C == pytest.approx(OFFDIAG[n], rel=1e-12)
    assert g.r0_safe > g.r0


@pytest.mark.parametrize("n", [1, 2])
def test_containment_samples(n):
    rng = np.random.default_rng(1)
    hs, ht = K.heat_ball_extent(n)
    y = rng.uniform(-hs, hs, (50_000, n))
    s = rng.uniform(-ht, 0, 50_000)
    c = K.SpaceTimePoint(np.zeros(n), 0.0)
    inside = K.heat_ball_mask(c, 1.0, y, s)
    assert inside.any()
    assert np.all(K.Q_mask(c, K.containment_radius(n), y[inside], s[inside]))


def test_monte_carlo_volume_scaling():
    est = K.ball_volume("E", 1, 2.0, method="monte_carlo", samples=200_000, seed=0)
    exact = K.ball_volume("E", 1, 2.0).value
    assert abs(est.value - exact) < 4 * est.stderr + 1e-12
    assert K.ball_volume("Q", 2, 1.0).value == pytest.approx(2 * math.pi)
    with pytest.raises(ParameterError):
        K.ball_volume("E", 1, math.inf)


def test_offdiag_certified():
    assert K.certify_offdiag(1, samples=5000, seed=0) <= 1.0


@pytest.mark.parametrize("n", [1, 2])
def test_slice_integral_closed_form(n):
    beta, tau = 1.7, 0.3
    area = K.unit_sphere_area(n)
    val, _ = integrate.quad(lambda r: area * r ** (n - 1) * float(
        K.heat_kernel(np.array([r] + [0.0] * (n - 1)), tau)) ** beta, 0, np.inf, epsabs=1e-14)
    assert float(K.slice_integral(tau, n, beta)) == pytest.approx(val, rel=1e-9)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_annulus_dichotomy(n):
    crit = (n + 2) / n
    assert not K.annulus_integral(n, 1.2 * crit, 1.0, math.inf).divergent
    assert not K.annulus_integral(n, 0.8 * crit, 0.0, 1.0).divergent
    assert K.annulus_integral(n, crit, 1.0, math.inf).divergent
    assert K.annulus_integral(n, crit, 0.0, 1.0).divergent


def test_annulus_value_matches_direct_quadrature():
    # bounded annulus E_2 minus E_1: direct slice quadrature
    n, beta = 1, 2.5
    res = K.annulus_integral(n, beta, 1.0, 2.0)
    val, _ = integrate.quad(lambda tau: K._annulus_slice(tau, n, beta, 1.0, 2.0), 0, 4 / (4 * math.pi),
                            limit=400, epsabs=1e-14)
    assert res.converged and res.value == pytest.approx(val, rel=1e-8)


def test_annulus_rejects_bad_radii():
    with pytest.raises(ParameterError):
        K.annulus_integral(1, 2.0, 2.0, 1.0)
