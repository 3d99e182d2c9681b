from fractions import Fraction
import math

import numpy as np
import pytest
from scipy import integrate

from heatpot import blowup as B
from heatpot.errors import ParameterError, ScheduleError, SingularityError

# I and J for the reference bump, from nested adaptive quadrature
PSI_I = {1: 0.728304, 2: 0.765242, 3: 0.723539}
PSI_J = {1: 0.283570, 2: 0.125205, 3: 0.053690}


@pytest.fixture(scope="module")
def sched_a():
    return B.build_schedule_A(1, 4, B.phi_family("t", True), 4)


@pytest.fixture(scope="module")
def sched_b():
    return B.build_schedule_B(1, 4, 3, B.phi_family("log", False), 3)


def test_phi_families_and_table(tmp_path):
    assert B.phi_family("sqrt", True)(0.25) == pytest.approx(0.5)
    assert B.phi_family("log", False)(math.exp(-2)) == pytest.approx(2.0)
    with pytest.raises(ParameterError):
        B.phi_family("cube", True)
    path = tmp_path / "phi.csv"
    path.write_text("t,phi\n0.001,0.001\n0.01,0.01\n0.1,0.1\n")
    phi = B.phi_from_table(path)
    assert phi(0.05) == pytest.approx(0.05) and phi(1e-6) == pytest.approx(1e-6)


def test_phi_direction_enforced():
    with pytest.raises(ParameterError):
        B.build_schedule_A(1, 4, B.phi_family("t", False))
    with pytest.raises(ParameterError):
        B.build_schedule_B(1, 4, 3, B.phi_family("t", True))


def test_bump_profile():
    assert B.bump1(0.0) == 1.0 and B.bump1(1.0) == 0.0 and B.bump1(-1.5) == 0.0
    assert B.psi(np.zeros((1, 1)), -0.5)[0] == 1.0
    assert B.psi(np.zeros((1, 1)), 0.1)[0] == 0.0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_psi_constants(n):
    assert B.psi_integral(n) == pytest.approx(PSI_I[n], abs=1e-6)
    assert B.psi_kernel_integral(n) == pytest.approx(PSI_J[n], abs=1e-6)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_heat_floor_closed_form(n):
    assert B.heat_floor_min(n) == pytest.approx((4 * math.pi) ** (-n / 2) * math.exp(-1 / 8), rel=1e-9)


def test_schedule_a_invariants(sched_a):
    s = sched_a
    assert all(s.checks.values())
    assert np.all(s.T[1:] < s.T[:-1] - s.r[:-1])
    assert s.M_amp == pytest.approx(s.eps / s.r ** 1.5)
    with pytest.raises(ParameterError):
        B.build_schedule_A(1, 3, B.phi_family("t", True))


def test_construct_a_pieces(sched_a):
    out = B.construct_A(sched_a, cells=32)
    with pytest.raises(SingularityError):
        out.u(np.zeros((1, 2)))
    # u vanishes before the last bump starts
    t0 = sched_a.T[-1] - sched_a.r[-1] - 1e-9
    assert out.u(np.array([[0.0, t0]]))[0] == 0.0
    assert abs(out.extra["J_grid"] - sched_a.J_const) / sched_a.J_const < 1e-3


def test_certify_a(sched_a):
    rep = B.certify_A(B.construct_A(sched_a), samples=2000, duhamel=False)
    assert rep["pass"], rep["checks"]
    assert [row["T"] for row in rep["trace"]] == sched_a.T.tolist()


def test_duhamel_a_second_order(sched_a):
    errs, ratios = B.duhamel_A(sched_a)
    orders = np.log2(ratios)
    assert np.all((orders > B.ORDER_RANGE[0]) & (orders < B.ORDER_RANGE[1]))


def test_alpha_n():
    assert B.alpha_n(1) == pytest.approx(0.49766, abs=1e-4)
    # direct 2-d quadrature of the Gaussian mass of the unit disc at e_1
    val, _ = integrate.dblquad(lambda y, x: math.exp(-x * x - y * y) / math.pi, 0, 2,
                               lambda x: -math.sqrt(max(0.0, 1 - (x - 1) ** 2)),
                               lambda x: math.sqrt(max(0.0, 1 - (x - 1) ** 2)), epsabs=1e-12)
    assert B.alpha_n(2) == pytest.approx(val, rel=1e-9)
    assert 0 < B.alpha_n(3) < B.alpha_n(2) < B.alpha_n(1) < 1


def test_exponents_exact():
    p, q = B.blowup_exponents(4, 3)
    assert (p, q) == (Fraction(5, 11), Fraction(4, 11))
    assert 4 * q == p + 1 and 3 * p == q + 1
    pf, qf = B.blowup_exponents(4.0, 3.0)
    assert isinstance(pf, float) and pf == pytest.approx(5 / 11)


@pytest.mark.parametrize("T", [0.25, 0.01, 1e-4])
def test_solve_t_identity(T):
    p, n = 5 / 11, 1
    t = B.solve_t(T, p, n)
    assert 0 < t < T
    assert (T - t) ** (-p) == pytest.approx(t ** (-n / 2), rel=1e-12)


def test_schedule_b_invariants(sched_b):
    s = sched_b
    assert all(s.checks.values())
    assert s.p == Fraction(5, 11) and s.q == Fraction(4, 11)
    for prev, nxt in zip(s.windows, s.windows[1:]):
        assert nxt.a + nxt.eps < prev.t - prev.eps
    for j, w in enumerate(s.windows):
        assert s.z(j, w.a) > (j + 1) * s.phi(w.a)
    assert s.scaling["time_factor"] > 0


def test_schedule_b_rejects_other_regions():
    with pytest.raises(ParameterError):
        B.build_schedule_B(1, 4, 1, B.phi_family("log", False))
    with pytest.raises(ParameterError):
        B.build_schedule_B(1, 3, 4, B.phi_family("log", False))


def test_schedule_b_unreachable_gain():
    with pytest.raises(ScheduleError):
        B.build_schedule_B(1, 4, 3, B.phi_family("t", False), 3, gain=1e30)


def test_smoothstep_and_cutoff(sched_b):
    u = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    assert B.smoothstep(u).tolist() == [0.0, 0.0, 0.5, 1.0, 1.0]
    w = sched_b.windows[0]
    # identically one on omega_j, zero outside Omega_j
    mid = 0.5 * (w.t + w.a)
    assert B.cutoff(w, 0.0, mid) == 1.0
    assert B.cutoff(w, 0.0, w.a + w.eps) == 0.0
    assert B.cutoff(w, 0.0, w.t - w.eps) == 0.0


def test_window_potentials_before_window(sched_b):
    w = sched_b.windows[0]
    assert B.window_potentials(sched_b, 0, np.zeros(1), w.t - w.eps) == (0.0, 0.0)


@pytest.mark.slow
def test_certify_b(sched_b):
    rep = B.certify_B(B.construct_B(sched_b), samples=200, outside=50)
    assert rep["pass"], rep["checks"]
    assert rep["checks"]["rates"]["increasing"]
