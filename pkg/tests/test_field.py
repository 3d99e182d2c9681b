import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatpot import kernel as K
from heatpot.errors import DomainError, ParameterError
from heatpot.field import (GridFunction, GridSpec, LpExponent, heat_residual, integrate, interior,
                           lp_norm)


def spec1(h=0.1, tau=0.05):
    return GridSpec([-1.0], [1.0], 0.0, 1.0, h, tau)


def test_shape_and_centres():
    s = spec1()
    assert s.shape == (20, 20)
    assert s.axis(0)[0] == pytest.approx(-0.95)
    assert s.times()[-1] == pytest.approx(0.975)
    X, T = s.mesh()
    assert X.shape == (20, 20, 1) and T.shape == (20, 20)


def test_incommensurate_step_rejected():
    with pytest.raises(ParameterError):
        GridSpec([0.0], [1.0], 0.0, 1.0, 0.3, 0.1)
    with pytest.raises(ParameterError):
        GridSpec([0.0], [1.0], 0.0, 1.0, -0.1, 0.1)
    with pytest.raises(ParameterError):
        GridSpec([0.0] * 4, [1.0] * 4, 0.0, 1.0, 0.5, 0.5)


def test_immutable_and_non_negative():
    f = GridFunction.zeros(spec1())
    with pytest.raises(AttributeError):
        f.samples = None
    with pytest.raises(ValueError):
        f.samples[0, 0] = 1.0
    with pytest.raises(ParameterError):
        GridFunction(spec1(), -np.ones(spec1().shape))
    with pytest.raises(ParameterError):
        GridFunction(spec1(), np.full(spec1().shape, np.nan))
    assert GridFunction(spec1(), -np.ones(spec1().shape), signed=True).signed


def test_algebra():
    s = spec1()
    f = GridFunction(s, np.full(s.shape, 2.0))
    assert np.all(f.power(3).samples == 8.0)
    assert np.all(f.add(f).scale(0.5).samples == 2.0)
    assert np.all(f.add_scalar(1).samples == 3.0)
    g = GridFunction(GridSpec([-1.0], [1.0], 0.5, 1.5, 0.1, 0.05), np.ones((20, 20)))
    assert np.allclose(g.offset_heat_floor().samples[0], 1 + g.spec.times() ** -0.5)
    with pytest.raises(DomainError):
        f.offset_heat_floor()
    with pytest.raises(DomainError):
        GridFunction(s, np.ones(s.shape), signed=True).power(2)


def test_time_window_and_rescale():
    s = spec1()
    f = GridFunction.from_callable(s, lambda X, T: T)
    w = f.time_window(4, 8)
    assert w.spec.t_lo == pytest.approx(0.2) and w.samples.shape == (20, 4)
    g = f.rescaled(2.0)
    assert g.spec.h == pytest.approx(0.2) and g.spec.tau == pytest.approx(0.2)
    assert integrate(g) == pytest.approx(8 * integrate(f))


def test_norms():
    s = spec1()
    f = GridFunction(s, np.full(s.shape, 3.0))
    vol = 2.0
    assert integrate(f) == pytest.approx(3 * vol)
    assert lp_norm(f, 2) == pytest.approx(3 * math.sqrt(vol))
    assert lp_norm(f, math.inf) == 3.0
    assert lp_norm(GridFunction.zeros(s), 3) == 0.0
    with pytest.raises(ParameterError):
        LpExponent(0.5)
    assert LpExponent(math.inf).infinite


def test_lp_norm_extreme_values_do_not_overflow():
    s = spec1()
    f = GridFunction(s, np.full(s.shape, 1e200))
    assert lp_norm(f, 3) == pytest.approx(1e200 * 2 ** (1 / 3))


def test_serialisation_round_trip(tmp_path):
    s = GridSpec([-1.0, 0.0], [1.0, 0.5], 0.1, 0.3, 0.25, 0.05)
    f = GridFunction.from_callable(s, lambda X, T: X[..., 0] ** 2 + T)
    blob = f.dumps()
    head = blob.split(b"\n", 1)[0]
    assert b'"byte_order": "little"' in head and b'"n": 2' in head
    g = GridFunction.loads(blob)
    assert g.spec == s and np.array_equal(g.samples, f.samples)
    path = tmp_path / "f.grid"
    f.save(path)
    assert np.array_equal(GridFunction.load(path).samples, f.samples)
    with pytest.raises(ParameterError):
        GridFunction.loads(blob[:-8])


def test_heat_residual_of_heat_kernel_is_second_order():
    errs = []
    for k in range(3):
        h = 0.05 / 2 ** k
        s = GridSpec([-1.0], [1.0], 0.5, 1.0, h, h / 2)
        u = GridFunction.from_callable(s, lambda X, T: K.heat_kernel(X, T))
        errs.append(np.max(np.abs(heat_residual(u).samples)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((rates > 1.75) & (rates < 2.25))


def test_heat_residual_shape_and_interior():
    s = spec1()
    u = GridFunction.from_callable(s, lambda X, T: T + X[..., 0] ** 2)
    r = heat_residual(u)
    assert r.signed and r.samples.shape == (18, 18)
    # u_t - u_xx = 1 - 2 exactly for a quadratic
    assert np.allclose(r.samples, -1.0)
    assert interior(u).shape == r.samples.shape


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.floats(0.5, 4.0))
def test_rescaled_integral_scaling(n, r):
    s = GridSpec([0.0] * n, [1.0] * n, 0.0, 1.0, 0.5, 0.25)
    rng = np.random.default_rng(n)
    f = GridFunction(s, rng.uniform(0, 1, s.shape))
    assert integrate(f.rescaled(r)) == pytest.approx(r ** (n + 2) * integrate(f), rel=1e-12)
