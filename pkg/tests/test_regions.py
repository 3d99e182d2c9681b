from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatpot.errors import DataError, ParameterError
from heatpot.regions import (classify, critical_sigma, fit_rate, predicted_bounds, scalar_bound,
                             sigma_only_bound)


@pytest.mark.parametrize("lam,sigma,region", [
    (2, 1, "A"), (4, 1, "B"), (4, 3, "C"), (4, Fraction(11, 4), "D")])
def test_reference_pairs(lam, sigma, region):
    assert classify(1, lam, sigma).region == region


def test_region_b_bounds():
    v = classify(1, 4, 1)
    bu, bv = predicted_bounds(v)
    assert bu.kind == "little_o" and bu.exponent == Fraction(4, 3)
    assert bv.kind == "big_O" and bv.exponent == 1


def test_float_on_curve_is_d_within_tolerance():
    assert classify(1, 4.0, 2.75).region == "D"
    assert classify(1, 4.0, 2.75 * (1 + 1e-9)).region == "C"


def test_swap_reverses_bounds():
    v = classify(1, 1, 4)
    assert v.swapped and v.region == "B"
    assert v.bound_u.kind == "big_O" and v.bound_v.kind == "little_o"


def test_negative_rejected():
    with pytest.raises(ParameterError):
        classify(1, -1, 1)
    with pytest.raises(ParameterError):
        classify(4, 1, 1)


def test_partition_exhaustive():
    rng = np.random.default_rng(0)
    seen = set()
    for lam, sigma in rng.uniform(0, 8, (10_000, 2)):
        seen.add(classify(1, lam, sigma).region)
    assert seen == {"A", "B", "C"}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_ab_boundary_continuity_exact(n):
    lam = Fraction(n + 2, n)
    assert Fraction(n * n) * lam / (n + 2) == n
    # critical curve meets sigma = lambda at the threshold only from above
    assert critical_sigma(n, lam) == Fraction(2, n) + 1


@settings(max_examples=100, deadline=None)
@given(st.fractions(min_value=Fraction(7, 2), max_value=10), st.fractions(min_value=0, max_value=10))
def test_exact_classification_is_consistent(lam, sigma):
    sigma = min(sigma, lam)
    crit = critical_sigma(1, lam)
    r = classify(1, lam, sigma).region
    assert r == ("D" if sigma == crit else "B" if sigma < crit else "C")


def test_scalar_and_sigma_only_bounds():
    assert scalar_bound(1, 2).kind == "big_O"
    b = scalar_bound(1, 6)
    assert b.kind == "little_o" and b.exponent == pytest.approx(2)
    assert sigma_only_bound(1, Fraction(3, 2)).kind == "big_O"
    assert sigma_only_bound(1, 2).kind == "unresolved"


def test_fit_exact_power_law():
    t = np.geomspace(1e-6, 1e-1, 30)
    fit = fit_rate(t, 3.0 * t ** -1.25)
    assert abs(fit.exponent - 2.5) < 1e-10 and fit.r_squared == pytest.approx(1.0, abs=1e-14)


def test_fit_noisy_power_law():
    rng = np.random.default_rng(1)
    t = np.geomspace(1e-6, 1e-1, 60)
    m = t ** -1.5 * (1 + 0.05 * rng.standard_normal(t.size))
    e, r2 = fit_rate(t, m)
    assert abs(e - 3.0) < 0.1 and r2 > 0.9


def test_fit_rejects_bad_data():
    with pytest.raises(DataError):
        fit_rate([1, 2], [1, 2, 3])
    with pytest.raises(DataError):
        fit_rate([0.1, 0.0, 0.3, 0.4], [1, 1, 1, 1])
    with pytest.raises(DataError):
        fit_rate([0.1, 0.2, 0.3], [1, 1, 1])


def test_fit_window_uses_smallest_times():
    t = np.geomspace(1e-6, 1e-1, 40)
    m = np.where(t < 1e-3, t ** -1.0, 1.0)
    assert fit_rate(t, m, window=10).exponent == pytest.approx(2.0, abs=1e-10)
    assert math.isfinite(fit_rate(t, m).exponent)
