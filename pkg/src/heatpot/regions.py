"""Exponent regions for the coupled power nonlinearities and rate fitting.

Exponents are reported as powers of 1/sqrt(t), so the heat-kernel floor
t^{-n/2} has exponent n.
"""
from dataclasses import dataclass
from fractions import Fraction
import math
import numbers

import numpy as np

from .errors import DataError, ParameterError
from .kernel import check_dimension

CURVE_RTOL = 1e-12


@dataclass(frozen=True)
class BoundDescriptor:
    kind: str
    exponent: object = None

    KINDS = ("big_O", "little_o", "none", "unresolved")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"bound kind must be one of {self.KINDS}")

    def to_dict(self):
        e = self.exponent
        return {"kind": self.kind, "exponent": None if e is None else float(e)}


@dataclass(frozen=True)
class RegionVerdict:
    region: str
    n: int
    lam: object
    sigma: object
    swapped: bool
    bound_u: BoundDescriptor
    bound_v: BoundDescriptor

    def to_dict(self):
        return {"region": self.region, "n": self.n, "lambda": float(self.lam), "sigma": float(self.sigma),
                "swapped": self.swapped, "bound_u": self.bound_u.to_dict(), "bound_v": self.bound_v.to_dict()}


def _exact(v):
    return isinstance(v, (numbers.Rational, Fraction)) and not isinstance(v, bool)


def critical_sigma(n, lam):
    """sigma on the curve separating B from C: 2/n + (n+2)/(n lam)."""
    if _exact(lam):
        return Fraction(2, n) + Fraction(n + 2, n) / Fraction(lam)
    return 2 / n + (n + 2) / (n * lam)


def region_of(n, lam, sigma):
    """Region letter for sigma <= lam."""
    threshold = Fraction(n + 2, n) if _exact(lam) else (n + 2) / n
    if lam <= threshold:
        return "A"
    crit = critical_sigma(n, lam)
    if _exact(lam) and _exact(sigma):
        on_curve = Fraction(sigma) == crit
    else:
        on_curve = math.isclose(float(sigma), float(crit), rel_tol=CURVE_RTOL, abs_tol=0.0)
    if on_curve:
        return "D"
    return "B" if sigma < crit else "C"


def predicted_bounds(verdict):
    """(bound on u, bound on v) in the caller's original order."""
    return verdict.bound_u, verdict.bound_v


def _bounds(region, n, lam):
    if region == "A":
        return BoundDescriptor("big_O", n), BoundDescriptor("big_O", n)
    if region == "B":
        e = Fraction(n * n) * Fraction(lam) / (n + 2) if _exact(lam) else n * n * lam / (n + 2)
        return BoundDescriptor("little_o", e), BoundDescriptor("big_O", n)
    if region == "C":
        return BoundDescriptor("none"), BoundDescriptor("none")
    return BoundDescriptor("unresolved"), BoundDescriptor("unresolved")


def classify(n, lam, sigma):
    """Region of (lambda, sigma) with predicted bounds on (u, v).

    Integer or Fraction inputs are compared exactly, so the D curve is
    detected exactly; floats hit D within a relative tolerance of 1e-12.
    When sigma > lambda the roles of u and v are exchanged for the
    classification and the bounds are swapped back.
    """
    n = check_dimension(n)
    if lam < 0 or sigma < 0:
        raise ParameterError("requires lambda >= 0 and sigma >= 0")
    swapped = sigma > lam
    big, small = (sigma, lam) if swapped else (lam, sigma)
    region = region_of(n, big, small)
    bu, bv = _bounds(region, n, big)
    if swapped:
        bu, bv = bv, bu
    return RegionVerdict(region, n, lam, sigma, swapped, bu, bv)


def scalar_bound(n, gamma):
    """Bound for a solution of Hu <= (u + t^{-n/2})^gamma."""
    n = check_dimension(n)
    if gamma > n + 2:
        return BoundDescriptor("little_o", gamma * n / (n + 2))
    return BoundDescriptor("big_O", n)


def sigma_only_bound(n, sigma):
    """Bound on v from the sigma-equation alone: heat bounded when sigma < 2/n."""
    n = check_dimension(n)
    if sigma < 0:
        raise ParameterError("requires sigma >= 0")
    limit = Fraction(2, n) if _exact(sigma) else 2 / n
    if sigma < limit:
        return BoundDescriptor("big_O", n)
    return BoundDescriptor("unresolved")


@dataclass(frozen=True)
class RateFit:
    exponent: float
    r_squared: float
    window: int

    def __iter__(self):
        return iter((self.exponent, self.r_squared))


def fit_rate(t, m, window=None):
    """Least-squares slope of log m against log(1/sqrt t).

    Uses the ``window`` samples with the smallest t (default: the last
    ceil(half)).
    """
    t = np.asarray(t, dtype=float)
    m = np.asarray(m, dtype=float)
    if t.shape != m.shape:
        raise DataError("t and m differ in length")
    if np.any(t <= 0):
        raise DataError("sample times must be positive")
    good = m > 0
    if np.count_nonzero(good) < 4:
        raise DataError("fit_rate needs at least 4 positive samples")
    t, m = t[good], m[good]
    order = np.argsort(-t, kind="stable")
    t, m = t[order], m[order]
    k = int(math.ceil(len(t) / 2)) if window is None else int(window)
    k = max(2, min(k, len(t)))
    x = -0.5 * np.log(t[-k:])
    y = np.log(m[-k:])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return RateFit(float(slope), r2, k)
