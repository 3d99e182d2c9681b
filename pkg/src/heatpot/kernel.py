"""Heat kernel, its powers, and parabolic geometry.

Space-time arrays put the spatial coordinates on the last axis of ``x`` and
carry time separately, so ``heat_kernel(x, t)`` broadcasts ``x[..., :n]``
against ``t[...]``.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy import integrate, optimize, special

from .errors import ParameterError

DIMENSIONS = (1, 2, 3)
OFFDIAG_C = (math.sqrt(2.0) - 1.0) ** 2
R0_MARGIN = 1.05


def check_dimension(n):
    if n not in DIMENSIONS:
        raise ParameterError(f"dimension n must be one of {DIMENSIONS}, got {n!r}")
    return int(n)


def check_alpha(alpha, n, upper_closed=False):
    ok = 0 < alpha < n + 2 or (upper_closed and alpha == n + 2)
    if not ok:
        bracket = "]" if upper_closed else ")"
        raise ParameterError(f"alpha must lie in (0, n+2{bracket} = (0, {n + 2}{bracket}, got {alpha!r}")
    return float(alpha)


def unit_ball_volume(n):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def unit_sphere_area(n):
    return n * unit_ball_volume(n)


@dataclass(frozen=True)
class SpaceTimePoint:
    x: tuple
    t: float

    def __init__(self, x, t):
        xs = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
        check_dimension(len(xs))
        if not all(math.isfinite(v) for v in xs) or not math.isfinite(t):
            raise ParameterError("space-time coordinates must be finite")
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "t", float(t))

    @property
    def n(self):
        return len(self.x)

    def array(self):
        return np.array(self.x + (self.t,))


@dataclass(frozen=True)
class HeatBall:
    """Heat ball E_r(center).

    ``r`` is a positive float, ``math.inf`` for the whole past half-space,
    or ``0`` for the empty set.
    """
    center: SpaceTimePoint
    r: float

    def __post_init__(self):
        if not (self.r >= 0):
            raise ParameterError(f"heat-ball radius must be >= 0, got {self.r!r}")

    @property
    def n(self):
        return self.center.n

    @property
    def infinite(self):
        return math.isinf(self.r)

    def contains(self, y, s):
        return heat_ball_mask(self.center, self.r, y, s)


def heat_kernel(x, t):
    """Phi(x, t) with Phi = 0 for t <= 0; ``x`` has shape (..., n)."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    n = x.shape[-1]
    r2 = np.einsum("...i,...i->...", x, x)
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    val = (4.0 * np.pi * ts) ** (-0.5 * n) * np.exp(-r2 / (4.0 * ts))
    return np.where(pos, val, 0.0)


def kernel_power(x, t, alpha):
    """J_alpha = Phi ** ((n + 2 - alpha) / n); alpha = n + 2 gives the indicator of t > 0."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    alpha = check_alpha(alpha, n, upper_closed=True)
    gamma = (n + 2 - alpha) / n
    if gamma == 0.0:
        return np.where(np.asarray(t) > 0, 1.0, 0.0)
    return heat_kernel(x, t) ** gamma


def eval_phi(p, n=None):
    if n is not None and n != p.n:
        raise ParameterError(f"point has dimension {p.n}, expected {n}")
    return float(heat_kernel(np.array(p.x), p.t))


def eval_J(p, alpha, n=None):
    if n is not None and n != p.n:
        raise ParameterError(f"point has dimension {p.n}, expected {n}")
    check_alpha(alpha, p.n)
    return float(kernel_power(np.array(p.x), p.t, alpha))


def _diffs(center, y, s):
    y = np.asarray(y, dtype=float)
    if y.ndim == 0 or y.shape[-1] != center.n:
        y = y[..., None] if center.n == 1 else y
    dx = np.asarray(center.x) - y
    dt = center.t - np.asarray(s, dtype=float)
    return dx, dt


def heat_ball_mask(center, r, y, s):
    """Membership of (y, s) in E_r(center), vectorised over samples."""
    dx, dt = _diffs(center, y, s)
    if r == 0:
        return np.zeros(np.shape(dt), dtype=bool)
    if math.isinf(r):
        return dt > 0
    return heat_kernel(dx, dt) > r ** (-center.n)


def in_heat_ball(ball, q):
    return bool(heat_ball_mask(ball.center, ball.r, np.array(q.x), q.t))


def metric_d(p, q):
    dx = np.subtract(p.x, q.x)
    return max(float(np.linalg.norm(dx)), math.sqrt(abs(p.t - q.t)))


def _metric_arrays(center, y, s):
    dx, dt = _diffs(center, y, s)
    return np.maximum(np.linalg.norm(dx, axis=-1), np.sqrt(np.abs(dt))), dt


def Q_mask(center, r, y, s):
    d, _ = _metric_arrays(center, y, s)
    return d < r


def P_mask(center, r, y, s):
    d, dt = _metric_arrays(center, y, s)
    return (d < r) & (dt > 0)


def cal_P_mask(center, r, y, s, closed=False):
    """Membership in the rescaled cylinder P_{sqrt r}; ``closed`` gives its closure."""
    dx, dt = _diffs(center, y, s)
    dist = np.linalg.norm(dx, axis=-1)
    if closed:
        return (dist <= math.sqrt(r)) & (dt >= 0) & (dt <= r)
    return (dist < math.sqrt(r)) & (dt > 0) & (dt < r)


def cal_E_mask(center, r, y, s):
    return heat_ball_mask(center, math.sqrt(r), y, s)


def in_Q(center, r, q):
    return bool(Q_mask(center, r, np.array(q.x), q.t))


def in_P(center, r, q):
    return bool(P_mask(center, r, np.array(q.x), q.t))


def in_cal_P(center, r, q):
    return bool(cal_P_mask(center, r, np.array(q.x), q.t))


def in_cal_E(center, r, q):
    return bool(cal_E_mask(center, r, np.array(q.x), q.t))


# --- geometry of E_1(0, 0) -------------------------------------------------

def heat_ball_radius_sq(tau, n, r=1.0):
    """Squared spatial radius of the slice of E_r(0,0) at time lag ``tau``."""
    tau = np.asarray(tau, dtype=float)
    inside = (tau > 0) & (tau < r * r / (4 * np.pi))
    ts = np.where(inside, tau, 1.0)
    val = 2.0 * n * ts * np.log(r * r / (4 * np.pi * ts))
    return np.where(inside, val, 0.0)


def heat_ball_extent(n, r=1.0):
    """Half-widths (space, time) of the bounding box of E_r(0,0)."""
    return r * math.sqrt(n / (2 * math.pi * math.e)), r * r / (4 * math.pi)


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float = 0.0
    samples: int = 0

    @property
    def three_sigma(self):
        return 3.0 * self.stderr


@dataclass(frozen=True)
class GeometryConstants:
    n: int
    r0: float
    vol_E1: float
    vol_Q1: float
    vol_P1: float
    offdiag_C: float
    r0_margin: float = field(default=R0_MARGIN)

    @property
    def r0_safe(self):
        return self.r0 * self.r0_margin

    @property
    def maximal_domination(self):
        """|E_1| / (r0^{n+2} |Q_1|) using the safe containment radius."""
        return self.vol_E1 / (self.r0_safe ** (self.n + 2) * self.vol_Q1)


def _vol_E1_quadrature(n):
    top = 1.0 / (4 * math.pi)
    w = unit_ball_volume(n)
    val, _ = integrate.quad(lambda tau: w * float(heat_ball_radius_sq(tau, n)) ** (n / 2),
                            0.0, top, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


@lru_cache(maxsize=None)
def geometry_constants(n):
    n = check_dimension(n)
    wq = 2.0 * unit_ball_volume(n)
    return GeometryConstants(
        n=n,
        r0=containment_radius(n),
        vol_E1=_vol_E1_quadrature(n),
        vol_Q1=wq,
        vol_P1=wq / 2.0,
        offdiag_C=offdiag_constant(n),
    )


def ball_volume(kind, n, r, method="closed_form", samples=None, seed=None):
    """Volume of E_r, Q_r or P_r; Monte-Carlo estimates carry a standard error."""
    n = check_dimension(n)
    if kind not in ("E", "Q", "P"):
        raise ParameterError(f"kind must be 'E', 'Q' or 'P', got {kind!r}")
    if not (0 < r < math.inf):
        raise ParameterError("ball_volume needs a finite positive radius")
    if method == "closed_form":
        if kind == "E":
            return VolumeEstimate(r ** (n + 2) * geometry_constants(n).vol_E1)
        q = 2.0 * unit_ball_volume(n) * r ** (n + 2)
        return VolumeEstimate(q if kind == "Q" else q / 2.0)
    if method != "monte_carlo":
        raise ParameterError(f"unknown method {method!r}")
    if not samples or samples <= 0:
        raise ParameterError("monte_carlo needs samples > 0")
    rng = np.random.default_rng(seed)
    center = SpaceTimePoint(np.zeros(n), 0.0)
    if kind == "E":
        hs, ht = heat_ball_extent(n, r)
        t_lo, t_hi = -ht, 0.0
    else:
        hs = r
        t_lo, t_hi = -r * r, (r * r if kind == "Q" else 0.0)
    box = (2 * hs) ** n * (t_hi - t_lo)
    hits = 0
    chunk = 1 << 18
    left = int(samples)
    while left > 0:
        m = min(chunk, left)
        y = rng.uniform(-hs, hs, size=(m, n))
        s = rng.uniform(t_lo, t_hi, size=m)
        if kind == "E":
            mask = heat_ball_mask(center, r, y, s)
        elif kind == "Q":
            mask = Q_mask(center, r, y, s)
        else:
            mask = P_mask(center, r, y, s)
        hits += int(np.count_nonzero(mask))
        left -= m
    frac = hits / samples
    return VolumeEstimate(box * frac, box * math.sqrt(frac * (1 - frac) / samples), int(samples))


def containment_radius(n, tol=1e-12):
    """Smallest r0 with E_1(0,0) inside Q_{r0}(0,0)."""
    n = check_dimension(n)
    if tol <= 0:
        raise ParameterError("tol must be positive")
    top = 1.0 / (4 * math.pi)
    res = optimize.minimize_scalar(lambda tau: -float(heat_ball_radius_sq(tau, n)),
                                   bounds=(0.0, top), method="bounded",
                                   options={"xatol": tol * top})
    space = math.sqrt(-res.fun)
    # deepest time: Phi(0, tau) = 1
    depth = optimize.brentq(lambda tau: -0.5 * n * math.log(4 * math.pi * tau), 1e-6, 1.0,
                            xtol=tol * top, rtol=4 * np.finfo(float).eps)
    return max(space, math.sqrt(depth))


def offdiag_constant(n):
    n = check_dimension(n)
    zeta = n / (2.0 * OFFDIAG_C)
    case_one = math.exp(-OFFDIAG_C * zeta) * (zeta / math.pi) ** (n / 2)
    return max(case_one, (4 * math.pi) ** (-n / 2))


def certify_offdiag(n, samples=10_000, seed=0):
    """Worst value of Phi(x-y, t-s) r^{n/2} / C(n) over random admissible pairs.

    (x, t) ranges over the closure of P_{sqrt r}(x0, t0); (y, s) lies outside the
    closure of P_{sqrt 2r}(x0, t0).  Values <= 1 confirm the bound.
    """
    n = check_dimension(n)
    rng = np.random.default_rng(seed)
    C = offdiag_constant(n)
    worst = 0.0
    drawn = 0
    while drawn < samples:
        m = samples - drawn
        r = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), m))
        sr = np.sqrt(r)
        dirs = rng.normal(size=(m, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        x = dirs * (sr * rng.uniform(0, 1, m) ** (1 / n))[:, None]
        t = -r * rng.uniform(0, 1, m)
        # outer points concentrated near the excluded cylinder
        ydirs = rng.normal(size=(m, n))
        ydirs /= np.linalg.norm(ydirs, axis=1, keepdims=True)
        y = ydirs * (sr * rng.uniform(0, 3, m))[:, None]
        s = -r * rng.uniform(-0.5, 4, m)
        inside = (np.linalg.norm(y, axis=1) <= np.sqrt(2 * r)) & (s <= 0) & (s >= -2 * r)
        keep = ~inside
        k = int(keep.sum())
        if k == 0:
            continue
        val = heat_kernel(x[keep] - y[keep], t[keep] - s[keep]) * r[keep] ** (n / 2) / C
        worst = max(worst, float(val.max()))
        drawn += k
    return worst


def vol_E1_closed_form(n):
    """|E_1(0,0)| in closed form, independent of the quadrature used above."""
    k = n / 2
    return (unit_ball_volume(n) * (n / (2 * math.pi)) ** k / (4 * math.pi)
            * math.gamma(k + 1) / (k + 1) ** (k + 1))


# --- annulus integrals -----------------------------------------------------

@dataclass(frozen=True)
class AnnulusResult:
    value: float
    error: float
    divergent: bool
    converged: bool
    increments: tuple

    def __bool__(self):
        return not self.divergent


def slice_integral(tau, n, beta):
    """Closed form of the integral of Phi(., tau)^beta over R^n."""
    tau = np.asarray(tau, dtype=float)
    e = n * (beta - 1) / 2
    return (4 * np.pi) ** (-e) * beta ** (-n / 2) * tau ** (-e)


def _annulus_slice(tau, n, beta, a, b):
    # Phi^beta integrated over the spatial slice of E_b minus E_a at lag tau
    k = n / 2
    scale = beta * k

    def frac(r):
        if r == 0:
            return 0.0
        if math.isinf(r):
            return 1.0
        arg = math.log(r * r / (4 * math.pi * tau))
        return float(special.gammainc(k, scale * arg)) if arg > 0 else 0.0

    return float(slice_integral(tau, n, beta)) * (frac(b) - frac(a))


DIVERGENCE_RATIO = 1.0 - 1e-6


def _stalled(incs, skip=0):
    # four consecutive non-shrinking increments
    if len(incs) < skip + 5:
        return False
    last = incs[-5:]
    return all(last[i + 1] >= DIVERGENCE_RATIO * last[i] and last[i] > 0 for i in range(4))


def annulus_integral(n, beta, a, b, tol=1e-10, max_steps=500):
    """Integral of Phi(-eta, -zeta)^beta over E_b(0,0) minus E_a(0,0).

    The time lag axis is swept in dyadic windows away from the split point
    (halvings toward 0, doublings toward infinity when ``b`` is infinite);
    divergence is flagged when four consecutive window increments fail to
    shrink.
    """
    n = check_dimension(n)
    if not (0 <= a < b):
        raise ParameterError("annulus_integral needs 0 <= a < b")
    if beta <= 0:
        raise ParameterError("beta must be positive")
    e = n * (beta - 1) / 2
    C = (4 * math.pi) ** (-e) * beta ** (-n / 2)

    def piece(lo, hi):
        val, err = integrate.quad(_annulus_slice, lo, hi, args=(n, beta, a, b),
                                  epsabs=tol * 1e-3, epsrel=1e-12, limit=200)
        return val, err

    split = (b if math.isfinite(b) else max(a, 1e-300)) ** 2 / (4 * math.pi)
    if a == 0 and math.isinf(b):
        split = 1.0 / (4 * math.pi)
    total = 0.0
    qerr = 0.0
    incs = []
    divergent = False
    converged_low = True
    converged_high = True

    # toward tau -> 0
    hi = split
    low_incs = []
    for _ in range(max_steps):
        lo = hi / 2
        v, err = piece(lo, hi)
        total += v
        qerr += err
        low_incs.append(v)
        hi = lo
        # the slice of E_b only saturates a few halvings below the split
        if a == 0 and _stalled(low_incs, skip=8):
            divergent = True
            break
        if a == 0:
            head = C * hi ** (1 - e) / (1 - e) if e < 1 else math.inf
        else:
            head = 2 * v
        if head < tol:
            qerr += head
            break
    else:
        converged_low = False
    incs.extend(low_incs)

    if math.isinf(b) and not divergent:
        lo = split
        high_incs = []
        for _ in range(max_steps):
            hi = 2 * lo
            v, err = piece(lo, hi)
            total += v
            qerr += err
            high_incs.append(v)
            lo = hi
            if _stalled(high_incs):
                divergent = True
                break
            if e > 1 and lo >= (a * a) / (4 * math.pi):
                tail = C * lo ** (1 - e) / (e - 1)
                if tail < tol:
                    total += tail
                    break
        else:
            converged_high = False
        incs.extend(high_incs)

    if divergent:
        return AnnulusResult(math.inf, math.inf, True, False, tuple(incs))
    return AnnulusResult(total, qerr, False, converged_low and converged_high, tuple(incs))
