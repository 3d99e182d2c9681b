"""Heat potentials and heat-ball maximal functions of grid functions.

Source data is treated as constant on each grid cell, and every cell's
contribution is the exact space-time integral of the kernel power over that
cell (erf products in space, graded Gauss-Legendre in time).  Targets that
are cell centres of a grid sharing the source lattice go through a Toeplitz
table and a causal discrete convolution; arbitrary targets are summed
directly.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import _backend
from .errors import ParameterError, QuadratureError
from .field import GridFunction, GridSpec, LpExponent, lp_norm
from .kernel import (SpaceTimePoint, cal_E_mask, cal_P_mask, check_alpha, geometry_constants,
                     heat_ball_mask, heat_kernel)

DEFAULT_TOL = 1e-9


def _kernels(backend):
    return _backend.kernels if backend is None else _backend.get(backend)


def _as_targets(targets, n):
    if isinstance(targets, SpaceTimePoint):
        targets = [targets]
    if len(targets) and isinstance(targets[0], SpaceTimePoint):
        arr = np.array([p.x + (p.t,) for p in targets], dtype=float)
    else:
        arr = np.atleast_2d(np.asarray(targets, dtype=float))
    if arr.shape[-1] != n + 1:
        raise ParameterError(f"targets need {n + 1} coordinates (space then time)")
    return np.ascontiguousarray(arr)


def _sources(f, keep=None):
    """Non-zero cells of ``f`` as (values, multi-index, time index)."""
    vals = f.samples
    mask = vals != 0 if keep is None else (vals != 0) & keep
    idx = np.nonzero(mask)
    return vals[idx], np.stack(idx[:-1], axis=-1).astype(np.int64), idx[-1].astype(np.int64)


def _cell_mask(spec, region):
    if region is None:
        return None
    X, T = spec.mesh()
    return region(X, T)


def _check_err(err, tol, scale):
    worst = float(np.max(err)) if np.size(err) else 0.0
    if worst > tol * max(1.0, scale):
        raise QuadratureError("singular-cell subdivision did not reach tolerance", worst)


# --- direct summation -------------------------------------------------------

def _point_potential(f, alpha, pts, keep, tol, kern):
    s = f.spec
    n = s.n
    gamma = (n + 2 - alpha) / n
    values, k, l = _sources(f, keep)
    if values.size == 0:
        return np.zeros(len(pts))
    lo = np.asarray(s.space_lo) + k * s.h
    hi = lo + s.h
    s_lo = s.t_lo + l * s.tau
    s_hi = s_lo + s.tau
    if gamma == 0.0:
        # J is the indicator of t > s: integrate time overlap only
        dur = np.clip(pts[:, n, None] - s_lo[None, :], 0.0, s.tau)
        return dur @ values * s.h ** n
    out, err = kern.potential_at_points(values, lo, hi, s_lo, s_hi, pts, gamma, alpha,
                                        _backend.NODES, _backend.WEIGHTS)
    _check_err(err, tol, float(np.max(np.abs(out))) if out.size else 0.0)
    return out


# --- lattice path -----------------------------------------------------------

def lattice_offset(src, out):
    """Integer (space, time) offset of ``out`` relative to ``src``, or None."""
    if not (math.isclose(src.h, out.h, rel_tol=1e-12) and math.isclose(src.tau, out.tau, rel_tol=1e-12)):
        return None
    if src.n != out.n:
        return None
    raw = [(o - s) / src.h for o, s in zip(out.space_lo, src.space_lo)]
    raw.append((out.t_lo - src.t_lo) / src.tau)
    ints = [int(round(v)) for v in raw]
    if any(abs(v - i) > 1e-7 for v, i in zip(raw, ints)):
        return None
    return ints[:-1], ints[-1]


def _lattice_potential(f, alpha, out, offset, keep, tol, kern):
    s = f.spec
    n = s.n
    values, k, l = _sources(f, keep)
    if values.size == 0:
        return np.zeros(out.shape)
    o_space, o_time = offset
    # crop sources to their bounding box
    kmin = k.min(axis=0)
    k = k - kmin
    Ns = k.max(axis=0) + 1
    o_space = np.asarray(o_space) - kmin
    lmin = int(l.min())
    l = l - lmin
    o_time = o_time - lmin
    No = np.asarray(out.space_shape)
    nt = out.nt
    lags = nt + o_time
    if lags <= 0:
        return np.zeros(out.shape)
    # W rows cover spatial offsets m = i - k + o over the whole range
    wshape = No + Ns - 1
    mlo = o_space - (Ns - 1)
    W, E = _shifted_table(n, s.h, s.tau, wshape, mlo, lags, alpha, kern)
    wstr = np.ones(n, dtype=np.int64)
    for d in range(n - 2, -1, -1):
        wstr[d] = wstr[d + 1] * wshape[d + 1]
    grids = np.meshgrid(*[np.arange(v) for v in No], indexing="ij")
    oi = np.stack([g.ravel() for g in grids], axis=-1)
    w_index = ((oi + (Ns - 1)) * wstr).sum(axis=1).astype(np.int64)
    src_flat = (k * wstr).sum(axis=1).astype(np.int64)
    res = kern.causal_convolve(values, src_flat, l, W, w_index, int(o_time), int(nt))
    bound = float(E.max()) * float(np.abs(values).sum()) if E.size else 0.0
    _check_err(np.array([bound]), tol, float(np.max(np.abs(res))))
    return res.reshape(out.shape)


def _shifted_table(n, h, tau, wshape, mlo, lags, alpha, kern):
    """Cell integrals W[m, lag] for spatial offsets m = mlo + index and lags 0..lags-1."""
    gamma = (n + 2 - alpha) / n
    axes = [mlo[d] + np.arange(wshape[d]) for d in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    m = np.stack([g.ravel() for g in grids], axis=-1).astype(float)
    lag = np.arange(lags, dtype=float)
    S, L = m.shape[0], lag.size
    if gamma == 0.0:
        W = np.tile(np.where(lag == 0, 0.5, 1.0) * tau * h ** n, (S, 1))
        return W, np.zeros_like(W)
    # the table is even in each spatial offset: evaluate |m| once
    am = np.abs(m)
    uniq, inv = np.unique(am, axis=0, return_inverse=True)
    inv = inv.ravel()
    U = uniq.shape[0]
    A = np.repeat((uniq - 0.5) * h, L, axis=0)
    B = np.repeat((uniq + 0.5) * h, L, axis=0)
    t0 = np.tile(np.maximum(lag - 0.5, 0.0) * tau, U)
    t1 = np.tile((lag + 0.5) * tau, U)
    W, E = kern.cell_integrals(np.ascontiguousarray(A), np.ascontiguousarray(B), t0, t1,
                               gamma, alpha, _backend.NODES, _backend.WEIGHTS)
    W = W.reshape(U, L)[inv]
    E = E.reshape(U, L)[inv]
    return np.ascontiguousarray(W), E


# --- public operators -------------------------------------------------------

def heat_potential(f, alpha, targets, tol=DEFAULT_TOL, backend=None, _keep=None, _upper_closed=False):
    """J_alpha * f at ``targets``.

    ``targets`` is a sequence of :class:`SpaceTimePoint`, an array of shape
    (P, n + 1) with time last, or a :class:`GridSpec`; the grid form returns a
    :class:`GridFunction` and is fast when the grid shares ``f``'s lattice.
    """
    n = f.n
    alpha = check_alpha(alpha, n, upper_closed=_upper_closed)
    kern = _kernels(backend)
    if isinstance(targets, GridSpec):
        offset = lattice_offset(f.spec, targets)
        if offset is not None:
            vals = _lattice_potential(f, alpha, targets, offset, _keep, tol, kern)
        else:
            X, T = targets.mesh()
            pts = np.concatenate([X.reshape(-1, n), T.reshape(-1, 1)], axis=1)
            vals = _point_potential(f, alpha, pts, _keep, tol, kern).reshape(targets.shape)
        return GridFunction(targets, np.maximum(vals, 0.0))
    pts = _as_targets(targets, n)
    return np.maximum(_point_potential(f, alpha, pts, _keep, tol, kern), 0.0)


# --- regions for localised potentials ---------------------------------------

@dataclass(frozen=True)
class Domain:
    """A space-time region used to restrict source cells (by cell centre)."""
    kind: str
    r: float = 0.0
    center: SpaceTimePoint = None
    parts: tuple = field(default=())

    @classmethod
    def whole(cls):
        return cls("whole")

    @classmethod
    def cal_P(cls, r, center):
        return cls("cal_P", float(r), center)

    @classmethod
    def cal_E(cls, r, center):
        return cls("cal_E", float(r), center)

    @classmethod
    def heat_ball(cls, r, center):
        return cls("E", float(r), center)

    def minus(self, other):
        return Domain("minus", parts=(self, other))

    def mask(self, X, T):
        if self.kind == "whole":
            return np.ones(T.shape, dtype=bool)
        if self.kind == "cal_P":
            return cal_P_mask(self.center, self.r, X, T)
        if self.kind == "cal_E":
            return cal_E_mask(self.center, self.r, X, T)
        if self.kind == "E":
            return heat_ball_mask(self.center, self.r, X, T)
        if self.kind == "minus":
            a, b = self.parts
            return a.mask(X, T) & ~b.mask(X, T)
        raise ParameterError(f"unknown domain kind {self.kind!r}")


def local_potential(f, domain, alpha, targets, tol=DEFAULT_TOL, backend=None):
    """Heat potential with sources restricted to ``domain``; alpha may equal n + 2."""
    keep = None if domain.kind == "whole" else _cell_mask(f.spec, domain.mask)
    return heat_potential(f, alpha, targets, tol, backend, _keep=keep, _upper_closed=True)


# --- slab operator -----------------------------------------------------------

@dataclass(frozen=True)
class SlabSpec:
    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise ParameterError("slab needs a < b")

    @property
    def width(self):
        return self.b - self.a


def check_slab_exponents(n, alpha, p, q):
    p, q = LpExponent(p), LpExponent(q)
    delta = 1 / p - 1 / q
    if delta < 0:
        raise ParameterError(f"requires delta = 1/p - 1/q >= 0, got {delta:.6g}")
    if not delta < alpha / (n + 2):
        raise ParameterError(f"requires delta = 1/p - 1/q < alpha/(n+2) = {alpha / (n + 2):.6g}, got {delta:.6g}")
    if not alpha / (n + 2) < 1:
        raise ParameterError("requires alpha/(n+2) < 1")
    return delta


def _slab_keep(spec, slab):
    t = spec.times()
    inside = (t > slab.a) & (t < slab.b)
    return np.broadcast_to(inside, spec.shape)


def slab_potential(f, alpha, slab, targets, tol=DEFAULT_TOL, backend=None):
    """V_alpha f: the potential of f restricted to the slab a < t < b."""
    return heat_potential(f, alpha, targets, tol, backend, _keep=_slab_keep(f.spec, slab))


def slab_window(f, slab, pad):
    """Output grid covering the slab in time and f's box plus ``pad`` cells in space."""
    s = f.spec
    j0 = max(0, int(math.floor((slab.a - s.t_lo) / s.tau + 1e-9)))
    j1 = int(math.ceil((slab.b - s.t_lo) / s.tau - 1e-9))
    lo = np.asarray(s.space_lo) - pad * s.h
    hi = np.asarray(s.space_hi) + pad * s.h
    return GridSpec(lo, hi, s.t_lo + j0 * s.tau, s.t_lo + j1 * s.tau, s.h, s.tau)


def slab_norm_ratio(f, alpha, p, q, slab, pad=None, tol=DEFAULT_TOL, backend=None):
    """||V_alpha f||_q / ||f||_p over the slab, truncated to a padded window."""
    check_alpha(alpha, f.n)
    check_slab_exponents(f.n, alpha, p, q)
    s = f.spec
    if pad is None:
        pad = int(math.ceil(6 * math.sqrt(slab.width) / s.h))
    window = slab_window(f, slab, pad)
    V = slab_potential(f, alpha, slab, window, tol, backend)
    keep = _slab_keep(s, slab)
    fin = GridFunction(s, np.where(keep, f.samples, 0.0))
    den = lp_norm(fin, p)
    if den == 0:
        return 0.0
    return lp_norm(V, q) / den


# --- nonlinear composition ---------------------------------------------------

@dataclass(frozen=True)
class PotentialParams:
    n: int
    alpha: float
    beta: float
    sigma: float
    r: float = 1.0

    def validate(self, with_r=True):
        n = self.n
        check_alpha(self.alpha, n)
        check_alpha(self.beta, n)
        lo = self.alpha / (n + 2 - self.beta)
        if not self.sigma > lo:
            raise ParameterError(f"requires sigma > alpha/(n+2-beta) = {lo:.6g} (nonlinear potential assumptions)")
        if with_r:
            hi = (n + 2) * self.sigma / (self.alpha + self.beta * self.sigma)
            if not 1 <= self.r < hi:
                raise ParameterError(f"requires 1 <= r < (n+2)sigma/(alpha+beta sigma) = {hi:.6g} (nonlinear potential assumptions)")
        return self

    @property
    def norm_exponents(self):
        """Exponents of ||f||_r and ||f||_inf in the nonlinear estimate."""
        n, a, b, s, r = self.n, self.alpha, self.beta, self.sigma, self.r
        return (a + b * s) * r / (n + 2), (s * (n + 2 - b * r) - a * r) / (n + 2)


def refined(f, k):
    """The same piecewise-constant function on a grid k times finer per axis (k^2 in time)."""
    if k == 1:
        return f
    s = f.spec
    a = f.samples
    for d in range(s.n):
        a = np.repeat(a, k, axis=d)
    a = np.repeat(a, k * k, axis=-1)
    spec = GridSpec(s.space_lo, s.space_hi, s.t_lo, s.t_hi, s.h / k, s.tau / (k * k))
    return GridFunction(spec, a)


def intermediate_grid(f, targets, refine=1, pad=4.0):
    """Grid on f's (refined) lattice covering the causal cone of ``targets``."""
    s = f.spec
    h, tau = s.h / refine, s.tau / (refine * refine)
    if isinstance(targets, GridSpec):
        xs_lo, xs_hi, t_top = np.asarray(targets.space_lo), np.asarray(targets.space_hi), targets.t_hi
    else:
        pts = _as_targets(targets, s.n)
        xs_lo, xs_hi, t_top = pts[:, :-1].min(axis=0), pts[:, :-1].max(axis=0), pts[:, -1].max()
    t_top = max(t_top, s.t_lo + s.tau)
    reach = pad * math.sqrt(max(t_top - s.t_lo, s.tau))
    lo = np.minimum(np.asarray(s.space_lo), xs_lo) - reach
    hi = np.maximum(np.asarray(s.space_hi), xs_hi) + reach
    base = np.asarray(s.space_lo)
    lo = base + np.floor((lo - base) / h) * h
    hi = base + np.ceil((hi - base) / h) * h
    nt = int(math.ceil((t_top - s.t_lo) / tau - 1e-9))
    return GridSpec(lo, hi, s.t_lo, s.t_lo + nt * tau, h, tau)


def nonlinear_potential(f, params, targets, refine=1, pad=4.0, tol=None,
                        quad_tol=DEFAULT_TOL, backend=None):
    """J_alpha * ((J_beta * f)^sigma).

    The inner potential is computed on an intermediate grid (``refine`` times
    finer than f's) covering the causal cone of the targets.  With ``tol`` set,
    the result is recomputed at twice the resolution and a
    :class:`QuadratureError` is raised if the two differ by more than ``tol``
    relative to their maximum.
    """
    params.validate(with_r=False)
    out = _nonlinear(f, params, targets, refine, pad, quad_tol, backend)
    if tol is not None:
        fine = _nonlinear(f, params, targets, 2 * refine, pad, quad_tol, backend)
        a = out.samples if isinstance(out, GridFunction) else out
        b = fine.samples if isinstance(fine, GridFunction) else fine
        scale = max(float(np.max(np.abs(b))), 1e-300)
        gap = float(np.max(np.abs(a - b))) / scale
        if gap > tol:
            raise QuadratureError("intermediate grid too coarse", gap)
    return out


def _nonlinear(f, params, targets, refine, pad, quad_tol, backend):
    mid = intermediate_grid(f, targets, refine, pad)
    inner = heat_potential(refined(f, refine), params.beta, mid, quad_tol, backend)
    g = inner.power(params.sigma)
    return heat_potential(g, params.alpha, targets, quad_tol, backend)


# --- maximal functions ---------------------------------------------------------

RATIO = 2.0 ** 0.125


@dataclass(frozen=True)
class RadiusGrid:
    """Radii scanned by the maximal functions: geometric, or every distinct lattice ball."""
    r_min: float
    r_max: float
    ratio: float = RATIO
    dense: bool = False

    def __post_init__(self):
        if not 0 < self.r_min <= self.r_max:
            raise ParameterError("radius grid needs 0 < r_min <= r_max")
        if not self.dense and self.ratio <= 1:
            raise ParameterError("radius ratio must exceed 1")

    @classmethod
    def for_grid(cls, spec, kind="E", ratio=RATIO, dense=False):
        """Default span [h, diameter], with the diameter divided by r0 for heat balls."""
        ext = np.subtract(spec.space_hi, spec.space_lo)
        diam = max(float(np.linalg.norm(ext)), math.sqrt(spec.t_hi - spec.t_lo))
        if kind == "E":
            diam /= geometry_constants(spec.n).r0
        return cls(spec.h, diam, ratio, dense)

    def radii(self, rho=None):
        if self.dense:
            u = np.unique(rho[np.isfinite(rho)])
            r = np.nextafter(u, np.inf)
            return r[(r >= self.r_min) & (r <= self.r_max)]
        k = int(math.floor(math.log(self.r_max / self.r_min) / math.log(self.ratio) + 1e-12))
        return self.r_min * self.ratio ** np.arange(k + 1)

    def to_dict(self):
        return {"r_min": self.r_min, "r_max": self.r_max, "ratio": self.ratio, "dense": self.dense}


@dataclass(frozen=True)
class MaximalResult:
    value: float
    radius: float
    radii: RadiusGrid


def lattice_offsets(spec, kind, r_max):
    """Lattice offsets (i, j) inside the ball of radius ``r_max``, sorted by the
    radius of the smallest ball containing them.

    Offsets point from the target to the sample: the sample sits at
    ``(x - i h, t - j tau)``.  Returns (space offsets, time offsets, rho).
    """
    n, h, tau = spec.n, spec.h, spec.tau
    if kind == "E":
        R = r_max * math.sqrt(n / (2 * math.pi * math.e))
        ispan = int(math.floor(R / h))
        jspan = int(math.floor(r_max * r_max / (4 * math.pi * tau)))
        taxis = np.arange(1, jspan + 1)
    elif kind == "Q":
        ispan = int(math.floor(r_max / h))
        jspan = int(math.floor(r_max * r_max / tau))
        taxis = np.arange(-jspan, jspan + 1)
    else:
        raise ParameterError(f"kind must be 'E' or 'Q', got {kind!r}")
    saxis = np.arange(-ispan, ispan + 1)
    grids = np.meshgrid(*([saxis] * n + [taxis]), indexing="ij")
    off = np.stack([g.ravel() for g in grids], axis=-1).astype(np.int64)
    osp, otm = off[:, :n], off[:, n]
    if kind == "E":
        with np.errstate(divide="ignore"):
            phi = heat_kernel(osp * h, otm * tau)
            rho = np.where(phi > 0, phi ** (-1.0 / n), np.inf)
    else:
        rho = np.maximum(np.linalg.norm(osp * h, axis=1), np.sqrt(np.abs(otm) * tau))
    keep = rho < r_max
    osp, otm, rho = osp[keep], otm[keep], rho[keep]
    order = np.argsort(rho, kind="stable")
    return np.ascontiguousarray(osp[order]), np.ascontiguousarray(otm[order]), rho[order]


def _ball_tables(spec, kind, radii_spec):
    osp, otm, rho = lattice_offsets(spec, kind, radii_spec.r_max * (1 + 1e-12))
    radii = radii_spec.radii(rho)
    counts = np.searchsorted(rho, radii, side="left").astype(np.int64)
    return osp, otm, rho, radii, counts


def _maximal_grid(f, kind, radii_spec, backend):
    s = f.spec
    kern = _kernels(backend)
    osp, otm, rho, radii, counts = _ball_tables(s, kind, radii_spec)
    shape = np.asarray(s.space_shape, dtype=np.int64)
    inr = np.all(np.abs(osp) < shape, axis=1) & (np.abs(otm) < s.nt)
    checkpoints = np.searchsorted(np.flatnonzero(inr), counts, side="left").astype(np.int64)
    osp_in, otm_in = np.ascontiguousarray(osp[inr]), np.ascontiguousarray(otm[inr])
    grids = np.meshgrid(*[np.arange(v) for v in shape], indexing="ij")
    tidx = np.stack([g.ravel() for g in grids], axis=-1).astype(np.int64)
    fl = np.ascontiguousarray(f.samples.reshape(-1, s.nt))
    best, arg = kern.prefix_average_max(fl, shape, tidx, osp_in, otm_in, checkpoints, counts)
    return best.reshape(s.shape), arg.reshape(s.shape), radii


def _maximal_points(f, pts, kind, radii_spec):
    s = f.spec
    n = s.n
    osp, otm, rho, radii, counts = _ball_tables(s, kind, radii_spec)
    shape = np.asarray(s.shape)
    lo = np.asarray(s.space_lo + (s.t_lo,))
    steps = np.array([s.h] * n + [s.tau])
    off = np.concatenate([osp, otm[:, None]], axis=1) * steps
    vals = np.empty(len(pts))
    where = np.empty(len(pts))
    for p, pt in enumerate(pts):
        y = pt[None, :] - off
        cell = np.floor((y - lo) / steps).astype(np.int64)
        ok = np.all((cell >= 0) & (cell < shape), axis=1)
        sample = np.zeros(len(off))
        sample[ok] = f.samples[tuple(cell[ok].T)]
        csum = np.concatenate([[0.0], np.cumsum(sample)])
        good = counts > 0
        avg = np.where(good, csum[counts] / np.maximum(counts, 1), -1.0)
        k = int(np.argmax(avg)) if avg.size else -1
        vals[p] = max(avg[k], 0.0) if k >= 0 else 0.0
        where[p] = radii[k] if k >= 0 and avg[k] >= 0 else math.nan
    return vals, where, radii


def _maximal(f, targets, kind, r_grid, backend):
    if r_grid is None:
        r_grid = RadiusGrid.for_grid(f.spec, kind)
    if isinstance(targets, GridSpec):
        if targets != f.spec:
            raise ParameterError("grid maximal functions are evaluated on f's own grid")
        best, _, _ = _maximal_grid(f, kind, r_grid, backend)
        return GridFunction(f.spec, best)
    if isinstance(targets, SpaceTimePoint):
        vals, where, _ = _maximal_points(f, _as_targets(targets, f.n), kind, r_grid)
        return MaximalResult(float(vals[0]), float(where[0]), r_grid)
    vals, _, _ = _maximal_points(f, _as_targets(targets, f.n), kind, r_grid)
    return vals


def maximal_M(f, targets, r_grid=None, backend=None):
    """Heat-ball maximal function: the largest average of f over E_r(target).

    Averages are lattice sums over the ball divided by the number of lattice
    points in it.  A single :class:`SpaceTimePoint` returns a
    :class:`MaximalResult`; an array of targets returns values; ``f.spec``
    returns a :class:`GridFunction` over every node.
    """
    return _maximal(f, targets, "E", r_grid, backend)


def maximal_Mhat(f, targets, r_grid=None, backend=None):
    """Parabolic-cylinder maximal function over Q_r(target)."""
    return _maximal(f, targets, "Q", r_grid, backend)


def ball_average(f, target, r, kind="E"):
    """Lattice average of f over a single ball, as used by the maximal functions."""
    grid = RadiusGrid(r, r * (1 + 1e-12))
    vals, _, radii = _maximal_points(f, _as_targets(target, f.n), kind, grid)
    return float(vals[0]) if radii.size else 0.0
