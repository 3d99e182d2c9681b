"""Empirical verification of the potential and maximal-function estimates.

Every check runs over a seeded corpus.  The first half of the corpus
calibrates the constant (its worst ratio); the check passes when the
held-out half stays within ``SLACK`` of it.  Scale-invariance defects compare
each ratio with the ratio recomputed on the parabolically rescaled function
``f(y / r, s / r^2)`` at rescaled targets.
"""
from dataclasses import asdict, dataclass, field
import math

import mpmath
import numpy as np

from .errors import ParameterError
from .field import GridFunction, GridSpec, LpExponent, integrate, lp_norm
from .kernel import SpaceTimePoint, check_alpha, check_dimension
from .potential import (DEFAULT_TOL, Domain, PotentialParams, RadiusGrid, SlabSpec, heat_potential,
                        local_potential, maximal_M, maximal_Mhat, nonlinear_potential,
                        slab_norm_ratio)

SLACK = 0.25
FAMILIES = ("bump_sums", "gaussian_mixtures", "indicator_unions")


@dataclass(frozen=True)
class CorpusSpec:
    seed: int = 0
    count: int = 20
    family: str = "bump_sums"
    n: int = 1
    space_lo: tuple = (-1.0,)
    space_hi: tuple = (1.0,)
    t_lo: float = 0.0
    t_hi: float = 1.0
    h: float = 0.05
    tau: float = 0.025
    amplitude: tuple = (0.5, 2.0)

    def __post_init__(self):
        check_dimension(self.n)
        if self.count < 1:
            raise ParameterError("corpus count must be >= 1")
        if self.family not in FAMILIES:
            raise ParameterError(f"family must be one of {FAMILIES}, got {self.family!r}")
        lo, hi = self.amplitude
        if not 0 < lo <= hi:
            raise ParameterError("amplitude range must satisfy 0 < lo <= hi")
        if len(self.space_lo) != self.n or len(self.space_hi) != self.n:
            raise ParameterError("support box does not match n")

    @classmethod
    def box(cls, n, **kw):
        return cls(n=n, space_lo=(-1.0,) * n, space_hi=(1.0,) * n, **kw)

    @property
    def grid(self):
        return GridSpec(self.space_lo, self.space_hi, self.t_lo, self.t_hi, self.h, self.tau)

    def to_dict(self):
        d = asdict(self)
        d["space_lo"], d["space_hi"], d["amplitude"] = list(self.space_lo), list(self.space_hi), list(self.amplitude)
        return d


@dataclass(frozen=True)
class CorpusMember:
    id: str
    f: GridFunction
    l1: float
    linf: float
    shape_factor: float


def _bump(rho2):
    inside = rho2 < 1.0
    safe = np.where(inside, rho2, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)


def _member(spec, rng):
    grid = spec.grid
    X, T = grid.mesh()
    n = spec.n
    lo, hi = np.asarray(spec.space_lo), np.asarray(spec.space_hi)
    span, tspan = hi - lo, spec.t_hi - spec.t_lo
    k = int(rng.integers(1, 4))
    amps = rng.uniform(*spec.amplitude, size=k)
    out = np.zeros(grid.shape)
    for a in amps:
        if spec.family == "indicator_unions":
            w = rng.uniform(0.1, 0.35, n) * span
            wt = rng.uniform(0.1, 0.35) * tspan
            c = rng.uniform(lo + w, hi - w)
            ct = rng.uniform(spec.t_lo + wt, spec.t_hi - wt)
            box = np.all(np.abs(X - c) < w, axis=-1) & (np.abs(T - ct) < wt)
            out = np.maximum(out, np.where(box, a, 0.0))
            continue
        w = rng.uniform(0.15, 0.4, n) * span
        wt = rng.uniform(0.15, 0.4) * tspan
        c = rng.uniform(lo + w, hi - w)
        ct = rng.uniform(spec.t_lo + wt, spec.t_hi - wt)
        rho2 = np.sum(((X - c) / w) ** 2, axis=-1) + ((T - ct) / wt) ** 2
        if spec.family == "bump_sums":
            out += a * _bump(rho2)
        else:
            # Gaussian of width w/3 cut off at the ellipsoid boundary
            out += a * np.where(rho2 < 1.0, np.exp(-4.5 * rho2), 0.0)
    f = GridFunction(grid, out)
    linf = float(out.max())
    return f, linf / float(amps.max())


def generate_corpus(spec):
    """Deterministic corpus of compactly supported non-negative grid functions."""
    rng = np.random.default_rng(spec.seed)
    members = []
    for i in range(spec.count):
        f, factor = _member(spec, rng)
        members.append(CorpusMember(f"{spec.family}-{spec.seed}-{i}", f, integrate(f),
                                    float(f.samples.max()), factor))
    return members


@dataclass
class CheckReport:
    check_name: str
    params: dict
    corpus_size: int = 0
    worst_ratio: float = 0.0
    worst_case_id: str = ""
    fitted_constant: float = 0.0
    held_out_worst: float = 0.0
    scale_invariance_defect: float = 0.0
    passed: bool = False
    metadata: dict = field(default_factory=dict)
    members: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d

    def csv_rows(self):
        return [("id", "ratio", "split", "defect")] + [
            (m["id"], m["ratio"], m["split"], m.get("defect", 0.0)) for m in self.members]


def _split_verdict(report, ratios, ids, defects, defect_tol):
    """Fill calibration constant, held-out worst and pass flag from per-member ratios."""
    idx = [i for i, r in enumerate(ratios) if r is not None]
    if not idx:
        report.passed = True
        return report
    half = max(1, (len(ratios) + 1) // 2)
    calib = [ratios[i] for i in idx if i < half]
    held = [ratios[i] for i in idx if i >= half]
    report.fitted_constant = max(calib) if calib else max(held)
    report.held_out_worst = max(held) if held else 0.0
    w = max(idx, key=lambda i: ratios[i])
    report.worst_ratio = ratios[w]
    report.worst_case_id = ids[w]
    report.scale_invariance_defect = max(defects) if defects else 0.0
    report.members = [{"id": ids[i], "ratio": ratios[i], "split": "calibration" if i < half else "held_out",
                       "defect": defects[i] if i < len(defects) else 0.0} for i in idx]
    report.passed = (report.held_out_worst <= (1 + SLACK) * report.fitted_constant
                     and report.scale_invariance_defect < defect_tol)
    return report


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def hedberg_targets(spec, count=16):
    """A fixed 4 x 4 pattern of targets across the support box (time last)."""
    k = int(math.ceil(count ** (1 / 2)))
    lo, hi = np.asarray(spec.space_lo), np.asarray(spec.space_hi)
    xs = [lo + (hi - lo) * (0.2 + 0.6 * i / max(k - 1, 1)) for i in range(k)]
    ts = [spec.t_lo + (spec.t_hi - spec.t_lo) * (0.3 + 0.75 * j / max(k - 1, 1)) for j in range(k)]
    pts = [np.concatenate([x, [t]]) for x in xs for t in ts]
    return np.array(pts[:max(count, 16)])


def _scaled_targets(pts, r):
    out = pts.copy()
    out[:, :-1] *= r
    out[:, -1] *= r * r
    return out


def _hedberg_ratio(f, alpha, p, pts, tol):
    n = f.n
    theta = alpha * p / (n + 2)
    J = heat_potential(f, alpha, pts, tol)
    M = maximal_M(f, pts)
    norm = lp_norm(f, p)
    rhs = norm ** theta * M ** (1 - theta)
    ok = rhs > 0
    if not np.any(ok):
        return None, None
    ratios = np.where(ok, J / np.where(ok, rhs, 1.0), 0.0)
    k = int(np.argmax(ratios))
    return float(ratios[k]), pts[k]


def check_hedberg(corpus, n, alpha, p, targets=16, rescale=(2.0,), tol=DEFAULT_TOL):
    """J_alpha f <= C ||f||_p^{alpha p/(n+2)} (Mf)^{1 - alpha p/(n+2)} at fixed targets."""
    check_dimension(n)
    check_alpha(alpha, n)
    p = LpExponent(p)
    if not p < (n + 2) / alpha:
        raise ParameterError(f"requires 1 <= p < (n+2)/alpha = {(n + 2) / alpha:.6g} (Hedberg inequality)")
    members = _members(corpus)
    report = CheckReport("hedberg", {"n": n, "alpha": alpha, "p": float(p)})
    ratios, ids, defects, where = [], [], [], {}
    for m in members:
        pts = hedberg_targets(m.f.spec, targets)
        r0, loc = _hedberg_ratio(m.f, alpha, p, pts, tol)
        ids.append(m.id)
        ratios.append(r0)
        if r0 is None:
            defects.append(0.0)
            continue
        where[m.id] = [float(v) for v in loc]
        d = 0.0
        for r in rescale:
            rr, _ = _hedberg_ratio(m.f.rescaled(r), alpha, p, _scaled_targets(pts, r), tol)
            d = max(d, _rel(r0, rr))
        defects.append(d)
    report.corpus_size = len(members)
    _split_verdict(report, ratios, ids, defects, 1e-3)
    report.extra["worst_location"] = where.get(report.worst_case_id)
    report.metadata = _meta(corpus, tol, targets=targets, rescale=list(rescale))
    return report


def check_hedberg_split(corpus, n, alpha, p, rhos=(0.1, 0.2, 0.4, 0.8), targets=16, tol=DEFAULT_TOL):
    """Near part <= C1 rho^alpha Mf and far part <= C2 rho^{alpha-(n+2)/p} ||f||_p.

    Both constants are fitted on the calibration half and held fixed.
    """
    check_alpha(alpha, n)
    p = LpExponent(p)
    members = _members(corpus)
    near_r, far_r, ids = [], [], []
    for m in members:
        f = m.f
        pts = hedberg_targets(f.spec, targets)
        total = heat_potential(f, alpha, pts, tol)
        M = maximal_M(f, pts)
        norm = lp_norm(f, p)
        wn = wf = None
        for k, pt in enumerate(pts):
            centre = SpaceTimePoint(pt[:-1], pt[-1])
            for rho in rhos:
                near = float(local_potential(f, Domain.heat_ball(rho, centre), alpha, pt[None, :], tol)[0])
                far = max(float(total[k]) - near, 0.0)
                if M[k] > 0:
                    v = near / (rho ** alpha * M[k])
                    wn = v if wn is None else max(wn, v)
                if norm > 0:
                    v = far / (rho ** (alpha - (n + 2) / p) * norm)
                    wf = v if wf is None else max(wf, v)
        near_r.append(wn)
        far_r.append(wf)
        ids.append(m.id)
    near_rep = _split_verdict(CheckReport("hedberg_near", {}), near_r, ids, [], 1.0)
    far_rep = _split_verdict(CheckReport("hedberg_far", {}), far_r, ids, [], 1.0)
    report = CheckReport("hedberg_split", {"n": n, "alpha": alpha, "p": float(p), "rhos": list(rhos)},
                         corpus_size=len(members))
    report.worst_ratio = max(near_rep.worst_ratio / max(near_rep.fitted_constant, 1e-300),
                             far_rep.worst_ratio / max(far_rep.fitted_constant, 1e-300))
    report.fitted_constant = 1.0
    report.held_out_worst = report.worst_ratio
    report.passed = near_rep.passed and far_rep.passed
    report.extra = {"near": _summary(near_rep), "far": _summary(far_rep)}
    report.members = near_rep.members
    report.metadata = _meta(corpus, tol, targets=targets)
    return report


def _summary(rep):
    return {"fitted_constant": rep.fitted_constant, "held_out_worst": rep.held_out_worst,
            "worst_case_id": rep.worst_case_id, "pass": rep.passed}


def _members(corpus):
    if isinstance(corpus, CorpusSpec):
        return generate_corpus(corpus)
    return list(corpus)


def _meta(corpus, tol, **kw):
    meta = {"tol": tol, "slack": SLACK}
    if isinstance(corpus, CorpusSpec):
        meta["corpus"] = corpus.to_dict()
        meta["seeds"] = [corpus.seed]
    meta.update(kw)
    return meta


def _maximal_ratio(f, p):
    M = maximal_M(f, f.spec)
    den = lp_norm(f, p)
    return lp_norm(M, p) / den if den > 0 else None


def check_maximal_strong(corpus, n, p, rescale=(2.0,)):
    """||Mf||_p <= C ||f||_p with Mf sampled on f's grid."""
    check_dimension(n)
    p = LpExponent(p)
    if not p > 1:
        raise ParameterError("requires p > 1 (the strong maximal inequality fails at p = 1)")
    members = _members(corpus)
    report = CheckReport("maximal_strong", {"n": n, "p": float(p)}, corpus_size=len(members))
    ratios, ids, defects = [], [], []
    for m in members:
        r0 = _maximal_ratio(m.f, p)
        ratios.append(r0)
        ids.append(m.id)
        d = 0.0
        if r0 is not None:
            for r in rescale:
                d = max(d, _rel(r0, _maximal_ratio(m.f.rescaled(r), p)))
        defects.append(d)
    _split_verdict(report, ratios, ids, defects, 1e-3)
    report.metadata = _meta(corpus, 0.0, radius_ratio=RadiusGrid.__dataclass_fields__["ratio"].default)
    return report


def padded(f, frac=0.5):
    """``f`` extended by zeros on a box ``frac`` of its width larger on every side."""
    s = f.spec
    ks = [int(math.ceil(frac * v)) for v in s.space_shape]
    kt = int(math.ceil(frac * s.nt))
    lo = np.asarray(s.space_lo) - np.asarray(ks) * s.h
    hi = np.asarray(s.space_hi) + np.asarray(ks) * s.h
    spec = GridSpec(lo, hi, s.t_lo - kt * s.tau, s.t_hi + kt * s.tau, s.h, s.tau)
    return GridFunction(spec, np.pad(f.samples, [(k, k) for k in ks] + [(kt, kt)]))


def check_weak_maximal(corpus, n, points=32, pad=0.5):
    """|{Mhat g > lambda}| <= 5^{n+2} ||g||_1 / lambda on a geometric lambda grid."""
    check_dimension(n)
    members = _members(corpus)
    bound = 5.0 ** (n + 2)
    report = CheckReport("weak_maximal", {"n": n, "points": points}, corpus_size=len(members))
    worst, worst_id, rows, ok = 0.0, "", [], True
    for m in members:
        g = padded(m.f, pad)
        l1 = integrate(g)
        if l1 == 0:
            continue
        supp = float(np.count_nonzero(g.samples)) * g.spec.cell_volume
        lam = np.geomspace(l1 / supp, float(g.samples.max()), points)
        Mh = maximal_Mhat(g, g.spec).samples
        vol = np.array([np.count_nonzero(Mh > v) for v in lam]) * g.spec.cell_volume
        tight = vol * lam / l1
        ok &= bool(np.all(tight <= bound))
        k = int(np.argmax(tight))
        rows.append({"id": m.id, "ratio": float(tight[k]), "split": "all", "lambda": float(lam[k])})
        if tight[k] > worst:
            worst, worst_id = float(tight[k]), m.id
    report.worst_ratio = worst
    report.worst_case_id = worst_id
    report.fitted_constant = bound
    report.held_out_worst = worst
    report.passed = ok
    report.members = rows
    report.metadata = {"bound": bound, "lambda_points": points, "pad": pad, "seeds": _seeds(corpus)}
    return report


def _seeds(corpus):
    return [corpus.seed] if isinstance(corpus, CorpusSpec) else []


def sobolev_exponent(n, alpha, p):
    return (n + 2) * p / (n + 2 - alpha * p)


def potential_window(f, t_factor=2.0, pad=6.0):
    """Output grid for global norms of a potential: f's box widened by ``pad``
    sqrt(duration) in space and extended forward ``t_factor`` durations."""
    s = f.spec
    dur = s.t_hi - s.t_lo
    k = int(math.ceil(pad * math.sqrt(dur) / s.h))
    kt = int(math.ceil(t_factor * dur / s.tau))
    lo = np.asarray(s.space_lo) - k * s.h
    hi = np.asarray(s.space_hi) + k * s.h
    return GridSpec(lo, hi, s.t_lo, s.t_hi + kt * s.tau, s.h, s.tau)


def _sobolev_ratio(f, alpha, p, q, tol):
    den = lp_norm(f, p)
    if den == 0:
        return None
    J = heat_potential(f, alpha, potential_window(f), tol)
    return lp_norm(J, q) / den


def check_sobolev(corpus, n, alpha, p, rescale=(2.0,), tol=DEFAULT_TOL):
    """||J_alpha f||_q <= C ||f||_p with q = (n+2)p/(n+2-alpha p)."""
    check_dimension(n)
    check_alpha(alpha, n)
    p = LpExponent(p)
    if not 1 < p < (n + 2) / alpha:
        raise ParameterError(f"requires 1 < p < (n+2)/alpha = {(n + 2) / alpha:.6g} (Sobolev inequality)")
    q = sobolev_exponent(n, alpha, p)
    members = _members(corpus)
    report = CheckReport("sobolev", {"n": n, "alpha": alpha, "p": float(p), "q": q}, corpus_size=len(members))
    ratios, ids, defects = [], [], []
    for m in members:
        r0 = _sobolev_ratio(m.f, alpha, p, q, tol)
        ratios.append(r0)
        ids.append(m.id)
        d = 0.0
        if r0 is not None:
            for r in rescale:
                d = max(d, _rel(r0, _sobolev_ratio(m.f.rescaled(r), alpha, p, q, tol)))
        defects.append(d)
    _split_verdict(report, ratios, ids, defects, 1e-3)
    report.metadata = _meta(corpus, tol, window="box + 6 sqrt(T) in space, +2T in time")
    return report


def _nonlinear_ratio(f, params, tol, refine):
    e_r, e_inf = params.norm_exponents
    rhs = lp_norm(f, params.r) ** e_r * lp_norm(f, math.inf) ** e_inf
    if rhs == 0:
        return None, 0.0
    window = potential_window(f, t_factor=1.0, pad=3.0)
    if refine > 1:
        s = window
        window = GridSpec(s.space_lo, s.space_hi, s.t_lo, s.t_hi, s.h / refine, s.tau / refine ** 2)
    U = nonlinear_potential(f, params, window, refine=refine, pad=3.0, quad_tol=tol)
    lhs = float(U.samples.max())
    return lhs / rhs, lhs


def check_nonlinear(corpus, n, alpha, beta, sigma, r, rescale=(2.0,), refine=1, tol=DEFAULT_TOL):
    """sup J_alpha*((J_beta*f)^sigma) <= C ||f||_r^{(alpha+beta sigma) r/(n+2)} ||f||_inf^{...}."""
    params = PotentialParams(n, alpha, beta, sigma, r).validate()
    members = _members(corpus)
    report = CheckReport("nonlinear", {"n": n, "alpha": alpha, "beta": beta, "sigma": sigma, "r": r},
                         corpus_size=len(members))
    ratios, ids, defects, amp = [], [], [], 0.0
    for m in members:
        r0, _ = _nonlinear_ratio(m.f, params, tol, refine)
        ratios.append(r0)
        ids.append(m.id)
        d = 0.0
        if r0 is not None:
            for s in rescale:
                rr, _ = _nonlinear_ratio(m.f.rescaled(s), params, tol, refine)
                d = max(d, _rel(r0, rr))
        defects.append(d)
    if members and ratios[0] is not None:
        doubled, _ = _nonlinear_ratio(members[0].f.scale(2.0), params, tol, refine)
        amp = _rel(ratios[0], doubled)
    _split_verdict(report, ratios, ids, defects, 1e-3)
    report.extra["amplitude_defect"] = amp
    report.extra["norm_exponents"] = list(params.norm_exponents)
    report.metadata = _meta(corpus, tol, refine=refine)
    return report


# --- layer cake ------------------------------------------------------------------

def layer_cake_sides(values, cell, a, b, alpha, dps=40):
    """Both sides of the layer-cake identity for piecewise-constant g, summed exactly.

    ``values`` are the cell values of g and ``cell`` the cell measure.
    """
    with mpmath.workdps(dps):
        a, b, alpha, cell = (mpmath.mpf(v) for v in (a, b, alpha, cell))
        vals = [mpmath.mpf(float(v)) for v in values if v > 0]
        c = alpha ** (a + 1) / (a + 1)
        lhs = c * mpmath.fsum(v ** (a + b + 1) for v in vals) * cell
        levels = sorted(set(vals))
        rhs = mpmath.mpf(0)
        prev = mpmath.mpf(0)
        for lv in levels:
            # lambda in [alpha*prev, alpha*lv): the super-level set is {g >= lv}
            mass = mpmath.fsum(v ** b for v in vals if v >= lv) * cell
            rhs += c * (lv ** (a + 1) - prev ** (a + 1)) * mass
            prev = lv
        return lhs, rhs


def check_layer_cake(trials=100, seed=0, cells=64, levels=6):
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst, worst_id, rows = 0.0, "", []
    for i in range(trials):
        a = rng.uniform(-1.0, 3.0)
        if a <= -1.0:
            a = -1.0 + 1e-6
        b = rng.uniform(0.0, 3.0)
        alpha = rng.uniform(0.0, 4.0) or 1e-6
        lv = rng.uniform(0.0, 2.0, size=levels)
        g = rng.choice(np.concatenate([[0.0], lv]), size=cells)
        cell = rng.uniform(0.01, 0.1)
        lhs, rhs = layer_cake_sides(g, cell, a, b, alpha)
        defect = float(abs(lhs - rhs))
        rows.append({"id": f"trial-{i}", "ratio": defect, "split": "all",
                     "a": a, "b": b, "alpha": alpha, "lhs": float(lhs)})
        if defect >= worst:
            worst, worst_id = defect, f"trial-{i}"
    report = CheckReport("layer_cake", {"trials": trials, "cells": cells, "levels": levels},
                         corpus_size=trials, worst_ratio=worst, worst_case_id=worst_id,
                         held_out_worst=worst, fitted_constant=1e-10, passed=worst < 1e-10,
                         members=rows, metadata={"seeds": [seed], "dps": 40})
    return report


# --- slab operator scaling ------------------------------------------------------------

def slab_exponent(n, alpha, delta):
    return (alpha - (n + 2) * delta) / 2


def check_slab_scaling(f, alpha, p, q, slab, factors=(1.0, 2.0, 4.0), tol=DEFAULT_TOL):
    """Log-log slope of ||V_alpha f||_q / ||f||_p against slab width.

    f and the slab are dilated parabolically so the widths run over
    ``factors`` times the base width.
    """
    n = f.n
    p, q = LpExponent(p), LpExponent(q)
    delta = 1 / p - 1 / q
    widths, ratios = [], []
    for k in factors:
        r = math.sqrt(k)
        g = f.rescaled(r)
        sl = SlabSpec(slab.a * k, slab.b * k)
        widths.append(sl.width)
        ratios.append(slab_norm_ratio(g, alpha, p, q, sl, tol=tol))
    slope = float(np.polyfit(np.log(widths), np.log(ratios), 1)[0])
    expected = slab_exponent(n, alpha, delta)
    err = abs(slope - expected) / abs(expected) if expected else abs(slope)
    return CheckReport("slab_scaling", {"n": n, "alpha": alpha, "p": float(p), "q": float(q), "delta": delta},
                       corpus_size=1, worst_ratio=err, fitted_constant=0.05, held_out_worst=err,
                       passed=err <= 0.05,
                       extra={"slope": slope, "expected": expected, "widths": widths, "ratios": ratios},
                       metadata={"tol": tol})
