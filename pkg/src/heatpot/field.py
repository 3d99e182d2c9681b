"""Sampled functions on uniform space-time boxes.

Samples sit at cell centres; the last array axis is time.  A grid with
spatial box ``[lo, hi]`` and step ``h`` has ``(hi - lo) / h`` cells per axis,
centred at ``lo + (i + 1/2) h``.
"""
from dataclasses import dataclass
import json
import math

import numpy as np

from .errors import DomainError, ParameterError
from .kernel import check_dimension

GRID_FORMAT = "heatpot-grid"
GRID_VERSION = 1


def _cells(lo, hi, step, what):
    count = (hi - lo) / step
    k = int(round(count))
    if k < 1 or abs(count - k) > 1e-9 * max(1.0, count):
        raise ParameterError(f"{what}: extent {hi - lo!r} is not an integer multiple of step {step!r}")
    return k


@dataclass(frozen=True)
class GridSpec:
    space_lo: tuple
    space_hi: tuple
    t_lo: float
    t_hi: float
    h: float
    tau: float

    def __init__(self, space_lo, space_hi, t_lo, t_hi, h, tau):
        lo = tuple(float(v) for v in np.atleast_1d(space_lo))
        hi = tuple(float(v) for v in np.atleast_1d(space_hi))
        if len(lo) != len(hi):
            raise ParameterError("space_lo and space_hi differ in length")
        check_dimension(len(lo))
        if h <= 0 or tau <= 0:
            raise ParameterError("grid steps must be positive")
        for name, value in (("space_lo", lo), ("space_hi", hi)):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "t_lo", float(t_lo))
        object.__setattr__(self, "t_hi", float(t_hi))
        object.__setattr__(self, "h", float(h))
        object.__setattr__(self, "tau", float(tau))
        for d in range(len(lo)):
            _cells(lo[d], hi[d], h, f"axis {d}")
        _cells(t_lo, t_hi, tau, "time axis")

    @classmethod
    def from_counts(cls, space_lo, h, counts, t_lo, tau, nt):
        lo = np.atleast_1d(np.asarray(space_lo, dtype=float))
        counts = np.atleast_1d(counts)
        return cls(lo, lo + counts * h, t_lo, t_lo + nt * tau, h, tau)

    @property
    def n(self):
        return len(self.space_lo)

    @property
    def space_shape(self):
        return tuple(_cells(self.space_lo[d], self.space_hi[d], self.h, "") for d in range(self.n))

    @property
    def nt(self):
        return _cells(self.t_lo, self.t_hi, self.tau, "")

    @property
    def shape(self):
        return self.space_shape + (self.nt,)

    @property
    def cell_volume(self):
        return self.h ** self.n * self.tau

    def axis(self, d):
        """Cell centres along spatial axis ``d``."""
        k = self.space_shape[d]
        return self.space_lo[d] + (np.arange(k) + 0.5) * self.h

    def times(self):
        return self.t_lo + (np.arange(self.nt) + 0.5) * self.tau

    def mesh(self):
        """Arrays ``(X, T)`` with ``X`` of shape (*shape, n) and ``T`` of shape ``shape``."""
        axes = [self.axis(d) for d in range(self.n)] + [self.times()]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack(grids[:-1], axis=-1), grids[-1]

    def scaled(self, r):
        """The grid relabelled by x -> r x, t -> r^2 t."""
        return GridSpec(np.multiply(self.space_lo, r), np.multiply(self.space_hi, r),
                        self.t_lo * r * r, self.t_hi * r * r, self.h * r, self.tau * r * r)

    def shifted(self, dx, dt):
        dx = np.broadcast_to(np.asarray(dx, dtype=float), (self.n,))
        return GridSpec(np.add(self.space_lo, dx), np.add(self.space_hi, dx),
                        self.t_lo + dt, self.t_hi + dt, self.h, self.tau)

    def to_dict(self):
        return {"n": self.n, "space_lo": list(self.space_lo), "space_hi": list(self.space_hi),
                "t_lo": self.t_lo, "t_hi": self.t_hi, "h": self.h, "tau": self.tau,
                "shape": list(self.shape)}


class LpExponent(float):
    """An exponent p in [1, inf]; ``LpExponent(math.inf)`` is the sup norm."""

    def __new__(cls, p):
        p = float(p)
        if not p >= 1:
            raise ParameterError(f"Lp exponent must be >= 1, got {p!r}")
        return super().__new__(cls, p)

    @property
    def infinite(self):
        return math.isinf(self)


class GridFunction:
    """Immutable samples on a :class:`GridSpec`.

    Samples must be non-negative unless ``signed`` is set, which is reserved
    for diagnostic output such as heat residuals.
    """

    __slots__ = ("spec", "samples", "signed")

    def __init__(self, spec, samples, signed=False):
        arr = np.array(samples, dtype=float)
        if arr.shape != spec.shape:
            raise ParameterError(f"samples have shape {arr.shape}, grid expects {spec.shape}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("samples must be finite")
        if not signed and np.any(arr < 0):
            raise ParameterError("samples must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "signed", bool(signed))

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    def __repr__(self):
        return f"GridFunction(shape={self.spec.shape}, signed={self.signed})"

    @classmethod
    def from_callable(cls, spec, func, signed=False):
        X, T = spec.mesh()
        return cls(spec, func(X, T), signed=signed)

    @classmethod
    def zeros(cls, spec):
        return cls(spec, np.zeros(spec.shape))

    @property
    def n(self):
        return self.spec.n

    def _new(self, samples, signed=None):
        return GridFunction(self.spec, samples, self.signed if signed is None else signed)

    # pointwise algebra
    def power(self, sigma):
        if self.signed:
            raise DomainError("power is defined for non-negative grids only")
        return self._new(self.samples ** sigma)

    def add_scalar(self, c):
        return self._new(self.samples + c)

    def add(self, other):
        if other.spec != self.spec:
            raise ParameterError("grids differ")
        return self._new(self.samples + other.samples, self.signed or other.signed)

    def scale(self, c):
        return self._new(self.samples * c, self.signed or c < 0)

    def offset_heat_floor(self):
        """Add (1/sqrt t)^n at each time level."""
        if self.spec.t_lo <= 0:
            raise DomainError("offset_heat_floor needs t_lo > 0")
        floor = self.spec.times() ** (-0.5 * self.n)
        return self._new(self.samples + floor)

    def time_window(self, j0, j1):
        """Sub-grid of time levels ``j0 <= j < j1``."""
        s = self.spec
        sub = GridSpec(s.space_lo, s.space_hi, s.t_lo + j0 * s.tau, s.t_lo + j1 * s.tau, s.h, s.tau)
        return GridFunction(sub, self.samples[..., j0:j1], self.signed)

    def rescaled(self, r):
        """g(y, s) = f(y / r, s / r^2), exact on the relabelled grid."""
        return GridFunction(self.spec.scaled(r), self.samples, self.signed)

    # serialisation
    def dumps(self):
        header = dict(self.spec.to_dict(), format=GRID_FORMAT, version=GRID_VERSION,
                      count=int(self.samples.size), signed=self.signed,
                      dtype="float64", byte_order="little", order="C")
        head = json.dumps(header, sort_keys=True).encode() + b"\n"
        return head + np.ascontiguousarray(self.samples, dtype="<f8").tobytes()

    @classmethod
    def loads(cls, blob):
        line, _, body = blob.partition(b"\n")
        head = json.loads(line)
        if head.get("format") != GRID_FORMAT:
            raise ParameterError("not a heatpot grid file")
        spec = GridSpec(head["space_lo"], head["space_hi"], head["t_lo"], head["t_hi"],
                        head["h"], head["tau"])
        data = np.frombuffer(body, dtype="<f8")
        if data.size != head["count"]:
            raise ParameterError(f"expected {head['count']} samples, found {data.size}")
        return cls(spec, data.reshape(spec.shape), head["signed"])

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.loads(fh.read())


def integrate(f):
    """Midpoint-rule integral; exact for cellwise-constant data."""
    return float(f.samples.sum() * f.spec.cell_volume)


def lp_norm(f, p):
    p = LpExponent(p)
    a = np.abs(f.samples)
    if p.infinite:
        return float(a.max())
    if p == 1:
        return float(a.sum() * f.spec.cell_volume)
    top = a.max()
    if top == 0:
        return 0.0
    # factor out the max to keep a ** p in range
    return float(top * ((a / top) ** p).sum() ** (1 / p) * f.spec.cell_volume ** (1 / p))


def heat_residual(u):
    """u_t - Laplace(u) by centred differences on interior nodes.

    The result lives on the grid shrunk by one cell on every side and may be
    negative.
    """
    s = u.spec
    if min(s.shape) < 3:
        raise ParameterError("heat_residual needs at least 3 nodes per axis")
    a = u.samples
    inner = (slice(1, -1),) * (s.n + 1)
    dt = (a[(slice(1, -1),) * s.n + (slice(2, None),)]
          - a[(slice(1, -1),) * s.n + (slice(None, -2),)]) / (2 * s.tau)
    lap = np.zeros_like(dt)
    for d in range(s.n):
        up = list(inner)
        dn = list(inner)
        up[d] = slice(2, None)
        dn[d] = slice(None, -2)
        lap += (a[tuple(up)] - 2 * a[inner] + a[tuple(dn)]) / (s.h * s.h)
    sub = GridSpec(np.add(s.space_lo, s.h), np.subtract(s.space_hi, s.h),
                   s.t_lo + s.tau, s.t_hi - s.tau, s.h, s.tau)
    return GridFunction(sub, dt - lap, signed=True)


def interior(f):
    """Samples of ``f`` on the nodes where :func:`heat_residual` is defined."""
    return f.samples[(slice(1, -1),) * (f.n + 1)]
