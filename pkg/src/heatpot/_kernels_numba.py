"""Numba-compiled hot loops.

Every function here has a twin with the same signature in
``_kernels_numpy``; ``_backend`` picks one at import time.
"""
import math

import numpy as np
from numba import njit

MAX_LEVELS = 64
SATURATION = 160.0


@njit(cache=True)
def _half_erf_diff(a, b):
    # 0.5 * (erf(b) - erf(a)) for a <= b, without cancellation in the tails
    if a >= 0.0:
        return 0.5 * (math.erfc(a) - math.erfc(b))
    if b <= 0.0:
        return 0.5 * (math.erfc(-b) - math.erfc(-a))
    return 0.5 * (math.erf(b) - math.erf(a))


@njit(cache=True)
def _integrand(tau, A, B, gamma, alpha, pref):
    s = math.sqrt(gamma / (4.0 * tau))
    val = pref * (4.0 * math.pi * tau) ** (0.5 * (alpha - 2.0))
    for d in range(A.shape[0]):
        val *= _half_erf_diff(s * A[d], s * B[d])
    return val


@njit(cache=True)
def _gauss(lo, hi, A, B, gamma, alpha, pref, nodes, weights):
    mid = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    acc = 0.0
    for q in range(nodes.shape[0]):
        acc += weights[q] * _integrand(mid + half * nodes[q], A, B, gamma, alpha, pref)
    return acc * half


@njit(cache=True)
def cell_integral(A, B, tau0, tau1, gamma, alpha, nodes, weights):
    """Integral of Phi^gamma over one cell; returns (value, error bound)."""
    if tau1 <= 0.0:
        return 0.0, 0.0
    n = A.shape[0]
    pref = gamma ** (-0.5 * n)
    if tau0 > 0.0:
        m = max(1, int(math.ceil(math.log2(tau1 / tau0))))
        ratio = (tau1 / tau0) ** (1.0 / m)
        total = 0.0
        lo = tau0
        for k in range(m):
            hi = tau1 if k == m - 1 else lo * ratio
            total += _gauss(lo, hi, A, B, gamma, alpha, pref, nodes, weights)
            lo = hi
        return total, 0.0

    dmin = np.inf
    d0 = 1.0
    for d in range(n):
        a = A[d]
        b = B[d]
        if a != 0.0:
            dmin = min(dmin, abs(a))
        if b != 0.0:
            dmin = min(dmin, abs(b))
        d0 *= 0.5 * (np.sign(b) - np.sign(a))
    stop = gamma * dmin * dmin / SATURATION
    total = 0.0
    hi = tau1
    resolved = False
    for k in range(MAX_LEVELS):
        lo = 0.5 * hi
        total += _gauss(lo, hi, A, B, gamma, alpha, pref, nodes, weights)
        hi = lo
        if dmin == np.inf or hi <= stop:
            resolved = True
            break
    head = pref * (4.0 * math.pi) ** (0.5 * (alpha - 2.0)) * hi ** (0.5 * alpha) / (0.5 * alpha)
    err = 0.0 if resolved else head
    return total + d0 * head, err


@njit(cache=True)
def cell_integrals(A, B, tau0, tau1, gamma, alpha, nodes, weights):
    m = tau0.shape[0]
    out = np.empty(m)
    err = np.empty(m)
    for i in range(m):
        out[i], err[i] = cell_integral(A[i], B[i], tau0[i], tau1[i], gamma, alpha, nodes, weights)
    return out, err


@njit(cache=True)
def potential_at_points(values, lo, hi, s_lo, s_hi, targets, gamma, alpha, nodes, weights):
    """Sum of value * (cell integral) over source cells, for every target.

    ``lo``/``hi`` are (m, n) cell corners, ``s_lo``/``s_hi`` (m,) time faces,
    ``targets`` (P, n + 1) with time last.
    """
    P = targets.shape[0]
    m = values.shape[0]
    n = lo.shape[1]
    out = np.zeros(P)
    err = np.zeros(P)
    A = np.empty(n)
    B = np.empty(n)
    for p in range(P):
        t = targets[p, n]
        acc = 0.0
        eacc = 0.0
        for c in range(m):
            tau1 = t - s_lo[c]
            if tau1 <= 0.0:
                continue
            tau0 = max(t - s_hi[c], 0.0)
            for d in range(n):
                A[d] = targets[p, d] - hi[c, d]
                B[d] = targets[p, d] - lo[c, d]
            v, e = cell_integral(A, B, tau0, tau1, gamma, alpha, nodes, weights)
            acc += values[c] * v
            eacc += abs(values[c]) * e
        out[p] = acc
        err[p] = eacc
    return out, err


@njit(cache=True)
def causal_convolve(values, src_flat, src_t, W, w_index, t_shift, nt_out):
    """Lattice convolution ``out[i, j] = sum f[k, l] W[w(i) - w(k), j + t_shift - l]``.

    ``w_index`` (S_out,) holds the flat W row of each output site for the
    source at spatial origin; ``src_flat`` gives the row shift of each source.
    W columns are indexed by the non-negative time lag in steps; ``t_shift``
    is the output time origin minus the source time origin.
    """
    S_out = w_index.shape[0]
    out = np.zeros((S_out, nt_out))
    for q in range(values.shape[0]):
        v = values[q]
        base = src_flat[q]
        l = src_t[q]
        j0 = max(0, l - t_shift)
        for i in range(S_out):
            row = w_index[i] - base
            for j in range(j0, nt_out):
                out[i, j] += v * W[row, j + t_shift - l]
    return out


@njit(cache=True)
def prefix_average_max(f, shape, target_idx, off_space, off_time, checkpoints, counts):
    """Running sums of f over offsets in ball order, maximised over radii.

    ``f`` is (S, Nt) with spatial sites flattened C-order from ``shape``;
    every grid node is a target.  ``checkpoints[r]`` is the number of
    in-range offsets inside ball r and ``counts[r]`` the full lattice count.
    Offsets are swept outermost over a zero-padded copy so the inner loop
    runs contiguously in time.
    """
    S = f.shape[0]
    nt = f.shape[1]
    n = shape.shape[0]
    R = checkpoints.shape[0]
    Q = off_time.shape[0]
    pad = np.zeros(n, dtype=np.int64)
    for q in range(Q):
        for d in range(n):
            pad[d] = max(pad[d], abs(off_space[q, d]))
    pad_t = 0
    for q in range(Q):
        pad_t = max(pad_t, abs(off_time[q]))
    pshape = shape + 2 * pad
    ntp = nt + 2 * pad_t
    pstrides = np.empty(n, dtype=np.int64)
    acc_stride = ntp
    for d in range(n - 1, -1, -1):
        pstrides[d] = acc_stride
        acc_stride *= pshape[d]
    P = np.zeros(acc_stride)
    base = np.empty(S, dtype=np.int64)
    for s in range(S):
        b = pad_t
        for d in range(n):
            b += (target_idx[s, d] + pad[d]) * pstrides[d]
        base[s] = b
        for j in range(nt):
            P[b + j] = f[s, j]
    acc = np.zeros((S, nt))
    best = np.full((S, nt), -1.0)
    arg = np.full((S, nt), -1, dtype=np.int64)
    q = 0
    for r in range(R):
        stop = checkpoints[r]
        while q < stop:
            shift = -off_time[q]
            for d in range(n):
                shift -= off_space[q, d] * pstrides[d]
            for s in range(S):
                b = base[s] + shift
                for j in range(nt):
                    acc[s, j] += P[b + j]
            q += 1
        if counts[r] > 0:
            c = counts[r]
            for s in range(S):
                for j in range(nt):
                    val = acc[s, j] / c
                    if val > best[s, j]:
                        best[s, j] = val
                        arg[s, j] = r
    for s in range(S):
        for j in range(nt):
            if best[s, j] < 0.0:
                best[s, j] = 0.0
    return best, arg
