"""Pure-numpy versions of the hot loops in ``_kernels_numba``.

Same signatures and results up to floating-point summation order; these are
selected with ``HEATPOT_BACKEND=numpy`` and serve as the reference path in the
backend benchmark.
"""
import numpy as np
from scipy.special import erf, erfc

MAX_LEVELS = 64
SATURATION = 160.0


def _half_erf_diff(a, b):
    out = 0.5 * (erf(b) - erf(a))
    right = a >= 0.0
    left = b <= 0.0
    out = np.where(right, 0.5 * (erfc(a) - erfc(b)), out)
    out = np.where(left, 0.5 * (erfc(-b) - erfc(-a)), out)
    return out


def _gauss(lo, hi, A, B, gamma, alpha, pref, nodes, weights):
    # lo, hi: (m,), A, B: (m, n) -> (m,)
    mid = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    tau = mid[:, None] + half[:, None] * nodes[None, :]
    s = np.sqrt(gamma / (4.0 * tau))
    val = pref * (4.0 * np.pi * tau) ** (0.5 * (alpha - 2.0))
    for d in range(A.shape[1]):
        val = val * _half_erf_diff(s * A[:, d, None], s * B[:, d, None])
    return (val @ weights) * half


def cell_integrals(A, B, tau0, tau1, gamma, alpha, nodes, weights):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    tau0 = np.asarray(tau0, dtype=float)
    tau1 = np.asarray(tau1, dtype=float)
    m, n = A.shape
    pref = gamma ** (-0.5 * n)
    out = np.zeros(m)
    err = np.zeros(m)

    live = tau1 > 0.0
    regular = live & (tau0 > 0.0)
    if regular.any():
        idx = np.flatnonzero(regular)
        t0, t1 = tau0[idx], tau1[idx]
        pieces = np.maximum(1, np.ceil(np.log2(t1 / t0)).astype(np.int64))
        ratio = (t1 / t0) ** (1.0 / pieces)
        lo = t0.copy()
        for k in range(int(pieces.max())):
            act = k < pieces
            last = k == pieces - 1
            hi = np.where(last, t1, lo * ratio)
            sel = np.flatnonzero(act)
            out[idx[sel]] += _gauss(lo[sel], hi[sel], A[idx[sel]], B[idx[sel]],
                                    gamma, alpha, pref, nodes, weights)
            lo = np.where(act, hi, lo)

    singular = live & (tau0 <= 0.0)
    if singular.any():
        idx = np.flatnonzero(singular)
        a, b = A[idx], B[idx]
        big = np.full(a.shape, np.inf)
        dist = np.minimum(np.where(a != 0.0, np.abs(a), big), np.where(b != 0.0, np.abs(b), big))
        dmin = dist.min(axis=1)
        d0 = np.prod(0.5 * (np.sign(b) - np.sign(a)), axis=1)
        stop = gamma * dmin * dmin / SATURATION
        hi = tau1[idx].copy()
        active = np.ones(idx.size, dtype=bool)
        resolved = np.zeros(idx.size, dtype=bool)
        for _ in range(MAX_LEVELS):
            sel = np.flatnonzero(active)
            if sel.size == 0:
                break
            lo = 0.5 * hi[sel]
            out[idx[sel]] += _gauss(lo, hi[sel], a[sel], b[sel], gamma, alpha, pref, nodes, weights)
            hi[sel] = lo
            done = np.isinf(dmin[sel]) | (lo <= stop[sel])
            resolved[sel[done]] = True
            active[sel[done]] = False
        head = pref * (4.0 * np.pi) ** (0.5 * (alpha - 2.0)) * hi ** (0.5 * alpha) / (0.5 * alpha)
        out[idx] += d0 * head
        err[idx] = np.where(resolved, 0.0, head)
    return out, err


def potential_at_points(values, lo, hi, s_lo, s_hi, targets, gamma, alpha, nodes, weights):
    n = lo.shape[1]
    P = targets.shape[0]
    out = np.zeros(P)
    err = np.zeros(P)
    for p in range(P):
        t = targets[p, n]
        tau1 = t - s_lo
        keep = tau1 > 0.0
        if not keep.any():
            continue
        tau0 = np.maximum(t - s_hi[keep], 0.0)
        A = targets[p, :n] - hi[keep]
        B = targets[p, :n] - lo[keep]
        v, e = cell_integrals(A, B, tau0, tau1[keep], gamma, alpha, nodes, weights)
        out[p] = values[keep] @ v
        err[p] = np.abs(values[keep]) @ e
    return out, err


def causal_convolve(values, src_flat, src_t, W, w_index, t_shift, nt_out):
    out = np.zeros((w_index.shape[0], nt_out))
    for v, base, l in zip(values, src_flat, src_t):
        j0 = max(0, l - t_shift)
        if j0 >= nt_out:
            continue
        rows = w_index - base
        out[:, j0:] += v * W[rows, j0 + t_shift - l:nt_out + t_shift - l]
    return out


def prefix_average_max(f, shape, target_idx, off_space, off_time, checkpoints, counts):
    S, nt = f.shape
    n = len(shape)
    shape = tuple(int(s) for s in shape)
    grid = f.reshape(shape + (nt,))
    # zero padding wide enough for every offset
    pad_s = [int(np.abs(off_space[:, d]).max()) if off_space.size else 0 for d in range(n)]
    pad_t = int(np.abs(off_time).max()) if off_time.size else 0
    padded = np.pad(grid, [(p, p) for p in pad_s] + [(pad_t, pad_t)])
    acc = np.zeros(shape + (nt,))
    best = np.full(shape + (nt,), -1.0)
    arg = np.full(shape + (nt,), -1, dtype=np.int64)
    q = 0
    for r, stop in enumerate(checkpoints):
        while q < stop:
            sl = tuple(slice(pad_s[d] - off_space[q, d], pad_s[d] - off_space[q, d] + shape[d])
                       for d in range(n))
            sl += (slice(pad_t - off_time[q], pad_t - off_time[q] + nt),)
            acc += padded[sl]
            q += 1
        if counts[r] > 0:
            val = acc / counts[r]
            better = val > best
            best = np.where(better, val, best)
            arg = np.where(better, r, arg)
    best = np.maximum(best, 0.0)
    return best.reshape(S, nt), arg.reshape(S, nt)
