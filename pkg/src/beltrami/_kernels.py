"""Compiled Biot-Savart sums.

Each target's sum is accumulated by one thread in a fixed source order, so
results do not depend on the number of threads.
"""

import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np  # noqa: E402
from numba import njit, prange  # noqa: E402

INV_4PI = 1.0 / (4.0 * np.pi)


@njit(parallel=True, fastmath=True, cache=True)
def _bs_shifted(sx, sy, sz, wx, wy, wz, targets, shifts, coeffs):
    nt = targets.shape[0]
    ns = sx.shape[0]
    nsh = shifts.shape[0]
    out = np.zeros((nt, 3))
    for i in prange(nt):
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        for c in range(nsh):
            x0 = targets[i, 0] - shifts[c, 0]
            x1 = targets[i, 1] - shifts[c, 1]
            x2 = targets[i, 2] - shifts[c, 2]
            b0 = 0.0
            b1 = 0.0
            b2 = 0.0
            for s in range(ns):
                r0 = x0 - sx[s]
                r1 = x1 - sy[s]
                r2 = x2 - sz[s]
                rr = r0 * r0 + r1 * r1 + r2 * r2
                inv = 1.0 / (rr * np.sqrt(rr))
                b0 += (wy[s] * r2 - wz[s] * r1) * inv
                b1 += (wz[s] * r0 - wx[s] * r2) * inv
                b2 += (wx[s] * r1 - wy[s] * r0) * inv
            acc0 += coeffs[c] * b0
            acc1 += coeffs[c] * b1
            acc2 += coeffs[c] * b2
        out[i, 0] = acc0 * INV_4PI
        out[i, 1] = acc1 * INV_4PI
        out[i, 2] = acc2 * INV_4PI
    return out


def biot_savart_sum(src_pos, src_weight, targets, shifts=None, coeffs=None):
    """``sum_c coeffs[c] * BS(w)(x - shifts[c])`` for every target ``x``.

    ``src_pos`` and ``src_weight`` have shape (3, Ns): positions and
    quadrature-weighted source vectors.  ``targets`` has shape (Nt, 3).
    """
    src_pos = np.ascontiguousarray(src_pos, dtype=np.float64)
    src_weight = np.ascontiguousarray(src_weight, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    if shifts is None:
        shifts = np.zeros((1, 3))
    shifts = np.ascontiguousarray(shifts, dtype=np.float64)
    if coeffs is None:
        coeffs = np.ones(shifts.shape[0])
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    return _bs_shifted(src_pos[0], src_pos[1], src_pos[2],
                       src_weight[0], src_weight[1], src_weight[2],
                       targets, shifts, coeffs)


@njit(parallel=True, fastmath=True, cache=True)
def _near_sum(targets, tidx, pos, w, lam1, lam2, ny, nx, p, r):
    """Midpoint sum over the ``2p x 2p`` coarse cells around each target node.

    ``tidx[t] = (j0, i0)`` is the horizontal node index of target ``t``; source
    arrays have shape (3, nz_s, r ny, r nx), i.e. ``r x r`` sources per coarse
    cell and layer.
    """
    nt = targets.shape[0]
    nzs = pos.shape[1]
    out = np.zeros((nt, 3))
    for t in prange(nt):
        x0 = targets[t, 0]
        x1 = targets[t, 1]
        x2 = targets[t, 2]
        b0 = 0.0
        b1 = 0.0
        b2 = 0.0
        for dj in range(-p, p):
            jc = tidx[t, 0] + dj
            jw = jc % ny
            sj = (jc - jw) // ny
            for di in range(-p, p):
                ic = tidx[t, 1] + di
                iw = ic % nx
                si = (ic - iw) // nx
                s0 = si * lam1[0] + sj * lam2[0]
                s1 = si * lam1[1] + sj * lam2[1]
                for fj in range(r):
                    jf = jw * r + fj
                    for fi in range(r):
                        i_f = iw * r + fi
                        for k in range(nzs):
                            r0 = x0 - pos[0, k, jf, i_f] - s0
                            r1 = x1 - pos[1, k, jf, i_f] - s1
                            r2 = x2 - pos[2, k, jf, i_f]
                            rr = r0 * r0 + r1 * r1 + r2 * r2
                            inv = 1.0 / (rr * np.sqrt(rr))
                            wx = w[0, k, jf, i_f]
                            wy = w[1, k, jf, i_f]
                            wz = w[2, k, jf, i_f]
                            b0 += (wy * r2 - wz * r1) * inv
                            b1 += (wz * r0 - wx * r2) * inv
                            b2 += (wx * r1 - wy * r0) * inv
        out[t, 0] = b0 * INV_4PI
        out[t, 1] = b1 * INV_4PI
        out[t, 2] = b2 * INV_4PI
    return out


def near_sum(targets, tidx, pos, w, lam1, lam2, ny, nx, p, r):
    c = np.ascontiguousarray
    return _near_sum(c(targets, dtype=np.float64), c(tidx, dtype=np.int64), c(pos), c(w),
                     np.asarray(lam1, float), np.asarray(lam2, float), int(ny), int(nx), int(p), int(r))
