"""JIT-compiled convolution, pooling, and ReLU kernels.

This machine profile (wide SIMD, low memory bandwidth) punishes the classic
im2col + GEMM formulation: the unrolled-window copies cost several times the
arithmetic. These kernels are fused direct implementations that touch each
array once, written so every hot inner loop is a whole-array walk over
pre-sliced contiguous 1D views (the pattern LLVM reliably vectorizes here);
offset indexing inside a loop body compiles to scalar code and must be
avoided.

Strided 1D convolutions are evaluated in polyphase layout: x is repacked as
(batch, channels, stride, ceil(L/stride)), which turns every kernel tap into
a contiguous AXPY along the output axis. stride == 1 is the degenerate case
(the repack is a free reshape).

Parallel loops write disjoint output blocks and keep every reduction inside
one thread, so results are bitwise reproducible run to run.

fastmath here enables FMA contraction and reassociation but keeps NaN/Inf
semantics, so non-finite values still propagate to the training-loop checks.
"""

from __future__ import annotations

import numpy as np
import numba
from numba import njit, prange

# skip the TBB probe (the sandbox ships an old TBB that numba then rejects)
numba.config.THREADING_LAYER = "omp"

_FAST = {"contract", "reassoc", "nsz", "arcp", "afn"}


@njit(inline="always", cache=True)
def _ceildiv(a, b):
    return -((-a) // b)


def ceildiv(a: int, b: int) -> int:
    return -((-a) // b)


# ---------------------------------------------------------------------------
# vector helpers: callees keep the loops trivially vectorizable


@njit(fastmath=_FAST, cache=True)
def _axpy(acc, xr, wv):
    for t in range(acc.size):
        acc[t] += wv * xr[t]


@njit(fastmath=_FAST, cache=True)
def _axpy3(acc, x0, x1, x2, w0, w1, w2):
    for t in range(acc.size):
        acc[t] += w0 * x0[t] + w1 * x1[t] + w2 * x2[t]


@njit(fastmath=_FAST, cache=True)
def _dot(a, b):
    s = a.dtype.type(0.0)
    for t in range(a.size):
        s += a[t] * b[t]
    return s


@njit(fastmath=_FAST, cache=True)
def _axpy9(acc, x00, x01, x02, x10, x11, x12, x20, x21, x22, w):
    # full 3x3 patch accumulated in one pass over the output row
    for t in range(acc.size):
        acc[t] += (w[0, 0] * x00[t] + w[0, 1] * x01[t] + w[0, 2] * x02[t]
                   + w[1, 0] * x10[t] + w[1, 1] * x11[t] + w[1, 2] * x12[t]
                   + w[2, 0] * x20[t] + w[2, 1] * x21[t] + w[2, 2] * x22[t])


@njit(fastmath=_FAST, cache=True)
def _dot9(g, x00, x01, x02, x10, x11, x12, x20, x21, x22, out):
    # nine shifted dot products against one gradient row, single pass
    s00 = g.dtype.type(0.0); s01 = g.dtype.type(0.0); s02 = g.dtype.type(0.0)
    s10 = g.dtype.type(0.0); s11 = g.dtype.type(0.0); s12 = g.dtype.type(0.0)
    s20 = g.dtype.type(0.0); s21 = g.dtype.type(0.0); s22 = g.dtype.type(0.0)
    for t in range(g.size):
        gv = g[t]
        s00 += gv * x00[t]; s01 += gv * x01[t]; s02 += gv * x02[t]
        s10 += gv * x10[t]; s11 += gv * x11[t]; s12 += gv * x12[t]
        s20 += gv * x20[t]; s21 += gv * x21[t]; s22 += gv * x22[t]
    out[0, 0] += s00; out[0, 1] += s01; out[0, 2] += s02
    out[1, 0] += s10; out[1, 1] += s11; out[1, 2] += s12
    out[2, 0] += s20; out[2, 1] += s21; out[2, 2] += s22


# ---------------------------------------------------------------------------
# 1D convolution in polyphase layout


def pack_polyphase(x: np.ndarray, stride: int) -> np.ndarray:
    """(n, c, L) -> (n, c, stride, ceil(L/stride)); free view when stride==1."""
    n, c, length = x.shape
    if stride == 1:
        return x.reshape(n, c, 1, length)
    q = ceildiv(length, stride)
    pad = q * stride - length
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (0, pad)))
    return np.ascontiguousarray(x.reshape(n, c, q, stride).transpose(0, 1, 3, 2))


def unpack_polyphase(xph: np.ndarray, stride: int, length: int) -> np.ndarray:
    n, c = xph.shape[:2]
    if stride == 1:
        return xph.reshape(n, c, -1)[:, :, :length]
    flat = np.ascontiguousarray(xph.transpose(0, 1, 3, 2)).reshape(n, c, -1)
    return np.ascontiguousarray(flat[:, :, :length])


@njit(parallel=True, fastmath=_FAST, cache=True)
def conv1d_fwd(xph, w, b, stride, left, length, y):
    n, cin = xph.shape[0], xph.shape[1]
    cout, _, k = w.shape
    out = y.shape[2]
    for p in prange(n * cout):
        ni = p // cout
        co = p % cout
        acc = np.empty(out, dtype=y.dtype)
        acc[:] = b[co]
        for ci in range(cin):
            x2 = xph[ni, ci]
            for tau in range(k):
                wv = w[co, ci, tau]
                jb = tau - left
                phase = jb % stride
                qoff = (jb - phase) // stride
                t0 = max(0, _ceildiv(-jb, stride))
                t1 = min(out, _ceildiv(length - jb, stride))
                if t1 > t0:
                    _axpy(acc[t0:t1], x2[phase, t0 + qoff : t1 + qoff], wv)
        y[ni, co, :] = acc


@njit(parallel=True, fastmath=_FAST, cache=True)
def conv1d_dx(gout, w, stride, left, length, dxph):
    n, cin = dxph.shape[0], dxph.shape[1]
    cout, _, k = w.shape
    out = gout.shape[2]
    for p in prange(n * cin):
        ni = p // cin
        ci = p % cin
        dx2 = dxph[ni, ci]
        for co in range(cout):
            grow = gout[ni, co]
            for tau in range(k):
                wv = w[co, ci, tau]
                jb = tau - left
                phase = jb % stride
                qoff = (jb - phase) // stride
                t0 = max(0, _ceildiv(-jb, stride))
                t1 = min(out, _ceildiv(length - jb, stride))
                if t1 > t0:
                    _axpy(dx2[phase, t0 + qoff : t1 + qoff], grow[t0:t1], wv)


@njit(parallel=True, fastmath=_FAST, cache=True)
def conv1d_dw(xph, gout, stride, left, length, dw):
    n, cin = xph.shape[0], xph.shape[1]
    cout = gout.shape[1]
    out = gout.shape[2]
    k = dw.shape[2]
    for co in prange(cout):
        for ci in range(cin):
            for tau in range(k):
                jb = tau - left
                phase = jb % stride
                qoff = (jb - phase) // stride
                t0 = max(0, _ceildiv(-jb, stride))
                t1 = min(out, _ceildiv(length - jb, stride))
                acc = dw.dtype.type(0.0)
                if t1 > t0:
                    for ni in range(n):
                        acc += _dot(gout[ni, co, t0:t1],
                                    xph[ni, ci, phase, t0 + qoff : t1 + qoff])
                dw[co, ci, tau] = acc


# ---------------------------------------------------------------------------
# 2D convolution, stride 1 (the only stride the architectures use in 2D)


@njit(parallel=True, fastmath=_FAST, cache=True)
def conv2d_fwd_s1(x, w, b, top, left, y):
    n, cin, height, width = x.shape
    cout, _, kh, kw = w.shape
    oh, ow = y.shape[2], y.shape[3]
    t_lo = max(0, left)                    # first column with full support
    t_hi = min(ow, width - (kw - 1) + left)  # first column past full support
    for p in prange(n * cout):
        ni = p // cout
        co = p % cout
        acc = np.empty(ow, dtype=y.dtype)
        for oi in range(oh):
            acc[:] = b[co]
            ih_base = oi - top
            fused = (kh == 3 and kw == 3 and t_hi > t_lo
                     and ih_base >= 0 and ih_base + 2 < height)
            if fused:
                m = t_hi - t_lo
                base = t_lo - left
                for ci in range(cin):
                    x2 = x[ni, ci]
                    r0 = x2[ih_base]
                    r1 = x2[ih_base + 1]
                    r2 = x2[ih_base + 2]
                    _axpy9(acc[t_lo:t_hi],
                           r0[base : base + m], r0[base + 1 : base + 1 + m],
                           r0[base + 2 : base + 2 + m],
                           r1[base : base + m], r1[base + 1 : base + 1 + m],
                           r1[base + 2 : base + 2 + m],
                           r2[base : base + m], r2[base + 1 : base + 1 + m],
                           r2[base + 2 : base + 2 + m],
                           w[co, ci])
                    for i in range(3):
                        xrow = x2[ih_base + i]
                        for j in range(3):
                            wv = w[co, ci, i, j]
                            jb = j - left
                            for t in range(0, t_lo):
                                if 0 <= t + jb < width:
                                    acc[t] += wv * xrow[t + jb]
                            for t in range(t_hi, ow):
                                if 0 <= t + jb < width:
                                    acc[t] += wv * xrow[t + jb]
            else:
                for ci in range(cin):
                    for i in range(kh):
                        ih = ih_base + i
                        if 0 <= ih < height:
                            xrow = x[ni, ci, ih]
                            for j in range(kw):
                                wv = w[co, ci, i, j]
                                jb = j - left
                                t0 = max(0, -jb)
                                t1 = min(ow, width - jb)
                                if t1 > t0:
                                    _axpy(acc[t0:t1], xrow[t0 + jb : t1 + jb], wv)
            y[ni, co, oi, :] = acc


@njit(parallel=True, fastmath=_FAST, cache=True)
def conv2d_dx_s1(gout, w, top, left, dx):
    n, cin, height, width = dx.shape
    cout, _, kh, kw = w.shape
    oh, ow = gout.shape[2], gout.shape[3]
    # columns where every mirrored tap hits a valid gradient column
    t_lo = max(0, (kw - 1) - left)
    t_hi = min(width, ow - left)
    for p in prange(n * cin):
        ni = p // cin
        ci = p % cin
        acc = np.empty(width, dtype=dx.dtype)
        for ih in range(height):
            acc[:] = 0.0
            oi_base = ih + top  # gradient row for tap i is oi_base - i
            fused = (kh == 3 and kw == 3 and t_hi > t_lo
                     and oi_base - 2 >= 0 and oi_base < oh)
            if fused:
                m = t_hi - t_lo
                for co in range(cout):
                    g2 = gout[ni, co]
                    g0 = g2[oi_base]      # i = 0
                    g1 = g2[oi_base - 1]  # i = 1
                    g2r = g2[oi_base - 2]  # i = 2
                    b0 = t_lo + left      # shift for j = 0
                    _axpy9(acc[t_lo:t_hi],
                           g0[b0 : b0 + m], g0[b0 - 1 : b0 - 1 + m],
                           g0[b0 - 2 : b0 - 2 + m],
                           g1[b0 : b0 + m], g1[b0 - 1 : b0 - 1 + m],
                           g1[b0 - 2 : b0 - 2 + m],
                           g2r[b0 : b0 + m], g2r[b0 - 1 : b0 - 1 + m],
                           g2r[b0 - 2 : b0 - 2 + m],
                           w[co, ci])
                    for i in range(3):
                        grow = g2[oi_base - i]
                        for j in range(3):
                            wv = w[co, ci, i, j]
                            jb = left - j
                            for t in range(0, t_lo):
                                if 0 <= t + jb < ow:
                                    acc[t] += wv * grow[t + jb]
                            for t in range(t_hi, width):
                                if 0 <= t + jb < ow:
                                    acc[t] += wv * grow[t + jb]
            else:
                for co in range(cout):
                    for i in range(kh):
                        oi = oi_base - i
                        if 0 <= oi < oh:
                            grow = gout[ni, co, oi]
                            for j in range(kw):
                                wv = w[co, ci, i, j]
                                jb = left - j
                                t0 = max(0, -jb)
                                t1 = min(width, ow - jb)
                                if t1 > t0:
                                    _axpy(acc[t0:t1], grow[t0 + jb : t1 + jb], wv)
            dx[ni, ci, ih, :] = acc


@njit(parallel=True, fastmath=_FAST, cache=True)
def conv2d_dw_s1(x, gout, top, left, dw):
    n, cin, height, width = x.shape
    cout = gout.shape[1]
    oh, ow = gout.shape[2], gout.shape[3]
    kh, kw = dw.shape[2], dw.shape[3]
    t_lo = max(0, left)
    t_hi = min(ow, width - (kw - 1) + left)
    for co in prange(cout):
        for ni in range(n):
            for oi in range(oh):
                grow = gout[ni, co, oi]
                ih_base = oi - top
                fused = (kh == 3 and kw == 3 and t_hi > t_lo
                         and ih_base >= 0 and ih_base + 2 < height)
                if fused:
                    m = t_hi - t_lo
                    base = t_lo - left
                    gmid = grow[t_lo:t_hi]
                    for ci in range(cin):
                        x2 = x[ni, ci]
                        r0 = x2[ih_base]
                        r1 = x2[ih_base + 1]
                        r2 = x2[ih_base + 2]
                        _dot9(gmid,
                              r0[base : base + m], r0[base + 1 : base + 1 + m],
                              r0[base + 2 : base + 2 + m],
                              r1[base : base + m], r1[base + 1 : base + 1 + m],
                              r1[base + 2 : base + 2 + m],
                              r2[base : base + m], r2[base + 1 : base + 1 + m],
                              r2[base + 2 : base + 2 + m],
                              dw[co, ci])
                        for i in range(3):
                            xrow = x2[ih_base + i]
                            for j in range(3):
                                jb = j - left
                                s = dw.dtype.type(0.0)
                                for t in range(0, t_lo):
                                    if 0 <= t + jb < width:
                                        s += grow[t] * xrow[t + jb]
                                for t in range(t_hi, ow):
                                    if 0 <= t + jb < width:
                                        s += grow[t] * xrow[t + jb]
                                dw[co, ci, i, j] += s
                else:
                    for ci in range(cin):
                        for i in range(kh):
                            ih = ih_base + i
                            if 0 <= ih < height:
                                xrow = x[ni, ci, ih]
                                for j in range(kw):
                                    jb = j - left
                                    t0 = max(0, -jb)
                                    t1 = min(ow, width - jb)
                                    if t1 > t0:
                                        dw[co, ci, i, j] += _dot(
                                            grow[t0:t1], xrow[t0 + jb : t1 + jb]
                                        )


# ---------------------------------------------------------------------------
# max pooling (unpadded); ties take the first (lowest-index) maximum


@njit(parallel=True, fastmath=_FAST, cache=True)
def maxpool1d_fwd(x, kernel, stride, y, arg):
    n, c, _ = x.shape
    out = y.shape[2]
    for p in prange(n * c):
        ni = p // c
        ci = p % c
        xrow = x[ni, ci]
        for t in range(out):
            base = t * stride
            best = xrow[base]
            bi = 0
            for u in range(1, kernel):
                v = xrow[base + u]
                if v > best:
                    best = v
                    bi = u
            y[ni, ci, t] = best
            arg[ni, ci, t] = bi


@njit(parallel=True, fastmath=_FAST, cache=True)
def maxpool1d_bwd(arg, gout, stride, dx):
    n, c, out = gout.shape
    for p in prange(n * c):
        ni = p // c
        ci = p % c
        dxrow = dx[ni, ci]
        grow = gout[ni, ci]
        argrow = arg[ni, ci]
        for t in range(out):
            dxrow[t * stride + argrow[t]] += grow[t]


@njit(parallel=True, fastmath=_FAST, cache=True)
def maxpool2d_fwd(x, kh, kw, stride, y, arg):
    n, c, _, width = x.shape
    oh, ow = y.shape[2], y.shape[3]
    for p in prange(n * c):
        ni = p // c
        ci = p % c
        x2 = x[ni, ci]
        for oi in range(oh):
            ib = oi * stride
            for oj in range(ow):
                jb = oj * stride
                best = x2[ib, jb]
                bi = 0
                for u in range(kh):
                    xrow = x2[ib + u]
                    for v in range(kw):
                        val = xrow[jb + v]
                        if val > best:
                            best = val
                            bi = u * kw + v
                y[ni, ci, oi, oj] = best
                arg[ni, ci, oi, oj] = bi


@njit(parallel=True, fastmath=_FAST, cache=True)
def maxpool2d_bwd(arg, gout, kw, stride, dx):
    n, c, oh, ow = gout.shape
    for p in prange(n * c):
        ni = p // c
        ci = p % c
        for oi in range(oh):
            for oj in range(ow):
                a = arg[ni, ci, oi, oj]
                dx[ni, ci, oi * stride + a // kw, oj * stride + a % kw] += \
                    gout[ni, ci, oi, oj]


# ---------------------------------------------------------------------------
# ReLU on flattened views


@njit(parallel=True, fastmath=_FAST, cache=True)
def relu_fwd_flat(xf, yf):
    for t in prange(xf.size):
        v = xf[t]
        yf[t] = v if v > 0.0 else 0.0


@njit(parallel=True, fastmath=_FAST, cache=True)
def relu_bwd_flat(out_f, gf, df):
    for t in prange(out_f.size):
        df[t] = gf[t] if out_f[t] > 0.0 else 0.0
