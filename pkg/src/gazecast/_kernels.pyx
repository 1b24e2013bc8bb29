# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Mirrors ``gazecast._pykernels`` function for function."""

import numpy as np

from libc.math cimport exp, expf, tanh, tanhf, fmod, floor, ceil

ctypedef fused real:
    float
    double


cdef inline double _wrap(double d) noexcept nogil:
    if d >= 540.0 or d <= -540.0:
        d = fmod(d, 360.0)
    if d > 180.0:
        return d - 360.0
    if d < -180.0:
        return d + 360.0
    return d


cdef inline double _sigmoid(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


# Single-precision variants keep float32 training off the double libm path.
cdef inline float _sigmoidf(float x) noexcept nogil:
    return 1.0 / (1.0 + expf(-x))


cdef inline real _sig(real x) noexcept nogil:
    if real is float:
        return _sigmoidf(x)
    else:
        return <real>_sigmoid(x)


cdef inline real _tanh(real x) noexcept nogil:
    if real is float:
        return tanhf(x)
    else:
        return <real>tanh(x)


def wrap_angles(real[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.asarray(x).dtype)
    cdef real[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = <real>_wrap(x[i])
    return out


def area_pool(double[:, ::1] m, int rows, int cols, bint use_max=False):
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    cdef Py_ssize_t i, j, r, c, r0, r1, c0, c1
    cdef double y0, y1, x0, x1, wy, wx, acc, best, v
    out = np.zeros((rows, cols), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(rows):
            y0 = <double>(i * h) / rows
            y1 = <double>((i + 1) * h) / rows
            r0 = <Py_ssize_t>floor(y0)
            r1 = <Py_ssize_t>ceil(y1)
            for j in range(cols):
                x0 = <double>(j * w) / cols
                x1 = <double>((j + 1) * w) / cols
                c0 = <Py_ssize_t>floor(x0)
                c1 = <Py_ssize_t>ceil(x1)
                acc = 0.0
                best = -1.0
                for r in range(r0, r1):
                    wy = (r + 1.0 if r + 1.0 < y1 else y1) - (r if r > y0 else y0)
                    if wy <= 0.0:
                        continue
                    for c in range(c0, c1):
                        wx = (c + 1.0 if c + 1.0 < x1 else x1) - (c if c > x0 else x0)
                        if wx <= 0.0:
                            continue
                        v = m[r, c]
                        acc = acc + wy * wx * v
                        if v > best:
                            best = v
                if use_max:
                    o[i, j] = best
                else:
                    o[i, j] = acc / ((y1 - y0) * (x1 - x0))
    return out


def bilinear_resize(double[:, :, ::1] img, int out_h, int out_w):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], ch = img.shape[2]
    cdef Py_ssize_t y, x, k, ya, yb, xa, xb
    cdef double sy, sx, fy, fx, sh = <double>h / out_h, sw = <double>w / out_w
    out = np.empty((out_h, out_w, ch), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for y in range(out_h):
            sy = (y + 0.5) * sh - 0.5
            if sy < 0.0:
                sy = 0.0
            if sy > h - 1:
                sy = h - 1
            ya = <Py_ssize_t>floor(sy)
            yb = ya + 1 if ya + 1 < h else h - 1
            fy = sy - ya
            for x in range(out_w):
                sx = (x + 0.5) * sw - 0.5
                if sx < 0.0:
                    sx = 0.0
                if sx > w - 1:
                    sx = w - 1
                xa = <Py_ssize_t>floor(sx)
                xb = xa + 1 if xa + 1 < w else w - 1
                fx = sx - xa
                for k in range(ch):
                    o[y, x, k] = ((1.0 - fy) * ((1.0 - fx) * img[ya, xa, k] + fx * img[ya, xb, k])
                                  + fy * ((1.0 - fx) * img[yb, xa, k] + fx * img[yb, xb, k]))
    return out


def lstm_cell_forward(real[:, ::1] z, real[:, ::1] c_prev):
    """Gate activations for pre-activations laid out as [i | f | o | g].

    Returns ``(hc, acts)`` with ``hc = [h | c]`` and ``acts`` the activated gates.
    """
    cdef Py_ssize_t n = z.shape[0], hd = c_prev.shape[1]
    cdef Py_ssize_t r, j
    cdef real gi, gf, go, gg, c
    dtype = np.asarray(z).dtype
    hc_arr = np.empty((n, 2 * hd), dtype=dtype)
    acts_arr = np.empty((n, 4 * hd), dtype=dtype)
    cdef real[:, ::1] hc = hc_arr
    cdef real[:, ::1] acts = acts_arr
    with nogil:
        for r in range(n):
            for j in range(hd):
                gi = _sig(z[r, j])
                gf = _sig(z[r, hd + j])
                go = _sig(z[r, 2 * hd + j])
                gg = _tanh(z[r, 3 * hd + j])
                c = gf * c_prev[r, j] + gi * gg
                acts[r, j] = gi
                acts[r, hd + j] = gf
                acts[r, 2 * hd + j] = go
                acts[r, 3 * hd + j] = gg
                hc[r, j] = go * _tanh(c)
                hc[r, hd + j] = c
    return hc_arr, acts_arr


def lstm_cell_backward(real[:, ::1] dhc, real[:, ::1] acts, real[:, ::1] c_prev, real[:, ::1] hc):
    """Returns ``(dz, dc_prev)`` for upstream gradient ``dhc`` on ``[h | c]``."""
    cdef Py_ssize_t n = c_prev.shape[0], hd = c_prev.shape[1]
    cdef Py_ssize_t r, j
    cdef real gi, gf, go, gg, tc, dh, dc
    dtype = np.asarray(dhc).dtype
    dz_arr = np.empty((n, 4 * hd), dtype=dtype)
    dcp_arr = np.empty((n, hd), dtype=dtype)
    cdef real[:, ::1] dz = dz_arr
    cdef real[:, ::1] dcp = dcp_arr
    with nogil:
        for r in range(n):
            for j in range(hd):
                gi = acts[r, j]
                gf = acts[r, hd + j]
                go = acts[r, 2 * hd + j]
                gg = acts[r, 3 * hd + j]
                tc = _tanh(hc[r, hd + j])
                dh = dhc[r, j]
                dc = dhc[r, hd + j] + dh * go * (1.0 - tc * tc)
                dz[r, j] = dc * gg * gi * (1 - gi)
                dz[r, hd + j] = dc * c_prev[r, j] * gf * (1 - gf)
                dz[r, 2 * hd + j] = dh * tc * go * (1 - go)
                dz[r, 3 * hd + j] = dc * gi * (1 - gg * gg)
                dcp[r, j] = dc * gf
    return dz_arr, dcp_arr
