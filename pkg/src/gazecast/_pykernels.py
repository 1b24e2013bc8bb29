"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def wrap_angles(x):
    x = np.asarray(x)
    d = np.where(np.abs(x) >= 540.0, np.fmod(x, 360.0), x)
    return np.where(d > 180.0, d - 360.0, np.where(d < -180.0, d + 360.0, d)).astype(x.dtype, copy=False)


def _overlap(n_out, n_in):
    """Row ``i`` holds how much of each input pixel falls inside output cell ``i``."""
    edges = np.arange(n_out + 1, dtype=np.float64) * n_in / n_out
    lo = np.maximum(edges[:-1, None], np.arange(n_in)[None, :])
    hi = np.minimum(edges[1:, None], np.arange(n_in)[None, :] + 1.0)
    return np.clip(hi - lo, 0.0, None), np.diff(edges)


def area_pool(m, rows, cols, use_max=False):
    m = np.asarray(m, dtype=np.float64)
    wy, hy = _overlap(rows, m.shape[0])
    wx, hx = _overlap(cols, m.shape[1])
    if not use_max:
        return (wy @ m @ wx.T) / np.outer(hy, hx)
    out = np.empty((rows, cols))
    for i in range(rows):
        ri = np.nonzero(wy[i] > 0)[0]
        for j in range(cols):
            cj = np.nonzero(wx[j] > 0)[0]
            out[i, j] = m[ri[0]:ri[-1] + 1, cj[0]:cj[-1] + 1].max()
    return out


def _axis_coords(n_out, n_in):
    s = np.clip((np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5, 0.0, n_in - 1)
    a = np.floor(s).astype(np.intp)
    b = np.minimum(a + 1, n_in - 1)
    return a, b, s - a


def bilinear_resize(img, out_h, out_w):
    img = np.asarray(img, dtype=np.float64)
    ya, yb, fy = _axis_coords(out_h, img.shape[0])
    xa, xb, fx = _axis_coords(out_w, img.shape[1])
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = (1.0 - fx) * img[ya][:, xa] + fx * img[ya][:, xb]
    bot = (1.0 - fx) * img[yb][:, xa] + fx * img[yb][:, xb]
    return (1.0 - fy) * top + fy * bot


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_cell_forward(z, c_prev):
    hd = c_prev.shape[1]
    acts = np.empty_like(z)
    acts[:, :3 * hd] = _sigmoid(z[:, :3 * hd])
    acts[:, 3 * hd:] = np.tanh(z[:, 3 * hd:])
    gi, gf, go, gg = (acts[:, k * hd:(k + 1) * hd] for k in range(4))
    c = gf * c_prev + gi * gg
    hc = np.concatenate([go * np.tanh(c), c], axis=1)
    return hc, acts


def lstm_cell_backward(dhc, acts, c_prev, hc):
    hd = c_prev.shape[1]
    gi, gf, go, gg = (acts[:, k * hd:(k + 1) * hd] for k in range(4))
    tc = np.tanh(hc[:, hd:])
    dh = dhc[:, :hd]
    dc = dhc[:, hd:] + dh * go * (1.0 - tc * tc)
    dz = np.concatenate([
        dc * gg * gi * (1.0 - gi),
        dc * c_prev * gf * (1.0 - gf),
        dh * tc * go * (1.0 - go),
        dc * gi * (1.0 - gg * gg),
    ], axis=1)
    return dz, dc * gf
