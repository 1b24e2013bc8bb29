"""Backend selection for the hot loops.

The Cython extension ``gazecast._kernels`` is used when it was built; otherwise
the numpy versions in ``gazecast._pykernels`` take over. Setting
``GAZECAST_PURE_PYTHON=1`` forces the fallback.

Even with the extension present, two kernels hand large inputs to numpy:
the LSTM cell (vectorised exp/tanh beat scalar libm calls once a batch holds
more than a few hundred units) and mean pooling (the overlap-matrix product
runs on BLAS). The thresholds below come from ``benchmarks/bench_kernels.py``;
both backends agree to rounding, so the switch never changes results beyond
the last bits.
"""

import os

import numpy as np

from . import _pykernels as fallback

try:
    from . import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("GAZECAST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    _impl = compiled
    BACKEND = "cython"
else:
    _impl = fallback
    BACKEND = "python"

LSTM_FORWARD_MAX = 128  # n * hidden at or below which the compiled cell is used
LSTM_BACKWARD_MAX = 1024
POOL_MEAN_MAX = 32768  # map pixels


def backend_for(name, *args):
    """Module that handles kernel ``name`` for these (normalised) arguments."""
    if _impl is fallback:
        return fallback
    if name == "area_pool" and not args[3] and args[0].size > POOL_MEAN_MAX:
        return fallback
    if name == "lstm_cell_forward" and args[1].size > LSTM_FORWARD_MAX:
        return fallback
    if name == "lstm_cell_backward" and args[2].size > LSTM_BACKWARD_MAX:
        return fallback
    return _impl


def wrap_angles(x):
    """Elementwise wrap into [-180, 180] for an array of any shape."""
    x = np.asarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    flat = np.ascontiguousarray(x).reshape(-1)
    return np.asarray(_impl.wrap_angles(flat)).reshape(x.shape)


def area_pool(m, rows, cols, use_max=False):
    m = np.ascontiguousarray(m, dtype=np.float64)
    return np.asarray(backend_for("area_pool", m, rows, cols, use_max).area_pool(m, rows, cols, use_max))


def bilinear_resize(img, out_h, out_w):
    img = np.ascontiguousarray(img, dtype=np.float64)
    return np.asarray(_impl.bilinear_resize(img, out_h, out_w))


def lstm_cell_forward(z, c_prev):
    z = np.ascontiguousarray(z)
    c_prev = np.ascontiguousarray(c_prev, dtype=z.dtype)
    return backend_for("lstm_cell_forward", z, c_prev).lstm_cell_forward(z, c_prev)


def lstm_cell_backward(dhc, acts, c_prev, hc):
    dt = acts.dtype
    args = (np.ascontiguousarray(dhc, dtype=dt), acts, np.ascontiguousarray(c_prev, dtype=dt), hc)
    return backend_for("lstm_cell_backward", *args).lstm_cell_backward(*args)
