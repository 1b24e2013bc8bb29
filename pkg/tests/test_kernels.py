import os
import subprocess
import sys

import numpy as np
import pytest

from gazecast import _pykernels, kernels

compiled = kernels.compiled
needs_ext = pytest.mark.skipif(compiled is None, reason="Cython extension not built")


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_env_var_forces_fallback():
    env = dict(os.environ, GAZECAST_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import gazecast.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


@needs_ext
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_wrap_bit_identical(dtype):
    x = np.random.default_rng(0).uniform(-2000, 2000, 50_000).astype(dtype)
    x[:6] = [180, -180, 540, -540, 359.75, -539.75]
    assert np.array_equal(compiled.wrap_angles(x), _pykernels.wrap_angles(x))


@needs_ext
@pytest.mark.parametrize("shape,grid", [((36, 48), (9, 12)), ((37, 53), (9, 12)), ((5, 7), (3, 2)), ((8, 8), (8, 8))])
@pytest.mark.parametrize("use_max", [False, True])
def test_area_pool_agrees(shape, grid, use_max):
    m = np.random.default_rng(1).random(shape)
    a = compiled.area_pool(m, *grid, use_max)
    b = _pykernels.area_pool(m, *grid, use_max)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@needs_ext
@pytest.mark.parametrize("src,dst", [((57, 71), (20, 33)), ((10, 10), (10, 10)), ((4, 6), (9, 13)), ((1, 1), (3, 2))])
def test_bilinear_agrees(src, dst):
    img = np.random.default_rng(2).random(src + (3,))
    np.testing.assert_allclose(compiled.bilinear_resize(img, *dst), _pykernels.bilinear_resize(img, *dst),
                               rtol=0, atol=1e-14)


@needs_ext
@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-14), (np.float32, 1e-6)])
def test_lstm_cell_agrees(dtype, tol):
    r = np.random.default_rng(3)
    z = r.normal(size=(7, 20)).astype(dtype)
    c = r.normal(size=(7, 5)).astype(dtype)
    hc1, a1 = compiled.lstm_cell_forward(z, c)
    hc2, a2 = _pykernels.lstm_cell_forward(z, c)
    np.testing.assert_allclose(hc1, hc2, atol=tol)
    np.testing.assert_allclose(a1, a2, atol=tol)
    g = r.normal(size=(7, 10)).astype(dtype)
    for u, v in zip(compiled.lstm_cell_backward(g, a1, c, hc1), _pykernels.lstm_cell_backward(g, a2, c, hc2)):
        assert u.dtype == dtype
        np.testing.assert_allclose(u, v, atol=10 * tol)


def test_lstm_cell_backward_matches_finite_differences():
    r = np.random.default_rng(4)
    z = r.normal(size=(3, 8))
    c = r.normal(size=(3, 2))
    w = r.normal(size=(3, 4))
    hc, acts = kernels.lstm_cell_forward(z, c)
    dz, dc = kernels.lstm_cell_backward(w, acts, c, hc)

    def f(z_, c_):
        return float(np.sum(kernels.lstm_cell_forward(z_, c_)[0] * w))

    eps = 1e-6
    for arr, grad in ((z, dz), (c, dc)):
        num = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            up = f(z, c)
            arr[idx] = old - eps
            down = f(z, c)
            arr[idx] = old
            num[idx] = (up - down) / (2 * eps)
        np.testing.assert_allclose(grad, num, rtol=1e-6, atol=1e-9)


@needs_ext
def test_dispatch_thresholds():
    if kernels.BACKEND != "cython":
        pytest.skip("fallback forced")
    small = np.zeros((1, kernels.LSTM_FORWARD_MAX))
    big = np.zeros((2, kernels.LSTM_FORWARD_MAX))
    assert kernels.backend_for("lstm_cell_forward", None, small) is compiled
    assert kernels.backend_for("lstm_cell_forward", None, big) is _pykernels
    assert kernels.backend_for("area_pool", np.zeros((300, 300)), 9, 12, True) is compiled
    assert kernels.backend_for("area_pool", np.zeros((300, 300)), 9, 12, False) is _pykernels
    assert kernels.backend_for("bilinear_resize", np.zeros((2, 2, 1)), 1, 1) is compiled


PIPELINE = """
import numpy as np
from gazecast.models import init_params, default_dims, predict
from gazecast.saliency import SpectralResidualProvider, Frame, pool_flatten
r = np.random.default_rng(0)
out = []
for arch in ("lstm", "tsmixer"):
    mp = init_params(arch, default_dims(arch, 12, p=6, q=3, hidden_dim=40), seed=1)
    out.append(predict(mp, r.normal(size=(9, 6, 12))).ravel())
m = SpectralResidualProvider().saliency(Frame(r.random((100, 120, 3))))
out.append(pool_flatten(m))
np.save({path!r}, np.concatenate(out))
"""


def test_backends_agree_end_to_end(tmp_path):
    results = []
    for flag in ("0", "1"):
        path = str(tmp_path / f"out{flag}.npy")
        env = dict(os.environ, GAZECAST_PURE_PYTHON=flag)
        subprocess.run([sys.executable, "-c", PIPELINE.format(path=path)], env=env, check=True)
        results.append(np.load(path))
    np.testing.assert_allclose(results[0], results[1], rtol=1e-5, atol=1e-6)
