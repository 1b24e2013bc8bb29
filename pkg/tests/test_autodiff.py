import numpy as np
import pytest

from gazecast import autodiff as ad
from gazecast.errors import DomainError


def V(a):
    return ad.Value(np.asarray(a, dtype=np.float64))


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x.data)
    for idx in np.ndindex(x.data.shape):
        old = x.data[idx]
        x.data[idx] = old + eps
        up = float(f().data[0, 0])
        x.data[idx] = old - eps
        down = float(f().data[0, 0])
        x.data[idx] = old
        g[idx] = (up - down) / (2 * eps)
    return g


def check(f, *xs, tol=1e-6):
    ad.zero_grad(xs)
    f().backward()
    for x in xs:
        np.testing.assert_allclose(x.grad, numeric_grad(f, x), rtol=tol, atol=tol)


r = np.random.default_rng(0)
A = r.normal(size=(3, 4))
B = r.normal(size=(4, 2))
ROW = r.normal(size=(1, 4))
W = r.normal(size=(3, 4))


@pytest.mark.parametrize("name,build", [
    ("matmul", lambda a, b: ad.sum_all(ad.matmul(a, b) * ad.Value(np.arange(6.0).reshape(3, 2)))),
    ("tanh", lambda a, b: ad.sum_all(ad.tanh(a) * ad.Value(W))),
    ("sigmoid", lambda a, b: ad.sum_all(ad.sigmoid(a) * ad.Value(W))),
    ("relu", lambda a, b: ad.sum_all(ad.relu(a) * ad.Value(W))),
    ("square", lambda a, b: ad.mean(ad.square(a))),
    ("abs", lambda a, b: ad.sum_all(ad.absolute(a) * ad.Value(W))),
    ("transpose", lambda a, b: ad.sum_all(ad.matmul(a.T, ad.Value(W)))),
    ("scale", lambda a, b: ad.sum_all(ad.scale(a, -2.5) * ad.Value(W))),
    ("sub", lambda a, b: ad.sum_all(ad.square(ad.sub(a, ad.Value(W))))),
    ("concat_slice", lambda a, b: ad.sum_all(ad.square(ad.slice_cols(ad.concat_cols([a, ad.tanh(a)]), 2, 7)))),
    ("reshape", lambda a, b: ad.sum_all(ad.reshape(a, 2, 6) * ad.Value(np.arange(12.0).reshape(2, 6)))),
    ("block_transpose", lambda a, b: ad.sum_all(ad.block_transpose(ad.reshape(a, 6, 2), 3) * ad.Value(np.arange(12.0).reshape(6, 2)))),
    ("layer_norm", lambda a, b: ad.sum_all(ad.layer_norm(a) * ad.Value(W))),
])
def test_op_gradients(name, build):
    a, b = V(A.copy()), V(B.copy())
    check(lambda: build(a, b), a)


def test_row_broadcast_add_and_mul():
    a, row = V(A.copy()), V(ROW.copy())
    check(lambda: ad.sum_all(ad.square(a + row)), a, row)
    check(lambda: ad.sum_all((a * row) * ad.Value(W)), a, row)


def test_wrap_cols_passes_gradient_through():
    a = V([[190.0, 5.0, -200.0, 1.0]])
    out = ad.wrap_cols(a, [0, 2])
    assert out.data.tolist() == [[-170.0, 5.0, 160.0, 1.0]]
    ad.sum_all(out).backward()
    assert a.grad.tolist() == [[1.0, 1.0, 1.0, 1.0]]


def test_lstm_cell_gradients():
    z, c = V(r.normal(size=(2, 12))), V(r.normal(size=(2, 3)))
    w = ad.Value(r.normal(size=(2, 6)))
    check(lambda: ad.sum_all(ad.lstm_cell(z, c) * w), z, c)


def test_mean_square_gradient_example():
    x = V([[1.0, 2.0, 3.0]])
    ad.mean(ad.square(x)).backward()
    np.testing.assert_allclose(x.grad, [[2 / 3, 4 / 3, 2.0]], rtol=0, atol=1e-15)


def test_linearity_of_gradients():
    x = V(A.copy())
    ad.sum_all(ad.scale(ad.tanh(x), 2.0) + ad.scale(ad.square(x), 3.0)).backward()
    expected = 2.0 * (1 - np.tanh(A) ** 2) + 3.0 * 2 * A
    np.testing.assert_allclose(x.grad, expected, atol=1e-14)


def test_backward_deterministic():
    grads = []
    for _ in range(2):
        x = V(A.copy())
        ad.sum_all(ad.layer_norm(ad.tanh(ad.matmul(x, ad.Value(B))))).backward()
        grads.append(x.grad.tobytes())
    assert grads[0] == grads[1]


def test_backward_requires_scalar():
    with pytest.raises(DomainError):
        V(A).backward()


def test_disconnected_parameter_has_zero_grad():
    x, unused = V(A.copy()), V(B.copy())
    loss = lambda: ad.sum_all(ad.square(x))
    ad.zero_grad([x, unused])
    loss().backward()
    assert unused.grad is None or not np.any(unused.grad)
    assert ad.grad_check(loss, [x, unused]) < 1e-8


def test_reused_node_accumulates():
    x = V([[3.0]])
    (x * x + x).backward()
    assert x.grad[0, 0] == 7.0


def test_shape_mismatch_raises():
    with pytest.raises(DomainError):
        ad.matmul(V(A), V(A))
    with pytest.raises(DomainError):
        V(A) + V(B)


def test_grad_check_quadratic():
    x = V(r.normal(size=(3, 3)))
    assert ad.grad_check(lambda: ad.sum_all(ad.square(x)), [x]) < 1e-9


def test_grad_check_single_lstm_cell():
    z, c = V(r.normal(size=(1, 8))), V(r.normal(size=(1, 2)))
    assert ad.grad_check(lambda: ad.sum_all(ad.lstm_cell(z, c)), [z, c]) < 1e-4


def test_grad_check_rejects_bad_eps():
    x = V([[1.0]])
    with pytest.raises(DomainError):
        ad.grad_check(lambda: ad.sum_all(x), [x], eps=0)
