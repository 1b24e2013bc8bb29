import math

import numpy as np
import pytest

from gazecast import autodiff as ad
from gazecast.dataset import WindowSample
from gazecast.errors import DomainError, NumericError
from gazecast.geometry import spherical_mse, spherical_rmse
from gazecast.models import default_dims, forward_graph, init_params, predict, save_checkpoint
from gazecast.training import (
    AdamState, TrainConfig, adam_step, clip_grads, evaluate_loss, loss_graph, save_run, train,
)


def adam_by_hand(x, steps, lr=0.001, b1=0.9, b2=0.999, eps=1e-8):
    """Adam on f(x) = x^2 written out with plain floats."""
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2.0 * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        x = x - lr * m_hat / (math.sqrt(v_hat) + eps)
    return x


def test_adam_first_step_is_lr_times_sign():
    # t=1: m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
    assert adam_by_hand(1.0, 1) == pytest.approx(1 - 0.001 * 2 / (2 + 1e-8), abs=1e-15)


def test_adam_three_steps_oracle():
    x = ad.Value(np.array([[1.0]]))
    state = AdamState()
    cfg = TrainConfig(learning_rate=0.001)
    trajectory = []
    for _ in range(3):
        adam_step({"x": x}, {"x": 2.0 * x.data}, state, cfg)
        trajectory.append(float(x.data[0, 0]))
    for k, got in enumerate(trajectory, start=1):
        assert abs(got - adam_by_hand(1.0, k)) <= 1e-12
    assert state.t == 3
    # Consistent gradient sign: each step is close to lr.
    assert trajectory[-1] == pytest.approx(0.997, abs=1e-6)


def test_adam_zero_gradient_leaves_params():
    x = ad.Value(np.array([[0.5, -2.0]]))
    state = AdamState()
    cfg = TrainConfig()
    adam_step({"x": x}, {"x": np.array([[1.0, 1.0]])}, state, cfg)
    before = x.data.copy()
    m_before, v_before = state.m["x"].copy(), state.v["x"].copy()
    adam_step({"x": x}, {"x": np.zeros((1, 2))}, state, cfg)
    np.testing.assert_allclose(state.m["x"], 0.9 * m_before)
    np.testing.assert_allclose(state.v["x"], 0.999 * v_before)
    # The decayed moments still carry the earlier direction; from a fresh state nothing moves.
    assert not np.array_equal(x.data, before)
    y = ad.Value(np.array([[3.0]]))
    adam_step({"y": y}, {"y": np.zeros((1, 1))}, AdamState(), cfg)
    assert y.data[0, 0] == 3.0


def test_adam_rejects_non_finite_gradient():
    x = ad.Value(np.zeros((1, 2)))
    with pytest.raises(NumericError, match="W_bad"):
        adam_step({"W_bad": x}, {"W_bad": np.array([[np.nan, 0.0]])}, AdamState(), TrainConfig())


def test_clip_grads():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clip_grads(grads, 1.0)
    assert math.hypot(grads["a"][0], grads["b"][0]) == pytest.approx(1.0)
    small = {"a": np.array([0.1])}
    clip_grads(small, 5.0)
    assert small["a"][0] == 0.1


def test_loss_graph_matches_geometry():
    r = np.random.default_rng(0)
    pred = r.uniform(-180, 180, (4, 6))
    tgt = r.uniform(-180, 180, (4, 3, 2))
    got = float(loss_graph(ad.Value(pred), tgt).data[0, 0])
    assert got == pytest.approx(spherical_mse(pred.reshape(-1, 2), tgt.reshape(-1, 2)), rel=1e-12)
    ang = float(loss_graph(ad.Value(pred), tgt, "angular").data[0, 0])
    assert ang >= 0
    with pytest.raises(DomainError):
        loss_graph(ad.Value(pred), tgt, "huber")


def test_loss_gradient_finite_differences():
    r = np.random.default_rng(1)
    w = ad.Value(r.normal(size=(5, 4)))
    x = r.normal(size=(3, 5))
    tgt = r.normal(size=(3, 2, 2)) * 3
    for kind in ("spherical_mse", "angular"):
        err = ad.grad_check(lambda: loss_graph(ad.Value(x) @ w, tgt, kind), [w], 1e-6)
        assert err < 1e-5, kind


P, Q, F = 5, 3, 2


def linear_task(n, seed, scale=5.0):
    """Target = last frame's first motion feature, copied to every output."""
    r = np.random.default_rng(seed)
    out = []
    for i in range(n):
        motion = r.normal(0, scale, (P, 4))
        out.append(WindowSample(i, r.random((P, F)), motion, np.full((Q, 2), motion[-1, 0]), f"s{i % 7}"))
    return out


def small_model(arch="tsmixer", seed=0):
    return init_params(arch, default_dims(arch, F + 4, p=P, q=Q, hidden_dim=16), seed=seed)


def test_learns_linear_task():
    tr, va = linear_task(800, 0), linear_task(200, 1)
    best, hist = train(tr, va, small_model(), TrainConfig(max_epochs=50, patience=50))
    x = np.stack([s.fused() for s in va])
    y = np.stack([s.target for s in va])
    rmse = spherical_rmse(predict(best, x).reshape(-1, 2), y.reshape(-1, 2)).rmse_combined
    assert rmse < 0.5
    first = hist.train_loss[:10]
    assert all(b <= a * 1.05 for a, b in zip(first, first[1:]))


def test_training_is_deterministic(tmp_path):
    tr, va = linear_task(96, 2), linear_task(32, 3)
    cfg = TrainConfig(max_epochs=3, batch_size=16, seed=4)
    a, ha = train(tr, va, small_model("lstm"), cfg)
    b, hb = train(tr, va, small_model("lstm"), cfg)
    save_checkpoint(a, tmp_path / "a.ckpt")
    save_checkpoint(b, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert ha.val_loss == hb.val_loss


def test_train_does_not_mutate_input_model():
    mp = small_model()
    before = [v.data.tobytes() for v in mp.values()]
    train(linear_task(32, 0), linear_task(8, 1), mp, TrainConfig(max_epochs=2))
    assert [v.data.tobytes() for v in mp.values()] == before


def test_patience_one_with_worsening_val_stops_after_two_epochs():
    tr = linear_task(64, 0)
    # Validation targets opposite to training targets: fitting the train set makes val worse.
    va = [WindowSample(s.anchor_f, s.visual, s.motion, -s.target * 50, s.session_id) for s in linear_task(32, 1)]
    _, hist = train(tr, va, small_model(), TrainConfig(max_epochs=20, patience=1, learning_rate=0.01))
    assert hist.val_loss[1] >= hist.val_loss[0]
    assert len(hist.val_loss) == 2 and hist.stopped_early and hist.best_epoch == 0


def test_patience_counts_consecutive_stale_epochs():
    _, hist = train(linear_task(32, 0), linear_task(8, 1), small_model(),
                    TrainConfig(max_epochs=30, patience=3, learning_rate=1e-30))
    # Steps of ~1e-30 vanish in float32, so the validation loss never changes and epochs 2..4 are stale.
    assert len(hist.val_loss) == 4 and hist.best_epoch == 0


def test_max_epochs_one():
    _, hist = train(linear_task(32, 0), linear_task(8, 1), small_model(), TrainConfig(max_epochs=1))
    assert len(hist.train_loss) == len(hist.val_loss) == 1 and not hist.stopped_early


def test_returns_best_validation_epoch():
    tr, va = linear_task(64, 0), linear_task(32, 5)
    best, hist = train(tr, va, small_model("lstm"), TrainConfig(max_epochs=12, patience=12, learning_rate=0.05))
    assert hist.best_epoch == int(np.argmin(hist.val_loss))
    assert evaluate_loss(best, va) == pytest.approx(min(hist.val_loss), rel=1e-6)


def test_nan_validation_aborts():
    va = linear_task(8, 1)
    va[0].target[0, 1] = np.nan
    with pytest.raises(NumericError):
        train(linear_task(16, 0), va, small_model(), TrainConfig(max_epochs=2))


def test_empty_sets_rejected():
    with pytest.raises(DomainError):
        train([], linear_task(4, 0), small_model())


def test_save_run_writes_artifacts(tmp_path):
    tr, va = linear_task(32, 0), linear_task(8, 1)
    cfg = TrainConfig(max_epochs=2)
    best, hist = train(tr, va, small_model(), cfg)
    save_run(tmp_path / "run", best, hist.final, hist, cfg)
    names = sorted(p.name for p in (tmp_path / "run").iterdir())
    assert names == ["best.ckpt", "config.json", "final.ckpt", "history.csv"]
    lines = (tmp_path / "run" / "history.csv").read_text().splitlines()
    assert len(lines) == 1 + len(hist.val_loss)


def test_float64_training_path():
    tr, va = linear_task(32, 0), linear_task(8, 1)
    best, _ = train(tr, va, small_model(), TrainConfig(max_epochs=1, dtype="float64"))
    assert best["W_out"].data.dtype == np.float64
    out = forward_graph(best, np.stack([s.fused() for s in va]))
    assert out.shape == (8, 2 * Q)
