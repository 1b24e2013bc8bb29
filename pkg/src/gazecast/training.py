"""Adam training under the spherical MSE (or angular) loss with early stopping."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .dataset import make_batches, stack_inputs, stack_targets
from .errors import DomainError, NumericError
from .models import ModelParameters, forward_graph, save_checkpoint

log = logging.getLogger(__name__)

LOSSES = ("spherical_mse", "angular")
IMPROVEMENT_TOL = 1e-6


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 8
    seed: int = 0
    loss: str = "spherical_mse"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 5.0
    dtype: str = "float32"

    def __post_init__(self):
        if not self.learning_rate > 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise DomainError("learning_rate, batch_size, max_epochs and patience must be positive")
        if self.loss not in LOSSES:
            raise DomainError(f"unknown loss {self.loss!r}; choose from {LOSSES}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise DomainError("Adam requires 0 <= beta < 1 and eps > 0")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise DomainError("clip_norm must be positive or None")
        if self.dtype not in ("float32", "float64"):
            raise DomainError(f"dtype must be float32 or float64, got {self.dtype!r}")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False
    final: object = field(default=None, repr=False)

    def __len__(self):
        return len(self.train_loss)


def adam_step(params, grads, state: AdamState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update in place.

    ``params`` maps names to Values, ``grads`` maps the same names to arrays.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if p.data.shape != g.shape:
            raise DomainError(f"gradient for {name!r} has shape {g.shape}, parameter {p.data.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= (cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(p.data.dtype, copy=False)


def loss_graph(pred: ad.Value, target, kind="spherical_mse") -> ad.Value:
    """Mean loss over samples and horizon steps for ``(m, 2q)`` predictions."""
    target = np.asarray(target, dtype=pred.dtype).reshape(pred.shape)
    diff = ad.wrap_cols(pred - ad.Value(target), slice(0, None, 2))
    if kind == "spherical_mse":
        # mean over the 2q columns is the per-pair (d_az^2 + d_el^2) / 2
        return ad.mean(ad.square(diff))
    if kind == "angular":
        return ad.mean(ad.absolute(diff))
    raise DomainError(f"unknown loss {kind!r}")


def clip_grads(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * np.asarray(scale, dtype=grads[k].dtype)
    return total


def evaluate_loss(mp: ModelParameters, samples, kind="spherical_mse", batch_size=256) -> float:
    total = 0.0
    n = 0
    dtype = mp.values()[0].dtype
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        pred = forward_graph(mp, stack_inputs(chunk, dtype))
        total += float(loss_graph(pred, stack_targets(chunk), kind).data[0, 0]) * len(chunk)
        n += len(chunk)
    return total / n


def train(trainset, valset, model: ModelParameters, cfg: TrainConfig = TrainConfig(), on_epoch=None):
    """Fit a copy of ``model``; return ``(best_params, history)``.

    The returned parameters are a copy taken at the epoch with the lowest
    validation loss; ``history.final`` holds the last epoch's. Training stops once ``cfg.patience`` consecutive epochs
    fail to beat the best validation loss by more than ``IMPROVEMENT_TOL``.
    """
    if not trainset or not valset:
        raise DomainError("train and validation sets must be non-empty")
    dtype = np.dtype(cfg.dtype)
    mp = model.astype(dtype)
    names = list(mp.params)
    state = AdamState()
    history = TrainHistory()
    best = None
    best_val = math.inf
    stale = 0
    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        batches = make_batches(trainset, cfg.batch_size, shuffle=True, seed=cfg.seed * 100_003 + epoch)
        running = 0.0
        for batch in batches:
            ad.zero_grad(mp.values())
            pred = forward_graph(mp, batch.inputs(dtype))
            loss = loss_graph(pred, batch.targets(), cfg.loss)
            loss.backward()
            grads = {k: (mp[k].grad if mp[k].grad is not None else np.zeros_like(mp[k].data)) for k in names}
            if cfg.clip_norm is not None:
                clip_grads(grads, cfg.clip_norm)
            adam_step(mp.params, grads, state, cfg)
            running += float(loss.data[0, 0]) * len(batch)
        train_loss = running / len(trainset)
        val_loss = evaluate_loss(mp, valset, cfg.loss)
        if not math.isfinite(val_loss):
            raise NumericError(f"validation loss became {val_loss} at epoch {epoch + 1}")
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.wall_time.append(time.perf_counter() - t0)
        if val_loss < best_val - IMPROVEMENT_TOL:
            best_val = val_loss
            best = mp.copy()
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
        log.info("epoch %d train %.4f val %.4f%s", epoch + 1, train_loss, val_loss,
                 " *" if stale == 0 else "")
        if on_epoch is not None:
            on_epoch(epoch, train_loss, val_loss)
        if stale >= cfg.patience:
            history.stopped_early = True
            break
    if best is None:
        best = mp.copy()
        history.best_epoch = len(history) - 1
    history.final = mp
    return best, history


def write_history(history: TrainHistory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "wall_time_s", "best"])
        for i, (tl, vl, wt) in enumerate(zip(history.train_loss, history.val_loss, history.wall_time)):
            w.writerow([i + 1, f"{tl:.9g}", f"{vl:.9g}", f"{wt:.4f}", int(i == history.best_epoch)])


def save_run(run_dir, best: ModelParameters, final: ModelParameters | None, history: TrainHistory, config):
    """Write ``config.json``, ``history.csv``, ``best.ckpt`` and ``final.ckpt``.

    ``config`` is a :class:`TrainConfig` or any JSON-serialisable dict.
    """
    if isinstance(config, TrainConfig):
        config = config_dict(config)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    write_history(history, run_dir / "history.csv")
    save_checkpoint(best, run_dir / "best.ckpt")
    if final is not None:
        save_checkpoint(final, run_dir / "final.ckpt")


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
