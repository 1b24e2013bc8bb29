"""Baselines, per-step error curves, report export and stage latency timing."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import WindowSample, stack_inputs, stack_targets
from .errors import DomainError
from .geometry import angular_delta, circular_mean_deg, spherical_rmse_per_step, wrap_angle
from .models import ModelParameters, predict
from .saliency import Frame, PoolSpec, pool_flatten, preprocess

AXES = ("az", "el", "combined")
CENTER = "center_hmd"
MEAN = "mean_hmd"


def center_hmd_baseline(sample: WindowSample) -> np.ndarray:
    """Gaze assumed to stay on the head's forward direction at the anchor frame."""
    return np.zeros((len(sample.target), 2))


def mean_hmd_baseline(sample: WindowSample) -> np.ndarray:
    """Average head direction over the input window, relative to the anchor pose.

    Azimuth uses the circular mean, elevation the plain mean; the same offset
    is predicted for every horizon step.
    """
    win = sample.hmd_window
    if win is None or len(win) == 0:
        raise DomainError("mean-HMD baseline needs the window's head poses")
    ref = win[-1]
    off = (wrap_angle(circular_mean_deg(win[:, 0]) - ref[0]), float(np.mean(win[:, 1]) - ref[1]))
    return np.tile(off, (len(sample.target), 1))


def per_sample(fn):
    """Lift a one-sample predictor to a list-of-samples predictor."""
    return lambda samples: np.stack([fn(s) for s in samples])


def model_predictor(mp: ModelParameters):
    dtype = mp.values()[0].dtype
    return lambda samples: predict(mp, stack_inputs(samples, dtype))


BASELINES = {CENTER: per_sample(center_hmd_baseline), MEAN: per_sample(mean_hmd_baseline)}


@dataclass
class ModelCurve:
    name: str
    combined: float
    rmse: np.ndarray  # (q, 3): az, el, combined per horizon step
    std: np.ndarray  # (q, 3): spread of per-sample absolute errors
    improvement: np.ndarray  # (q, 3): 1 - rmse / rmse_center


@dataclass
class EvalReport:
    q: int
    n_samples: int
    fps: float = 30.0
    models: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.models[name]


def _improvement(rmse, ref):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 - rmse / ref
    out[(ref == 0) & (rmse == 0)] = 0.0
    return out


def _curve(name, preds, truths, ref_rmse=None):
    d = angular_delta(preds, truths)
    rmse = spherical_rmse_per_step(preds, truths)
    mags = np.stack([np.abs(d[..., 0]), np.abs(d[..., 1]),
                     np.sqrt((d[..., 0] ** 2 + d[..., 1] ** 2) / 2)], axis=-1)
    std = mags.std(axis=0)
    combined = math.sqrt(float(np.mean((d[..., 0] ** 2 + d[..., 1] ** 2) / 2)))
    imp = _improvement(rmse, rmse if ref_rmse is None else ref_rmse)
    return ModelCurve(name, combined, rmse, std, imp)


def evaluate(predictors, testset, fps=30.0) -> EvalReport:
    """Score each predictor on ``testset``.

    ``predictors`` maps a name to a callable taking a list of samples and
    returning ``(n, q, 2)`` offsets (see :func:`model_predictor`,
    :data:`BASELINES`). Improvements are relative to the Center-HMD baseline,
    which is always computed.
    """
    testset = list(testset)
    if not testset:
        raise DomainError("evaluate: empty test set")
    truths = stack_targets(testset)
    center = np.zeros_like(truths)
    ref = spherical_rmse_per_step(center, truths)
    report = EvalReport(q=truths.shape[1], n_samples=len(testset), fps=fps)
    for name, fn in predictors.items():
        preds = np.asarray(fn(testset), dtype=np.float64)
        if preds.shape != truths.shape:
            raise DomainError(f"{name}: predictions {preds.shape} vs targets {truths.shape}")
        report.models[name] = _curve(name, preds, truths, ref)
    return report


def _num(x):
    return f"{x:.9g}"


def report_rows(report: EvalReport):
    yield ("model", "step", "time_ms", "axis", "rmse", "std", "improvement")
    for name, c in report.models.items():
        for t in range(report.q):
            ms = (t + 1) * 1000.0 / report.fps
            for a, axis in enumerate(AXES):
                yield (name, t + 1, f"{ms:.3f}", axis, _num(c.rmse[t, a]), _num(c.std[t, a]),
                       _num(c.improvement[t, a]))


def report_summary(report: EvalReport) -> str:
    out = io.StringIO()
    out.write(f"Spherical RMSE over {report.n_samples} test windows, q={report.q}\n\n")
    out.write(f"{'model':<16}{'combined':>12}{'az':>10}{'el':>10}\n")
    for name, c in report.models.items():
        mse = (c.rmse ** 2).mean(axis=0)
        out.write(f"{name:<16}{c.combined:>12.4f}{math.sqrt(mse[0]):>10.4f}{math.sqrt(mse[1]):>10.4f}\n")
    out.write("\nCombined RMSE per horizon step (deg)\n")
    out.write(f"{'step':>6}{'ms':>9}" + "".join(f"{n:>16}" for n in report.models) + "\n")
    for t in range(report.q):
        out.write(f"{t + 1:>6}{(t + 1) * 1000.0 / report.fps:>9.1f}")
        out.write("".join(f"{c.rmse[t, 2]:>16.4f}" for c in report.models.values()) + "\n")
    return out.getvalue()


def export_report(report: EvalReport, path) -> tuple:
    """Write ``path`` (CSV, one row per model x step x axis) and ``path`` with a
    ``.txt`` suffix holding the readable summary. Returns both paths."""
    if not report.models:
        raise DomainError("export_report: report has no models")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(report_rows(report))
    summary = path.with_suffix(".txt")
    summary.write_text(report_summary(report), encoding="utf-8")
    return path, summary


STAGES = (
    ("preprocess", "resize one frame"),
    ("saliency", "saliency map and pooling for one frame"),
    ("model", "forecast from one window"),
)


def _stats(samples_s):
    ms = np.asarray(samples_s) * 1000.0
    return float(ms.mean()), float(np.percentile(ms, 95))


def bench_pipeline(mp: ModelParameters, provider, n_reps=100, frame_size=(768, 576),
                   pool: PoolSpec = PoolSpec(), seed=0) -> dict:
    """Time each pipeline stage ``n_reps`` times on random input.

    Returns ``{stage: (mean_ms, p95_ms)}`` for the stages in :data:`STAGES`.
    """
    if n_reps < 1:
        raise DomainError(f"n_reps must be >= 1, got {n_reps}")
    rng = np.random.default_rng(seed)
    w, h = frame_size
    frame = Frame(rng.random((h, w, 3)))
    window = rng.random((1, mp.p, mp.input_dim)).astype(mp.values()[0].dtype)
    times = {name: [] for name, _ in STAGES}
    for _ in range(n_reps):
        t0 = time.perf_counter()
        pre = preprocess(frame, provider.size)
        t1 = time.perf_counter()
        pool_flatten(provider.saliency(pre), pool)
        t2 = time.perf_counter()
        predict(mp, window)
        t3 = time.perf_counter()
        times["preprocess"].append(t1 - t0)
        times["saliency"].append(t2 - t1)
        times["model"].append(t3 - t2)
    return {name: _stats(v) for name, v in times.items()}


def format_bench(result: dict, n_reps: int) -> str:
    lines = ["stage,label,mean_ms,p95_ms,n_reps"]
    for name, label in STAGES:
        mean, p95 = result[name]
        lines.append(f"{name},{label},{mean:.3f},{p95:.3f},{n_reps}")
    return "\n".join(lines) + "\n"
