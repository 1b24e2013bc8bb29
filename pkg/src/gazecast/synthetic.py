"""Synthetic sessions with a known relation between saliency, head motion and gaze.

Each session has one salient blob whose position in head coordinates is
``c(k)``. The head oscillates with angular velocity ``w(k)``; the blob moves
in the world at ``0.375 * w(k)`` so that in head coordinates it drifts by
``-0.625 * w(k) * dt`` per frame, and occasionally jumps to a new spot. The
eye holds ``gaze_gain * c(k)`` relative to the head plus Gaussian noise.
For an anchor ``f`` this makes the target offset

    gaze(f+t) - hmd(f) = 0.8 * c(f) + 0.5 * (hmd(f+t) - hmd(f)) + noise

i.e. ``0.8 * centroid + 0.5 * w * t * dt`` while the velocity is steady.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Session, write_session
from .geometry import clamp_elevation, wrap_angles
from .saliency import ArrayProvider, write_smap


@dataclass(frozen=True)
class SyntheticConfig:
    n_sessions: int = 200
    n_frames: int = 150
    fps: float = 30.0
    fov_az: float = 60.0  # half-width of the rendered map, degrees
    fov_el: float = 40.0
    map_width: int = 48
    map_height: int = 36
    blob_sigma_deg: float = 6.0
    gaze_gain: float = 0.8
    velocity_gain: float = 0.5
    noise_deg: float = 1.0
    head_speed: float = 20.0  # peak angular velocity scale, deg/s
    jump_rate: float = 1 / 90  # per-frame probability of a new salient spot
    seed: int = 0


@dataclass
class SyntheticCorpus:
    config: SyntheticConfig
    sessions: list
    centroids: dict  # session id -> (T, 2) blob position in head coordinates

    def render(self, session_id, index):
        cfg = self.config
        c_az, c_el = self.centroids[session_id][index]
        xs = (np.arange(cfg.map_width) + 0.5) / cfg.map_width * 2 * cfg.fov_az - cfg.fov_az
        ys = cfg.fov_el - (np.arange(cfg.map_height) + 0.5) / cfg.map_height * 2 * cfg.fov_el
        s2 = 2 * cfg.blob_sigma_deg ** 2
        return np.exp(-((ys[:, None] - c_el) ** 2 + (xs[None, :] - c_az) ** 2) / s2)

    def provider(self):
        return ArrayProvider(self.render, size=(self.config.map_width, self.config.map_height))

    def write(self, out_dir, maps=True):
        """Session CSVs under ``out_dir/sessions`` and SMAP files under ``out_dir/saliency``."""
        out_dir = Path(out_dir)
        for s in self.sessions:
            write_session(s, out_dir / "sessions" / f"{s.id}.csv")
            if maps:
                for k in range(s.T):
                    write_smap(out_dir / "saliency" / s.id / f"{k}.smap", self.render(s.id, k).astype(np.float32))


def _session(rng, cfg: SyntheticConfig, sid):
    n, dt = cfg.n_frames, 1.0 / cfg.fps
    k = np.arange(n)
    w = np.zeros((n, 2))
    for axis, amp in ((0, 1.0), (1, 0.4)):
        a = rng.uniform(0.5, 1.5) * cfg.head_speed * amp
        period = rng.uniform(2.0, 4.0) * cfg.fps
        w[:, axis] = a * np.sin(2 * np.pi * k / period + rng.uniform(0, 2 * np.pi))
    w += rng.normal(0.0, 0.05 * cfg.head_speed, size=(n, 2)).cumsum(axis=0) * 0.1

    lim = np.array([0.45 * cfg.fov_az, 0.4 * cfg.fov_el])
    c = np.zeros((n, 2))
    c[0] = rng.uniform(-lim, lim)
    # head-frame drift per unit head velocity that yields velocity_gain in the offset
    drift = (1.0 - cfg.velocity_gain) / cfg.gaze_gain
    for i in range(1, n):
        if rng.random() < cfg.jump_rate:
            c[i] = rng.uniform(-lim, lim)
        else:
            c[i] = c[i - 1] - drift * w[i - 1] * dt

    hmd = np.zeros((n, 2))
    hmd[0] = (rng.uniform(-180, 180), rng.uniform(-20, 20))
    hmd[1:] = hmd[0] + np.cumsum(w[:-1] * dt, axis=0)
    gaze = hmd + cfg.gaze_gain * c + rng.normal(0.0, cfg.noise_deg, size=(n, 2))
    hmd[:, 0] = wrap_angles(hmd[:, 0])
    gaze[:, 0] = wrap_angles(gaze[:, 0])
    hmd[:, 1] = clamp_elevation(hmd[:, 1])
    gaze[:, 1] = clamp_elevation(gaze[:, 1])
    return Session(sid, hmd, gaze, fps=cfg.fps), c


def make_corpus(cfg: SyntheticConfig = SyntheticConfig()) -> SyntheticCorpus:
    rng = np.random.default_rng(cfg.seed)
    sessions, centroids = [], {}
    width = len(str(cfg.n_sessions - 1))
    for i in range(cfg.n_sessions):
        sid = f"synth{i:0{width}d}"
        s, c = _session(rng, cfg, sid)
        sessions.append(s)
        centroids[sid] = c
    return SyntheticCorpus(cfg, sessions, centroids)
