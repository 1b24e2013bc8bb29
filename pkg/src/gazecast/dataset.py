"""Sessions, sliding-window samples, splitting and minibatching.

Frame indices are 0-based throughout. A window anchored at frame ``f`` reads
inputs from frames ``f - p + 1 .. f`` and targets from ``f + 1 .. f + q``, so
the valid anchors are ``p - 1 <= f <= T - q - 1`` (the 1-based condition
``p <= f <= T - q`` shifted down by one).

Session files are UTF-8 CSV with header ``frame,hmd_az,hmd_el,gaze_az,gaze_el``;
angles in degrees, one row per frame, gaze cells empty when unknown.
"""

from __future__ import annotations

import csv
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, MissingGazeError, SessionFormatError
from .geometry import FRAME_RATE, HeadPose, motion_feature_array, wrap_angles
from .saliency import PoolSpec, SaliencyProvider, pool_flatten

log = logging.getLogger(__name__)

COLUMNS = ("frame", "hmd_az", "hmd_el", "gaze_az", "gaze_el")


@dataclass(frozen=True)
class FrameRecord:
    index: int
    hmd: HeadPose
    gaze: HeadPose | None = None


@dataclass
class Session:
    """One recording. ``hmd`` and ``gaze`` are ``(T, 2)`` arrays of (az, el);
    unknown gaze rows are NaN."""

    id: str
    hmd: np.ndarray
    gaze: np.ndarray
    fps: float = FRAME_RATE
    frame_source: str | None = None

    def __post_init__(self):
        self.hmd = np.asarray(self.hmd, dtype=np.float64).reshape(-1, 2)
        self.gaze = np.asarray(self.gaze, dtype=np.float64).reshape(-1, 2)
        if self.hmd.shape != self.gaze.shape:
            raise DomainError(f"session {self.id}: hmd and gaze lengths differ")
        if not self.fps > 0:
            raise DomainError(f"session {self.id}: fps must be positive")

    def __len__(self):
        return len(self.hmd)

    @property
    def T(self):
        return len(self.hmd)

    def frame(self, i) -> FrameRecord:
        gaze = None if np.isnan(self.gaze[i]).any() else HeadPose(*self.gaze[i])
        return FrameRecord(i, HeadPose(*self.hmd[i]), gaze)

    @property
    def frames(self):
        return [self.frame(i) for i in range(self.T)]


@dataclass(frozen=True)
class WindowConfig:
    p: int = 15
    q: int = 10
    step: int = 5
    segment_len: int | None = 150

    def __post_init__(self):
        if self.p < 1 or self.q < 1 or self.step < 1:
            raise DomainError(f"p, q and step must be >= 1 (got {self.p}, {self.q}, {self.step})")
        if self.segment_len is not None and self.segment_len < self.p + self.q:
            raise DomainError(f"segment_len {self.segment_len} shorter than p + q = {self.p + self.q}")


@dataclass
class WindowSample:
    anchor_f: int
    visual: np.ndarray  # (p, F)
    motion: np.ndarray  # (p, 4)
    target: np.ndarray  # (q, 2)
    session_id: str = ""
    hmd_window: np.ndarray = field(default=None, repr=False)  # (p, 2) raw head poses

    def fused(self) -> np.ndarray:
        return np.hstack([self.visual, self.motion])


@dataclass
class Minibatch:
    samples: list

    def __len__(self):
        return len(self.samples)

    def inputs(self, dtype=np.float64):
        return np.stack([s.fused() for s in self.samples]).astype(dtype, copy=False)

    def targets(self):
        return np.stack([s.target for s in self.samples])


def _fail(path, row, kind, message):
    err = SessionFormatError(message, path=path, row=row)
    err.kind = kind
    return err


def _angle(text, path, row, column, lo, hi):
    try:
        v = float(text)
    except ValueError:
        raise _fail(path, row, "not-a-number", f"column {column}: {text!r} is not a number") from None
    if not math.isfinite(v):
        raise _fail(path, row, "non-finite", f"column {column}: non-finite angle {text!r}")
    if not lo <= v <= hi:
        raise _fail(path, row, "out-of-range", f"column {column}: {v} outside [{lo}, {hi}]")
    return v


def column_index(header, path=None) -> dict:
    header = [h.strip() for h in header]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise _fail(path, 1, "missing-column", f"missing column(s) {', '.join(missing)}")
    return {name: header.index(name) for name in COLUMNS}


def parse_row(row, col, n_fields, path=None, line=None):
    """Validate one data row; returns ``(frame, (hmd_az, hmd_el), (gaze_az, gaze_el))``."""
    if len(row) != n_fields:
        raise _fail(path, line, "field-count", f"expected {n_fields} fields, found {len(row)}")
    cell = {name: row[i].strip() for name, i in col.items()}
    try:
        idx = int(cell["frame"])
    except ValueError:
        raise _fail(path, line, "not-a-number", f"frame index {cell['frame']!r} is not an integer") from None
    az = _angle(cell["hmd_az"], path, line, "hmd_az", -180.0, 180.0)
    el = _angle(cell["hmd_el"], path, line, "hmd_el", -90.0, 90.0)
    g_az, g_el = cell["gaze_az"], cell["gaze_el"]
    if not g_az and not g_el:
        g = (math.nan, math.nan)
    elif not g_az or not g_el:
        raise _fail(path, line, "partial-gaze", "gaze_az and gaze_el must both be present or both empty")
    else:
        g = (_angle(g_az, path, line, "gaze_az", -180.0, 180.0),
             _angle(g_el, path, line, "gaze_el", -90.0, 90.0))
    return idx, (az, el), g


def load_session(path, session_id=None, fps=FRAME_RATE) -> Session:
    """Parse and validate a session CSV.

    Raises :class:`SessionFormatError` with ``kind`` one of ``empty``,
    ``missing-column``, ``field-count``, ``not-a-number``, ``non-finite``,
    ``out-of-range``, ``frame-index``, ``partial-gaze``; ``row`` is the 1-based
    line number.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise _fail(path, None, "empty", "file is empty")
    header = rows[0]
    col = column_index(header, path)
    hmd, gaze = [], []
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        idx, pose, g = parse_row(row, col, len(header), path, line)
        if idx != len(hmd):
            raise _fail(path, line, "frame-index",
                        f"frame index {idx} where {len(hmd)} was expected (gap or out of order)")
        hmd.append(pose)
        gaze.append(g)
    if not hmd:
        raise _fail(path, None, "empty", "no data rows")
    return Session(session_id or path.stem, np.array(hmd), np.array(gaze), fps=fps)


def _fmt(v):
    return "" if math.isnan(v) else repr(float(v))


def write_session(session: Session, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for i in range(session.T):
            w.writerow([i, *(_fmt(v) for v in session.hmd[i]), *(_fmt(v) for v in session.gaze[i])])


def load_sessions(directory, fps=FRAME_RATE) -> list:
    """All ``*.csv`` sessions in ``directory``, sorted by id."""
    paths = sorted(Path(directory).glob("*.csv"))
    if not paths:
        raise SessionFormatError(f"no session files (*.csv) in {directory}")
    return [load_session(p, fps=fps) for p in paths]


def valid_indices(T: int, cfg: WindowConfig) -> list:
    """0-based anchors ``p-1, p-1+step, ...`` up to ``T-q-1``; empty when ``T < p+q``."""
    return list(range(cfg.p - 1, T - cfg.q, cfg.step))


def segments(T: int, cfg: WindowConfig) -> list:
    """Non-overlapping ``(start, stop)`` ranges; a short tail is kept if it fits one window."""
    if not cfg.segment_len:
        return [(0, T)]
    out = []
    for start in range(0, T, cfg.segment_len):
        stop = min(start + cfg.segment_len, T)
        if stop - start >= cfg.p + cfg.q:
            out.append((start, stop))
    return out


def anchors(T: int, cfg: WindowConfig) -> list:
    """``(anchor, segment_start)`` pairs for a session of ``T`` frames."""
    return [(start + f, start) for start, stop in segments(T, cfg) for f in valid_indices(stop - start, cfg)]


class FeatureCache:
    """Memoises pooled saliency vectors per ``(session_id, frame)``."""

    def __init__(self, provider: SaliencyProvider, pool: PoolSpec):
        self.provider = provider
        self.pool = pool
        self._store = {}

    def __call__(self, session_id, index):
        key = (session_id, index)
        vec = self._store.get(key)
        if vec is None:
            vec = pool_flatten(self.provider.map_for(session_id, index), self.pool)
            self._store[key] = vec
        return vec

    def clear(self):
        self._store.clear()


def window_inputs(session: Session, f: int, cfg: WindowConfig, features, seg_start: int = 0):
    """``(visual, motion, hmd_window)`` for the window ending at frame ``f``.

    ``features`` is a :class:`FeatureCache` or any ``fn(session_id, index)``.
    The first motion row uses frame ``f - p`` when it lies inside the segment,
    else zeros.
    """
    lo = f - cfg.p + 1
    if lo < 0 or f >= session.T:
        raise DomainError(f"window ending at {f} does not fit session {session.id} (T={session.T})")
    prev = session.hmd[lo - 1] if lo - 1 >= seg_start else None
    win = session.hmd[lo:f + 1]
    motion = motion_feature_array(win[:, 0], win[:, 1], 1.0 / session.fps, prev)
    visual = np.stack([features(session.id, t) for t in range(lo, f + 1)])
    return visual, motion, win.copy()


def window_targets(session: Session, f: int, q: int) -> np.ndarray:
    gaze = session.gaze[f + 1:f + q + 1]
    if len(gaze) != q:
        raise DomainError(f"horizon beyond session end at anchor {f}")
    if np.isnan(gaze).any():
        raise MissingGazeError(f"session {session.id}: missing gaze in horizon of anchor {f}")
    ref = session.hmd[f]
    return np.column_stack([wrap_angles(gaze[:, 0] - ref[0]), gaze[:, 1] - ref[1]])


def build_sample(session: Session, f: int, cfg: WindowConfig, features, seg_start: int = 0) -> WindowSample:
    visual, motion, win = window_inputs(session, f, cfg, features, seg_start)
    target = window_targets(session, f, cfg.q)
    return WindowSample(f, visual, motion, target, session.id, win)


def build_samples(sessions, cfg: WindowConfig, provider: SaliencyProvider, pool: PoolSpec = PoolSpec()) -> list:
    """Samples for every valid anchor of every session, ordered by (session id, anchor).

    Windows whose horizon lacks gaze are skipped with a logged warning.
    """
    cache = FeatureCache(provider, pool)
    out = []
    for session in sorted(sessions, key=lambda s: s.id):
        for f, start in anchors(session.T, cfg):
            try:
                out.append(build_sample(session, f, cfg, cache, start))
            except MissingGazeError as exc:
                log.warning("skipping sample: %s", exc)
        cache.clear()
    return out


def holdout(samples, test_session_ids) -> tuple:
    """Split off every sample whose session is in ``test_session_ids``."""
    test_ids = set(test_session_ids)
    keep = [s for s in samples if s.session_id not in test_ids]
    test = [s for s in samples if s.session_id in test_ids]
    return keep, test


def train_val_split(samples, ratio=0.8, seed=0, by_session=False) -> tuple:
    """Seeded shuffle then split; the training part gets ``floor(ratio * n)`` items.

    With ``by_session`` the unit of shuffling is the session, so no session
    contributes to both parts.
    """
    if not 0 < ratio < 1:
        raise DomainError(f"ratio must lie in (0, 1), got {ratio}")
    samples = list(samples)
    if not samples:
        raise DomainError("cannot split an empty sample list")
    rng = random.Random(seed)
    if by_session:
        ids = sorted({s.session_id for s in samples})
        rng.shuffle(ids)
        n_train = math.floor(ratio * len(ids) + 1e-9)
        train_ids = set(ids[:n_train])
        return ([s for s in samples if s.session_id in train_ids],
                [s for s in samples if s.session_id not in train_ids])
    order = list(range(len(samples)))
    rng.shuffle(order)
    n_train = math.floor(ratio * len(samples) + 1e-9)
    return [samples[i] for i in order[:n_train]], [samples[i] for i in order[n_train:]]


def make_batches(samples, m=32, shuffle=False, seed=0) -> list:
    """Consecutive minibatches of at most ``m``; the last short batch is kept."""
    if m < 1:
        raise DomainError(f"batch size must be >= 1, got {m}")
    samples = list(samples)
    if shuffle:
        random.Random(seed).shuffle(samples)
    return [Minibatch(samples[i:i + m]) for i in range(0, len(samples), m)]


def stack_inputs(samples, dtype=np.float64):
    return np.stack([s.fused() for s in samples]).astype(dtype, copy=False)


def stack_targets(samples):
    return np.stack([s.target for s in samples])
