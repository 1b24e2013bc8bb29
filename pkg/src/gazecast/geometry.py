"""Azimuth/elevation arithmetic, head-motion features, losses and error metrics.

All angles are degrees. Azimuth lives on the circle and is wrapped into
[-180, 180]; elevation is a bounded linear coordinate and is never wrapped.
Array-valued functions take ``(..., 2)`` arrays whose last axis is
``(azimuth, elevation)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DomainError

FRAME_RATE = 30.0


def _check_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise DomainError(f"{name}: non-finite value {v!r}")


@dataclass(frozen=True)
class HeadPose:
    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        _check_finite("HeadPose", self.azimuth_deg, self.elevation_deg)
        if not -180.0 <= self.azimuth_deg <= 180.0:
            raise DomainError(f"azimuth {self.azimuth_deg} outside [-180, 180]")
        if not -90.0 <= self.elevation_deg <= 90.0:
            raise DomainError(f"elevation {self.elevation_deg} outside [-90, 90]")


@dataclass(frozen=True)
class GazeOffset:
    """Gaze direction relative to a reference head pose."""

    d_az_deg: float
    d_el_deg: float

    def __post_init__(self):
        _check_finite("GazeOffset", self.d_az_deg, self.d_el_deg)
        if not -180.0 <= self.d_az_deg <= 180.0:
            raise DomainError(f"azimuth offset {self.d_az_deg} outside [-180, 180]")

    def as_array(self):
        return np.array([self.d_az_deg, self.d_el_deg])


@dataclass(frozen=True)
class MotionFeatures:
    w_az: float
    w_el: float
    d_az: float
    d_el: float

    def as_array(self):
        return np.array([self.w_az, self.w_el, self.d_az, self.d_el])


def wrap_angle(delta: float) -> float:
    """Map an angle difference into [-180, 180].

    Inside (-540, 540) a single +-360 shift is applied (180 and -180 map to
    themselves); larger magnitudes are first reduced with ``fmod``.
    """
    delta = float(delta)
    _check_finite("wrap_angle", delta)
    if abs(delta) >= 540.0:
        delta = math.fmod(delta, 360.0)
    if delta > 180.0:
        return delta - 360.0
    if delta < -180.0:
        return delta + 360.0
    return delta


def wrap_angles(delta) -> np.ndarray:
    """Vectorised :func:`wrap_angle`; same values bit for bit."""
    a = np.asarray(delta)
    if not np.all(np.isfinite(a)):
        raise DomainError("wrap_angles: non-finite input")
    return kernels.wrap_angles(a)


def clamp_elevation(el):
    return np.clip(el, -90.0, 90.0)


def gaze_offset(gt: HeadPose, hmd: HeadPose) -> GazeOffset:
    return GazeOffset(
        wrap_angle(gt.azimuth_deg - hmd.azimuth_deg),
        gt.elevation_deg - hmd.elevation_deg,
    )


def motion_features(curr: HeadPose, prev: HeadPose, dt: float = 1.0 / FRAME_RATE) -> MotionFeatures:
    """Backward-difference angular velocity (deg/s) and displacement (deg)."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    d_az = wrap_angle(curr.azimuth_deg - prev.azimuth_deg)
    d_el = curr.elevation_deg - prev.elevation_deg
    return MotionFeatures(d_az / dt, d_el / dt, d_az, d_el)


def motion_feature_array(az, el, dt: float = 1.0 / FRAME_RATE, first_prev=None) -> np.ndarray:
    """Motion features for a run of frames, shape ``(n, 4)``.

    ``first_prev`` is the ``(az, el)`` pose preceding ``az[0]``; without it the
    first row is all zeros.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    az = np.asarray(az, dtype=np.float64)
    el = np.asarray(el, dtype=np.float64)
    out = np.zeros((len(az), 4))
    if len(az) == 0:
        return out
    d_az = np.empty(len(az))
    d_el = np.empty(len(az))
    d_az[1:] = wrap_angles(az[1:] - az[:-1])
    d_el[1:] = el[1:] - el[:-1]
    if first_prev is None:
        d_az[0] = d_el[0] = 0.0
    else:
        d_az[0] = wrap_angle(az[0] - first_prev[0])
        d_el[0] = el[0] - first_prev[1]
    out[:, 0] = d_az / dt
    out[:, 1] = d_el / dt
    out[:, 2] = d_az
    out[:, 3] = d_el
    return out


def _pair_arrays(pred, truth):
    if isinstance(pred, GazeOffset):
        pred = pred.as_array()
    if isinstance(truth, GazeOffset):
        truth = truth.as_array()
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.shape[-1:] != (2,):
        raise DomainError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    return pred, truth


def angular_delta(pred, truth) -> np.ndarray:
    """Per-axis differences ``pred - truth`` with the azimuth wrapped."""
    pred, truth = _pair_arrays(pred, truth)
    d = pred - truth
    d[..., 0] = wrap_angles(d[..., 0])
    return d


def angular_loss(pred, truth) -> float:
    """Mean of ``(|d_az| + |d_el|) / 2`` over all pairs."""
    d = np.abs(angular_delta(pred, truth))
    return float(np.mean((d[..., 0] + d[..., 1]) / 2))


def spherical_mse(pred, truth) -> float:
    """Mean of ``(d_az**2 + d_el**2) / 2`` over all pairs."""
    d = angular_delta(pred, truth)
    return float(np.mean((d[..., 0] ** 2 + d[..., 1] ** 2) / 2))


class RMSE(NamedTuple):
    rmse_az: float
    rmse_el: float
    rmse_combined: float


def spherical_rmse(preds, truths) -> RMSE:
    """Per-axis and combined RMSE pooled over every pair given."""
    d = angular_delta(preds, truths).reshape(-1, 2)
    if d.shape[0] == 0:
        raise DomainError("spherical_rmse: empty input")
    sq = d ** 2
    mse_az = float(np.mean(sq[:, 0]))
    mse_el = float(np.mean(sq[:, 1]))
    return RMSE(math.sqrt(mse_az), math.sqrt(mse_el), math.sqrt((mse_az + mse_el) / 2))


def spherical_rmse_per_step(preds, truths) -> np.ndarray:
    """RMSE for each horizon step of ``(n, q, 2)`` arrays.

    Returns a ``(q, 3)`` array with columns ``(az, el, combined)``.
    """
    d = angular_delta(preds, truths)
    if d.ndim != 3 or d.shape[0] == 0:
        raise DomainError(f"expected non-empty (n, q, 2) arrays, got {d.shape}")
    mse = np.mean(d ** 2, axis=0)
    return np.sqrt(np.column_stack([mse[:, 0], mse[:, 1], (mse[:, 0] + mse[:, 1]) / 2]))


def circular_mean_deg(angles) -> float:
    a = np.radians(np.asarray(angles, dtype=np.float64))
    return float(np.degrees(np.arctan2(np.mean(np.sin(a)), np.mean(np.cos(a)))))
