import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gazecast.errors import DomainError
from gazecast.geometry import (
    GazeOffset, HeadPose, angular_loss, circular_mean_deg, gaze_offset, motion_feature_array,
    motion_features, spherical_mse, spherical_rmse, spherical_rmse_per_step, wrap_angle, wrap_angles,
)

angles = st.floats(-539.99, 539.99, allow_nan=False)
az = st.floats(-180, 180, allow_nan=False)
el = st.floats(-90, 90, allow_nan=False)


@pytest.mark.parametrize("delta,expected", [(190, -170), (-190, 170), (45, 45), (180, 180), (-180, -180), (360, 0)])
def test_wrap_examples(delta, expected):
    assert wrap_angle(delta) == expected


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_wrap_rejects_non_finite(bad):
    with pytest.raises(DomainError):
        wrap_angle(bad)
    with pytest.raises(DomainError):
        wrap_angles([0.0, bad])


def test_wrap_large_inputs_reduce_modulo_360():
    assert wrap_angle(1000.0) == -80.0
    assert wrap_angle(-1000.0) == 80.0


@given(angles)
def test_wrap_range_and_congruence(d):
    w = wrap_angle(d)
    assert -180 <= w <= 180
    assert math.isclose(math.remainder(w - d, 360.0), 0.0, abs_tol=1e-9)


@given(angles)
def test_wrap_idempotent(d):
    w = wrap_angle(d)
    assert wrap_angle(w) == w


def test_vectorised_wrap_matches_scalar():
    x = np.arange(-539.75, 540, 0.25)
    assert np.array_equal(wrap_angles(x), np.array([wrap_angle(v) for v in x]))


@pytest.mark.parametrize("gt,hmd,expected", [
    ((170, 10), (-170, 0), (-20, 10)),
    ((30, 5), (30, 5), (0, 0)),
    ((10, -5), (0, 5), (10, -10)),
])
def test_gaze_offset_examples(gt, hmd, expected):
    off = gaze_offset(HeadPose(*gt), HeadPose(*hmd))
    assert (off.d_az_deg, off.d_el_deg) == pytest.approx(expected)


def test_head_pose_validation():
    with pytest.raises(DomainError):
        HeadPose(200, 0)
    with pytest.raises(DomainError):
        HeadPose(0, 95)
    with pytest.raises(DomainError):
        HeadPose(math.nan, 0)
    with pytest.raises(DomainError):
        GazeOffset(181, 0)


def test_motion_features_examples():
    mf = motion_features(HeadPose(1, 0), HeadPose(0, 0), 1 / 30)
    assert (mf.w_az, mf.w_el, mf.d_az, mf.d_el) == pytest.approx((30, 0, 1, 0))
    assert motion_features(HeadPose(5, 5), HeadPose(5, 5)).as_array().tolist() == [0, 0, 0, 0]


def test_motion_features_across_seam():
    # Oracle: among rotations equivalent to 179 -> -179 (k*360 + 2), the smallest magnitude is +2.
    candidates = [-179 - 179 + 360 * k for k in range(-2, 3)]
    best = min(candidates, key=abs)
    mf = motion_features(HeadPose(-179, 0), HeadPose(179, 0), 1.0)
    assert (mf.w_az, mf.w_el, mf.d_az, mf.d_el) == pytest.approx((best, 0, best, 0))


def test_motion_features_rejects_bad_dt():
    with pytest.raises(DomainError):
        motion_features(HeadPose(0, 0), HeadPose(0, 0), 0)
    with pytest.raises(DomainError):
        motion_features(HeadPose(0, 0), HeadPose(0, 0), -1)


@given(az, el, az, el, st.floats(-720, 720, allow_nan=False))
def test_motion_features_azimuth_translation_invariance(a1, e1, a2, e2, shift):
    base = motion_features(HeadPose(a1, e1), HeadPose(a2, e2))
    moved = motion_features(HeadPose(wrap_angle(a1 + shift), e1), HeadPose(wrap_angle(a2 + shift), e2))
    # A half-turn is ambiguous (+180 and -180 are the same rotation), so compare modulo 360.
    assert math.remainder(moved.d_az - base.d_az, 360.0) == pytest.approx(0, abs=1e-6)
    assert (moved.w_el, moved.d_el) == pytest.approx((base.w_el, base.d_el))


def test_motion_feature_array_matches_scalar_path():
    r = np.random.default_rng(0)
    a = wrap_angles(np.cumsum(r.normal(0, 20, 30)))
    e = np.clip(np.cumsum(r.normal(0, 2, 30)), -90, 90)
    arr = motion_feature_array(a, e, 1 / 30, first_prev=(10.0, 0.0))
    assert arr[0] == pytest.approx(motion_features(HeadPose(a[0], e[0]), HeadPose(10, 0)).as_array())
    for k in range(1, 30):
        assert arr[k] == pytest.approx(motion_features(HeadPose(a[k], e[k]), HeadPose(a[k - 1], e[k - 1])).as_array())
    assert motion_feature_array(a, e)[0].tolist() == [0, 0, 0, 0]


def test_losses_examples():
    assert angular_loss((1, 2), (1, 2)) == 0
    assert angular_loss((10, 0), (0, 0)) == 5
    assert angular_loss((-4, 6), (2, -2)) == 7
    assert spherical_mse((3, 3), (3, 3)) == 0
    assert spherical_mse((10, 0), (0, 0)) == 50
    assert spherical_mse((175, 0), (-175, 0)) == 50


def test_losses_accept_gaze_offsets():
    assert spherical_mse(GazeOffset(10, 0), GazeOffset(0, 0)) == 50


def test_shape_mismatch():
    with pytest.raises(DomainError):
        spherical_mse(np.zeros((3, 2)), np.zeros((4, 2)))


@given(az, el, az, el)
def test_spherical_mse_symmetric_and_nonnegative(a1, e1, a2, e2):
    m1 = spherical_mse((a1, e1), (a2, e2))
    m2 = spherical_mse((a2, e2), (a1, e1))
    assert m1 >= 0
    assert m1 == pytest.approx(m2, rel=1e-12, abs=1e-9)
    if a1 == a2 and e1 == e2:
        assert m1 == 0


def test_rmse_examples():
    assert tuple(spherical_rmse([(1, 1), (2, 2)], [(1, 1), (2, 2)])) == (0, 0, 0)
    assert tuple(spherical_rmse([(3, 4)], [(0, 0)])) == pytest.approx((3, 4, math.sqrt(12.5)))
    h = math.sqrt(0.5)
    assert tuple(spherical_rmse([(1, 0), (0, 1)], [(0, 0), (0, 0)])) == pytest.approx((h, h, h))
    with pytest.raises(DomainError):
        spherical_rmse(np.zeros((0, 2)), np.zeros((0, 2)))


@given(az, el, az, el)
def test_single_pair_rmse_is_sqrt_mse(a1, e1, a2, e2):
    r = spherical_rmse([(a1, e1)], [(a2, e2)])
    assert r.rmse_combined == pytest.approx(math.sqrt(spherical_mse((a1, e1), (a2, e2))), rel=1e-12, abs=1e-12)


def test_rmse_per_step_groups_by_horizon():
    preds = np.zeros((2, 3, 2))
    truths = np.array([[[1, 0], [2, 0], [3, 0]], [[1, 0], [2, 0], [3, 0]]], dtype=float)
    out = spherical_rmse_per_step(preds, truths)
    assert out[:, 0].tolist() == [1, 2, 3]
    assert out[:, 1].tolist() == [0, 0, 0]


def test_circular_mean_handles_seam():
    assert circular_mean_deg([179, -179]) == pytest.approx(180, abs=1e-9) or \
        circular_mean_deg([179, -179]) == pytest.approx(-180, abs=1e-9)
    assert circular_mean_deg([10, 20, 30]) == pytest.approx(20)
