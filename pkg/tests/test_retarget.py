import numpy as np
import pytest

from wholebody.errors import ConfigError
from wholebody.motion import SourceMotion, velocity_violations
from wholebody.retarget import (KEY_JOINTS, frame_targets, normalize_source, retarget_motion,
                                tpose_motion, tracking_report)
from wholebody.shapefit import ShapeParams, bone_lengths, fit_shape


@pytest.fixture(scope="module")
def beta(skeleton, model):
    return fit_shape(skeleton, model)[0]


@pytest.fixture(scope="module")
def retargeted(sample, skeleton, model, beta):
    norm = normalize_source(sample, skeleton, beta)
    return norm, retarget_motion(norm, model, skeleton)


def _bones(motion, skel):
    f = motion.frames
    return np.stack([np.linalg.norm(f[:, j] - f[:, p], axis=1)
                     for j, p in enumerate(skel.parents) if p >= 0], axis=1)


def test_normalized_bones_have_fitted_lengths(sample, skeleton, beta):
    norm = normalize_source(sample, skeleton, beta)
    want = bone_lengths(skeleton, beta)[1:]
    np.testing.assert_allclose(_bones(norm, skeleton), np.broadcast_to(want, (sample.n_frames, 23)),
                               atol=1e-12)
    np.testing.assert_array_equal(norm.frames[:, 0], sample.frames[:, 0])


def test_normalize_keeps_bone_directions(sample, skeleton, beta):
    norm = normalize_source(sample, skeleton, beta)
    for j, p in enumerate(skeleton.parents):
        if p < 0:
            continue
        a = sample.frames[:, j] - sample.frames[:, p]
        b = norm.frames[:, j] - norm.frames[:, p]
        cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        assert np.all(cos > 1 - 1e-12)


def test_normalize_zero_length_bone_borrows_direction(sample, skeleton, beta):
    frames = sample.frames[:3].copy()
    frames[1, 18] = frames[1, 16]        # collapse the left upper arm on frame 1
    frames[0, 20] = frames[0, 18]        # and the left forearm on frame 0
    m = SourceMotion(sample.fps, frames, sample.description)
    norm = normalize_source(m, skeleton, beta)
    assert np.all(np.isfinite(norm.frames))
    d_prev = norm.frames[0, 18] - norm.frames[0, 16]
    d_here = norm.frames[1, 18] - norm.frames[1, 16]
    np.testing.assert_allclose(d_here, d_prev, atol=1e-12)
    tpose_dir = skeleton.offsets(beta)[20]
    np.testing.assert_allclose(norm.frames[0, 20] - norm.frames[0, 18], tpose_dir, atol=1e-12)


def test_sample_tracking_within_bounds(retargeted, sample, skeleton, model):
    norm, traj = retargeted
    rep = tracking_report(norm, model, traj, skeleton)
    assert rep["overall"]["mean"] < 0.02
    assert rep["overall"]["max"] < 0.05
    assert rep["per_frame"].shape == (sample.n_frames, len(KEY_JOINTS))
    assert not velocity_violations(traj, model).any()
    assert model.within_limits(traj.rows.min(0)) and model.within_limits(traj.rows.max(0))


def test_tpose_retarget_is_near_constant(skeleton, model, beta):
    motion = tpose_motion(skeleton, beta, n_frames=20)
    traj = retarget_motion(motion, model, skeleton)
    assert np.abs(np.diff(traj.rows, axis=0)).max() < 1e-3
    rep = tracking_report(motion, model, traj, skeleton)
    assert rep["overall"]["max"] < 0.01


def test_targets_are_pelvis_relative(sample, skeleton):
    shifted = SourceMotion(sample.fps, sample.frames + np.array([3.0, -2.0, 0.5]), sample.description)
    a = frame_targets(sample, skeleton, 10, {"left_wrist": 1.0})
    b = frame_targets(shifted, skeleton, 10, {"left_wrist": 1.0})
    np.testing.assert_allclose(a[0].position, b[0].position, atol=1e-12)


def test_report_frame_mismatch(retargeted, skeleton, model):
    norm, traj = retargeted
    short = SourceMotion(norm.fps, norm.frames[:10], norm.description)
    with pytest.raises(ConfigError):
        tracking_report(short, model, traj, skeleton)


def test_bad_q0(sample, skeleton, model):
    with pytest.raises(ConfigError):
        retarget_motion(sample, model, skeleton, q0=np.zeros(3))
    with pytest.raises(ConfigError):
        retarget_motion(sample, model, skeleton, q0=np.full(model.n_joints, 50.0))


def test_source_motion_validation():
    with pytest.raises(ConfigError):
        SourceMotion(30.0, np.zeros((5, 23, 3)), "x")
    with pytest.raises(ConfigError):
        SourceMotion(0.0, np.zeros((5, 24, 3)), "x")
    assert ShapeParams.zeros().beta.shape == (10,)
