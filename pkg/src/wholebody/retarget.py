"""Shape normalization of source motions and sequential IK retargeting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .kinematics import FrameTarget, KinematicModel, ik_step, joint_kinematics
from .motion import JointTrajectory, SourceMotion
from .shapefit import N_SOURCE_JOINTS, ShapeParams, SourceSkeletonModel, skeleton_tpose

KEY_JOINTS = (
    "left_wrist", "right_wrist", "left_elbow", "right_elbow",
    "left_shoulder", "right_shoulder", "left_knee", "right_knee",
    "left_ankle", "right_ankle",
)
DEGENERATE_BONE = 1e-9


def _default_weights():
    return {name: (2.0 if name.endswith("wrist") else 1.0) for name in KEY_JOINTS}


@dataclass
class IKConfig:
    iterations: int = 10            # inner steps per frame
    settle_steps: int = 100         # extra steps on the first frame only
    damping: float | None = None    # None -> 1e-6 * c * sum(weights)
    posture_weight: float = 1e-3
    weights: dict[str, float] = field(default_factory=_default_weights)


def normalize_source(motion: SourceMotion, skel: SourceSkeletonModel, beta: ShapeParams) -> SourceMotion:
    """Rescale every bone to the length implied by ``beta``.

    Bone directions are kept; positions are recomposed from each frame's
    pelvis, so pelvis translation is preserved. A zero-length source bone
    borrows its direction from the previous frame (or the T pose on the
    first frame).
    """
    lengths = np.linalg.norm(skel.offsets(beta), axis=1)
    tpose_dir = skel.offsets(beta)
    src = motion.frames
    out = np.empty_like(src)
    prev_dir = np.zeros((N_SOURCE_JOINTS, 3))
    for j in range(1, N_SOURCE_JOINTS):
        n = np.linalg.norm(tpose_dir[j])
        prev_dir[j] = tpose_dir[j] / n if n > 0 else (0.0, 0.0, 1.0)
    for i in range(src.shape[0]):
        out[i, 0] = src[i, 0]
        for j in range(1, N_SOURCE_JOINTS):
            p = skel.parents[j]
            bone = src[i, j] - src[i, p]
            n = np.linalg.norm(bone)
            if n > DEGENERATE_BONE:
                d = bone / n
                prev_dir[j] = d
            else:
                d = prev_dir[j]
            out[i, j] = out[i, p] + lengths[j] * d
    return SourceMotion(motion.fps, out, motion.description, motion.joint_names)


def frame_targets(motion: SourceMotion, skel: SourceSkeletonModel, i: int,
                  weights: dict[str, float]) -> list[FrameTarget]:
    """Pelvis-relative key-joint targets for frame ``i``."""
    src_of = skel.pair_frames()
    pelvis = motion.frames[i, 0]
    targets = []
    for name, w in weights.items():
        if name not in src_of:
            raise ConfigError(f"key joint {name!r} has no source pair")
        targets.append(FrameTarget(name, motion.frames[i, src_of[name]] - pelvis, w))
    return targets


def retarget_motion(motion: SourceMotion, model: KinematicModel, skel: SourceSkeletonModel,
                    q0=None, config: IKConfig | None = None) -> JointTrajectory:
    """Drive the humanoid's key joints along the (normalized) source motion.

    Frames are solved in order, each warm-started from the previous
    solution with ``config.iterations`` steps of ``(1/fps) / iterations``
    seconds, so joint speeds never exceed their limits between frames. The
    first frame additionally gets ``settle_steps`` steps of ``1/fps``.
    """
    config = config or IKConfig()
    q = model.zero() if q0 is None else np.asarray(q0, dtype=float).copy()
    if q.shape != (model.n_joints,):
        raise ConfigError("q0 does not match the model")
    if not model.within_limits(q):
        raise ConfigError("q0 is outside the joint limits")
    frame_dt = 1.0 / motion.fps
    dt = frame_dt / config.iterations
    rows = np.empty((motion.n_frames, model.n_joints))
    for i in range(motion.n_frames):
        targets = frame_targets(motion, skel, i, config.weights)
        q_ref = q.copy()
        try:
            if i == 0:
                for _ in range(config.settle_steps):
                    q = ik_step(model, q, targets, config.damping, frame_dt, q_ref=q,
                                posture_weight=config.posture_weight)
                q_ref = q.copy()
            for _ in range(config.iterations):
                q = ik_step(model, q, targets, config.damping, dt, q_ref=q_ref,
                            posture_weight=config.posture_weight)
        except NumericError as exc:
            raise NumericError(str(exc), frame=i) from None
        rows[i] = q
    return JointTrajectory(motion.fps, model.joint_names, rows)


def tracking_report(motion: SourceMotion, model: KinematicModel, traj: JointTrajectory,
                    skel: SourceSkeletonModel, key_joints=KEY_JOINTS) -> dict:
    """Per-key-joint and overall mean/max position error in meters."""
    if motion.n_frames != traj.n_frames:
        raise ConfigError(f"motion has {motion.n_frames} frames, trajectory {traj.n_frames}")
    src_of = skel.pair_frames()
    errors = np.empty((traj.n_frames, len(key_joints)))
    for i in range(traj.n_frames):
        pos, _ = joint_kinematics(model, traj.rows[i])
        pelvis = motion.frames[i, 0]
        for k, name in enumerate(key_joints):
            target = motion.frames[i, src_of[name]] - pelvis
            errors[i, k] = np.linalg.norm(pos[model.frame_index(name)] - target)
    report = {
        name: {"mean": float(errors[:, k].mean()), "max": float(errors[:, k].max())}
        for k, name in enumerate(key_joints)
    }
    report["overall"] = {"mean": float(errors.mean()), "max": float(errors.max())}
    report["per_frame"] = errors
    return report


def tpose_motion(skel: SourceSkeletonModel, beta: ShapeParams, n_frames: int = 1,
                 fps: float = 30.0, description: str = "a person stands still in a T pose") -> SourceMotion:
    frames = np.repeat(skeleton_tpose(skel, beta)[None], n_frames, axis=0)
    return SourceMotion(fps, frames, description)
