"""Synthetic source motions built by posing the parametric skeleton.

These stand in for text-to-motion output: the bundled sample clip and the
straight-walk / in-place-turn trajectories used by the tests come from here.
"""

from __future__ import annotations

import numpy as np

from .kinematics import axis_angle_matrix
from .motion import SourceMotion
from .shapefit import N_SOURCE_JOINTS, ShapeParams, SourceSkeletonModel

X, Y, Z = np.eye(3)

SAMPLE_DESCRIPTION = "a person waves the right hand with fingers spread while nodding"


def pose_skeleton(skel: SourceSkeletonModel, beta: ShapeParams, local_rot: np.ndarray,
                  root: np.ndarray) -> np.ndarray:
    """Joint positions for per-joint local rotations (24 x 3 x 3) and a root position."""
    off = skel.offsets(beta)
    pos = np.zeros((N_SOURCE_JOINTS, 3))
    glob = np.zeros((N_SOURCE_JOINTS, 3, 3))
    pos[0] = root
    glob[0] = local_rot[0]
    for j in range(1, N_SOURCE_JOINTS):
        p = skel.parents[j]
        pos[j] = pos[p] + glob[p] @ off[j]
        glob[j] = glob[p] @ local_rot[j]
    return pos


def _identity_rots():
    return np.repeat(np.eye(3)[None], N_SOURCE_JOINTS, axis=0)


def sample_motion(skel: SourceSkeletonModel, beta: ShapeParams | None = None,
                  seconds: float = 3.0, fps: float = 30.0) -> SourceMotion:
    """Standing right-hand wave with a slight knee bob and slow forward drift."""
    beta = beta or ShapeParams.zeros()
    n = int(round(seconds * fps))
    frames = np.empty((n, N_SOURCE_JOINTS, 3))
    for i in range(n):
        t = i / fps
        R = _identity_rots()
        wave = np.sin(2 * np.pi * 1.2 * t)
        bob = 0.5 * (1 - np.cos(2 * np.pi * 0.5 * t))
        ramp = min(1.0, t / 0.8)
        R[3] = axis_angle_matrix(X, 0.05 * np.sin(2 * np.pi * 0.5 * t))
        R[17] = axis_angle_matrix(X, -1.1 * ramp)
        R[19] = axis_angle_matrix(Z, ramp * (0.9 + 0.4 * wave))
        R[16] = axis_angle_matrix(X, -1.0 * ramp)
        R[18] = axis_angle_matrix(Z, -0.4 * ramp)
        for hip, knee in ((1, 4), (2, 5)):
            R[hip] = axis_angle_matrix(Y, -0.15 * bob)
            R[knee] = axis_angle_matrix(Y, 0.3 * bob)
            R[knee + 3] = axis_angle_matrix(Y, -0.15 * bob)
        root = np.array([0.1 * t, 0.0, 0.0])
        frames[i] = pose_skeleton(skel, beta, R, root)
    return SourceMotion(fps, frames, SAMPLE_DESCRIPTION)


def straight_walk(skel: SourceSkeletonModel, speed: float = 0.5, seconds: float = 3.0,
                  fps: float = 30.0, heading: float = 0.0, lateral: float = 0.0) -> SourceMotion:
    """Pelvis translating at constant body-frame velocity with swinging legs."""
    beta = ShapeParams.zeros()
    n = int(round(seconds * fps))
    Rh = axis_angle_matrix(Z, heading)
    frames = np.empty((n, N_SOURCE_JOINTS, 3))
    for i in range(n):
        t = i / fps
        R = _identity_rots()
        R[0] = Rh
        swing = 0.4 * np.sin(2 * np.pi * 1.0 * t)
        R[1] = axis_angle_matrix(Y, swing)
        R[2] = axis_angle_matrix(Y, -swing)
        root = Rh @ np.array([speed * t, lateral * t, 0.0])
        frames[i] = pose_skeleton(skel, beta, R, root)
    return SourceMotion(fps, frames, "a person walks forward")


def in_place_turn(skel: SourceSkeletonModel, yaw_rate: float = 0.3, seconds: float = 3.0,
                  fps: float = 30.0) -> SourceMotion:
    beta = ShapeParams.zeros()
    n = int(round(seconds * fps))
    frames = np.empty((n, N_SOURCE_JOINTS, 3))
    for i in range(n):
        R = _identity_rots()
        R[0] = axis_angle_matrix(Z, yaw_rate * i / fps)
        frames[i] = pose_skeleton(skel, beta, R, np.zeros(3))
    return SourceMotion(fps, frames, "a person turns in place")


def _fenced(obj) -> str:
    import json
    return "```json\n" + json.dumps(obj, indent=2) + "\n```"


SPREAD = [0.1, 0.0, 0.0, 0.0, 0.0, 0.0]
WAVE_OPEN = [0.2, 0.2, 0.1, 0.1, 0.1, 0.1]


def sample_mock_script() -> dict:
    """Scripted agent responses for the bundled sample motion."""
    left_relaxed = [0.3, 0.3, 0.6, 0.6, 0.6, 0.6]
    right_hand = [SPREAD, WAVE_OPEN, SPREAD, SPREAD]
    segments = [
        {"interval": k, "config": left_relaxed + [-right_hand[k][0]] + right_hand[k][1:]}
        for k in range(4)
    ]
    head = [
        {"frame": 0, "neck": [0.0, 0.0, 0.0]},
        {"frame": 15, "neck": [0.0, 0.3, 0.0]},
        {"frame": 30, "neck": [0.0, -0.1, 0.0]},
        {"frame": 45, "neck": [0.0, 0.3, 0.0]},
        {"frame": 60, "neck": [0.0, -0.1, 0.0]},
        {"frame": 75, "neck": [0.0, 0.0, 0.0]},
    ]
    return {
        "responses": {
            "split": [_fenced({
                "body": "a person waves the right hand",
                "finger": "fingers spread open while waving",
                "head": "the head nods twice",
            })],
            "finger": [_fenced({"segments": segments})],
            "head": [_fenced({"keyframes": head})],
            "classify": [_fenced({"editable": True, "reason": "the waving arm can be raised"})],
            "judge": [
                _fenced({
                    "caption": "The robot lifts its right arm to shoulder height and moves it.",
                    "aligned": False,
                    "suggestions": ["Raise the right hand higher so the wave is clearly visible."],
                }),
                _fenced({
                    "caption": "The robot waves its right hand above the shoulder.",
                    "aligned": True,
                    "suggestions": [],
                }),
            ],
            "adjust": [_fenced({
                "commands": [{"side": "right", "primitive": "move_up"}],
            })],
        }
    }
