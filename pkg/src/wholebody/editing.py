"""Wrist control primitives, head and finger trajectories, and composition
of the final whole-body trajectory."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateDirectionError, NumericError
from .kinematics import FrameTarget, KinematicModel, ik_step, joint_kinematics
from .motion import (
    JointTrajectory, check_model_order, rate_limit, validate_trajectory,
)
from .retarget import KEY_JOINTS

log = logging.getLogger(__name__)

SIDES = ("left", "right")
MAX_DISTANCE = 0.5
DEGENERATE_DISTANCE = 1e-6

# id -> (kind, direction or frame name, magnitude in meters)
PRIMITIVES = {
    "no_change": ("none", None, 0.0),
    "move_up": ("axis", (0.0, 0.0, 1.0), 0.20),
    "move_down": ("axis", (0.0, 0.0, -1.0), 0.20),
    "move_left": ("axis", (0.0, 1.0, 0.0), 0.20),
    "move_right": ("axis", (0.0, -1.0, 0.0), 0.20),
    "move_forward": ("axis", (1.0, 0.0, 0.0), 0.10),
    "move_backward": ("axis", (-1.0, 0.0, 0.0), 0.10),
    "move_toward_head": ("toward", "head", 0.15),
    "move_toward_chest": ("toward", "chest", 0.15),
    "move_toward_hip": ("toward", "hip", 0.15),
}


def primitive_table(mode: str = "fixed") -> str:
    """Human-readable primitive list, as shown to the adjustment agent."""
    lines = []
    for name, (kind, ref, mag) in PRIMITIVES.items():
        if kind == "none":
            text = "keep the original position"
        elif kind == "axis":
            word = name.split("_", 1)[1]
            text = f"move the wrist {word} by {round(mag * 100)} cm"
        else:
            text = f"move the wrist toward the {ref} by {round(mag * 100)} cm"
        if mode == "parameterized" and kind != "none":
            text += " (default; set \"distance\" in meters, at most 0.5)"
        lines.append(f"- {name}: {text}")
    return "\n".join(lines)


@dataclass(frozen=True)
class EditCommand:
    side: str
    primitive: str
    distance: float | None = None
    frame_range: tuple[int, int] | None = None   # [start, end); None = whole clip

    def __post_init__(self):
        if self.side not in SIDES:
            raise ConfigError(f"side must be 'left' or 'right', got {self.side!r}")
        if self.primitive not in PRIMITIVES:
            raise ConfigError(f"unknown primitive {self.primitive!r}")
        if self.distance is not None and not (0.0 < self.distance <= MAX_DISTANCE):
            raise ConfigError(f"distance must be in (0, {MAX_DISTANCE}], got {self.distance}")
        if self.frame_range is not None:
            start, end = self.frame_range
            if not (0 <= start < end):
                raise ConfigError(f"bad frame range {self.frame_range}")
            object.__setattr__(self, "frame_range", (int(start), int(end)))

    def span(self, n_frames: int) -> tuple[int, int]:
        if self.frame_range is None:
            return 0, n_frames
        start, end = self.frame_range
        if end > n_frames:
            raise ConfigError(f"frame range {self.frame_range} exceeds {n_frames} frames")
        return start, end

    def to_dict(self) -> dict:
        out = {"side": self.side, "primitive": self.primitive}
        if self.distance is not None:
            out["distance"] = self.distance
        if self.frame_range is not None:
            out["frame_range"] = list(self.frame_range)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EditCommand":
        fr = data.get("frame_range")
        return cls(data["side"], data["primitive"], data.get("distance"),
                   tuple(fr) if fr is not None else None)


@dataclass(frozen=True)
class HeadKeyframe:
    frame: int
    neck: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {"frame": self.frame, "neck": list(self.neck)}


@dataclass(frozen=True)
class FingerSegment:
    interval: int
    config: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"interval": self.interval, "config": list(self.config)}


def _displacement_from_positions(cmd: EditCommand, wrist: np.ndarray, frames_pos) -> np.ndarray:
    kind, ref, mag = PRIMITIVES[cmd.primitive]
    if kind == "none":
        return np.zeros(3)
    if cmd.distance is not None:
        mag = cmd.distance
    if kind == "axis":
        return mag * np.asarray(ref)
    d = frames_pos(ref) - wrist
    n = np.linalg.norm(d)
    if n < DEGENERATE_DISTANCE:
        raise DegenerateDirectionError(f"{cmd.side} wrist coincides with the {ref}")
    return mag * (d / n)


def primitive_displacement(model: KinematicModel, q, cmd: EditCommand) -> np.ndarray:
    """World-frame wrist displacement (meters) for one primitive at ``q``."""
    pos, _ = joint_kinematics(model, q)
    wrist = pos[model.frame_index(f"{cmd.side}_wrist")]
    return _displacement_from_positions(cmd, wrist, lambda f: pos[model.frame_index(f)])


@dataclass
class EditConfig:
    iterations: int = 20
    ramp_seconds: float = 0.2
    wrist_weight: float = 10.0
    pin_weight: float = 0.3
    damping: float | None = None
    posture_weight: float = 1e-3


def _ramp_weights(start: int, end: int, n_frames: int, n_ramp: int) -> np.ndarray:
    w = np.zeros(n_frames)
    w[start:end] = 1.0
    for k in range(1, n_ramp + 1):
        a = 1.0 - k / (n_ramp + 1)
        if start - k >= 0:
            w[start - k] = max(w[start - k], a)
        if end - 1 + k < n_frames:
            w[end - 1 + k] = max(w[end - 1 + k], a)
    return w


def apply_edits(model: KinematicModel, traj: JointTrajectory, cmds: Sequence[EditCommand],
                config: EditConfig | None = None) -> JointTrajectory:
    """Apply wrist primitives to a body trajectory.

    Displacements of commands acting on the same wrist and frame are
    summed. Each command fades in and out over ``ramp_seconds`` outside its
    frame range. Edited frames are re-solved with the edited wrist pulled
    to its displaced position while the other key joints are softly pinned
    at their original positions; unedited frames are returned untouched.
    """
    check_model_order(traj, model)
    if not cmds:
        return traj.copy()
    config = config or EditConfig()
    T = traj.n_frames
    n_ramp = int(round(config.ramp_seconds * traj.fps))
    spans = [c.span(T) for c in cmds]
    weights = [_ramp_weights(s, e, T, n_ramp) for s, e in spans]

    for side in SIDES:
        mine = [i for i, c in enumerate(cmds) if c.side == side and c.primitive != "no_change"]
        for a in range(len(mine)):
            for b in range(a + 1, len(mine)):
                (s1, e1), (s2, e2) = spans[mine[a]], spans[mine[b]]
                if s1 < e2 and s2 < e1:
                    log.info("%s wrist: commands %d and %d overlap on frames [%d, %d); "
                             "displacements are summed", side, mine[a], mine[b],
                             max(s1, s2), min(e1, e2))

    src = traj.rows
    out = src.copy()
    dt = 1.0 / traj.fps
    prev_edited = False
    for i in range(T):
        active = [(c, w[i]) for c, w in zip(cmds, weights) if w[i] > 0.0]
        if not active:
            prev_edited = False
            continue
        pos, _ = joint_kinematics(model, src[i])
        at = lambda f: pos[model.frame_index(f)]
        disp = {side: np.zeros(3) for side in SIDES}
        for c, w in active:
            try:
                disp[c.side] += w * _displacement_from_positions(c, at(f"{c.side}_wrist"), at)
            except DegenerateDirectionError as exc:
                raise DegenerateDirectionError(f"frame {i}: {exc}") from None
        edited = {s for s in SIDES if np.any(disp[s] != 0.0)}
        if not edited:
            prev_edited = False
            continue
        targets = []
        for name in KEY_JOINTS:
            side = name.split("_", 1)[0]
            if name.endswith("wrist") and side in edited:
                targets.append(FrameTarget(name, at(name) + disp[side], config.wrist_weight))
            else:
                targets.append(FrameTarget(name, at(name).copy(), config.pin_weight))
        q = model.clamp(out[i - 1] + (src[i] - src[i - 1])) if prev_edited else src[i].copy()
        q_ref = q.copy()
        try:
            for _ in range(config.iterations):
                q = ik_step(model, q, targets, config.damping, dt, q_ref=q_ref,
                            posture_weight=config.posture_weight)
        except NumericError as exc:
            raise NumericError(str(exc), frame=i) from None
        out[i] = q
        prev_edited = True

    out = rate_limit(out, model.velocity_limits / traj.fps)
    return JointTrajectory(traj.fps, traj.joint_names, out)


def interpolate_head(keyframes: Sequence[HeadKeyframe], n_frames: int, fps: float,
                     model: KinematicModel | None = None) -> np.ndarray:
    """Piecewise-linear neck trajectory (T x 3) through the keyframes.

    Values are held constant before the first and after the last keyframe;
    no keyframes gives the zero pose.
    """
    if fps <= 0:
        raise ConfigError("fps must be positive")
    out = np.zeros((n_frames, 3))
    if not keyframes:
        return out
    idx = np.array([k.frame for k in keyframes])
    vals = np.array([k.neck for k in keyframes], dtype=float)
    if vals.shape != (len(keyframes), 3):
        raise ConfigError("each head keyframe needs 3 neck angles")
    if np.any(np.diff(idx) <= 0):
        raise ConfigError("head keyframe indices must be strictly increasing")
    if idx[0] < 0 or idx[-1] >= n_frames:
        raise ConfigError(f"head keyframe index out of range [0, {n_frames})")
    if model is not None:
        neck = list(model.groups["neck"])
        lo, hi = model.lower[neck], model.upper[neck]
        if np.any(vals < lo) or np.any(vals > hi):
            raise ConfigError("head keyframe outside the neck joint limits")
    frames = np.arange(n_frames)
    for j in range(3):
        out[:, j] = np.interp(frames, idx, vals[:, j])
    out[idx] = vals  # exact at keyframes regardless of interp rounding
    return out


def finger_intervals(n_frames: int, k: int) -> list[tuple[int, int]]:
    """[start, end) spans of ceil(T/k) frames, the last one truncated."""
    length = math.ceil(n_frames / k)
    return [(min(i * length, n_frames), min((i + 1) * length, n_frames)) for i in range(k)]


def assemble_fingers(segments: Sequence[FingerSegment], n_frames: int, k: int, fps: float,
                     fade_seconds: float = 0.1, model: KinematicModel | None = None) -> np.ndarray:
    """Hold one 12-joint configuration per interval, cross-fading at the boundaries."""
    if k < 1:
        raise ConfigError("k must be at least 1")
    by_interval = {}
    for seg in segments:
        if not 0 <= seg.interval < k:
            raise ConfigError(f"finger interval {seg.interval} out of range [0, {k})")
        if seg.interval in by_interval:
            raise ConfigError(f"duplicate finger interval {seg.interval}")
        if len(seg.config) != 12:
            raise ConfigError(f"finger configuration needs 12 values, got {len(seg.config)}")
        by_interval[seg.interval] = np.asarray(seg.config, dtype=float)
    missing = sorted(set(range(k)) - set(by_interval))
    if missing:
        raise ConfigError(f"missing finger intervals {missing}")
    if model is not None:
        fingers = list(model.groups["fingers"])
        lo, hi = model.lower[fingers], model.upper[fingers]
        for i, cfg in by_interval.items():
            if np.any(cfg < lo) or np.any(cfg > hi):
                raise ConfigError(f"finger interval {i} outside the finger joint limits")

    spans = finger_intervals(n_frames, k)
    out = np.zeros((n_frames, 12))
    for i, (s, e) in enumerate(spans):
        out[s:e] = by_interval[i]
    half = int(round(fade_seconds * fps)) // 2
    if half > 0:
        for i in range(1, k):
            b = spans[i][0]
            if b >= n_frames or b == 0:
                continue
            a_cfg, b_cfg = by_interval[i - 1], by_interval[i]
            lo_f, hi_f = max(b - half, spans[i - 1][0]), min(b + half, spans[i][1])
            for f in range(lo_f, hi_f):
                alpha = (f - (b - half) + 0.5) / (2 * half)
                out[f] = a_cfg + alpha * (b_cfg - a_cfg)
    return out


def _group(model: KinematicModel, name: str) -> list[int]:
    return list(model.groups[name])


def compose_motion(body: JointTrajectory, fingers: np.ndarray, head: np.ndarray,
                   model: KinematicModel, enforce_velocity: bool = True) -> JointTrajectory:
    """Finger columns from ``fingers``, neck columns from ``head``, the rest from ``body``.

    With ``enforce_velocity`` the result is rate limited (a no-op on rows
    that already respect the limits) before it is validated.
    """
    check_model_order(body, model)
    fingers = np.asarray(fingers, dtype=float)
    head = np.asarray(head, dtype=float)
    T = body.n_frames
    if fingers.shape != (T, 12):
        raise ConfigError(f"finger trajectory must be {T} x 12, got {fingers.shape}")
    if head.shape != (T, 3):
        raise ConfigError(f"head trajectory must be {T} x 3, got {head.shape}")
    f_idx, n_idx = _group(model, "fingers"), _group(model, "neck")
    if set(f_idx) & set(n_idx):
        raise ConfigError("finger and neck groups overlap")
    rows = body.rows.copy()
    rows[:, f_idx] = fingers
    rows[:, n_idx] = head
    if enforce_velocity:
        rows = rate_limit(rows, model.velocity_limits / body.fps)
    out = JointTrajectory(body.fps, body.joint_names, rows)
    validate_trajectory(out, model)
    return out


def decompose_motion(traj: JointTrajectory, model: KinematicModel):
    """Inverse of :func:`compose_motion`: (body, fingers T x 12, head T x 3)."""
    check_model_order(traj, model)
    return (traj.copy(), traj.rows[:, _group(model, "fingers")].copy(),
            traj.rows[:, _group(model, "neck")].copy())


def column_sources(model: KinematicModel) -> list[str]:
    """Which part ('body', 'fingers', 'head') supplies each column of Q*."""
    f_idx, n_idx = set(_group(model, "fingers")), set(_group(model, "neck"))
    return ["fingers" if i in f_idx else "head" if i in n_idx else "body"
            for i in range(model.n_joints)]
