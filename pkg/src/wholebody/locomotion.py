"""Walking commands from the source pelvis track, and the upper/lower body split."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericError
from .kinematics import KinematicModel
from .motion import JointTrajectory, SourceMotion, check_model_order

PELVIS, L_SHOULDER, R_SHOULDER = 0, 16, 17


@dataclass(frozen=True)
class LocomotionCommand:
    timestamp: float
    forward: float    # m/s, body frame
    lateral: float    # m/s, body frame, + to the left
    yaw_rate: float   # rad/s, + counter-clockwise seen from above

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LocomotionConfig:
    window: float = 0.2             # moving-average width, seconds
    max_speed: float = 1.0          # cap on |forward| and |lateral|
    max_yaw_rate: float = 1.0
    deadband: float = 0.03          # m/s
    yaw_deadband: float = 0.03      # rad/s
    yaw: bool = True

    def __post_init__(self):
        if self.window < 0 or self.max_speed <= 0 or self.max_yaw_rate <= 0:
            raise ConfigError("locomotion window must be >= 0 and caps positive")
        if self.deadband < 0 or self.yaw_deadband < 0:
            raise ConfigError("dead-bands must be non-negative")


def ground_track(motion: SourceMotion) -> tuple[np.ndarray, np.ndarray]:
    """Pelvis projected onto the ground (T x 2) and unwrapped heading (T,).

    Heading is the normal of the shoulder line: the left-minus-right
    shoulder vector rotated by -90 degrees in the ground plane.
    """
    f = motion.frames
    if not np.all(np.isfinite(f)):
        bad = int(np.argmax(~np.all(np.isfinite(f), axis=(1, 2))))
        raise NumericError("non-finite joint position", frame=bad)
    xy = f[:, PELVIS, :2].copy()
    d = f[:, L_SHOULDER, :2] - f[:, R_SHOULDER, :2]
    heading = np.unwrap(np.arctan2(-d[:, 0], d[:, 1]))
    return xy, heading


def moving_average(x: np.ndarray, n: int) -> np.ndarray:
    """Centred moving average over ``n`` samples; the window shrinks at the ends."""
    if n <= 1:
        return x.copy()
    half = n // 2
    out = np.empty_like(x)
    T = len(x)
    c = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x, axis=0)])
    for i in range(T):
        lo, hi = max(0, i - half), min(T, i + half + 1)
        out[i] = (c[hi] - c[lo]) / (hi - lo)
    return out


def _deadband(x: np.ndarray, thr: float) -> np.ndarray:
    return np.where(np.abs(x) < thr, 0.0, x)


def extract_locomotion(motion: SourceMotion, config: LocomotionConfig | None = None
                       ) -> list[LocomotionCommand]:
    config = config or LocomotionConfig()
    T = motion.n_frames
    if T < 2:
        raise ConfigError("locomotion extraction needs at least two frames")
    dt = 1.0 / motion.fps
    xy, heading = ground_track(motion)
    vel = np.gradient(xy, dt, axis=0)
    yaw_rate = np.gradient(heading, dt)
    c, s = np.cos(heading), np.sin(heading)
    body = np.stack([c * vel[:, 0] + s * vel[:, 1], -s * vel[:, 0] + c * vel[:, 1]], axis=1)

    n = max(1, int(round(config.window * motion.fps)))
    body = moving_average(body, n)
    yaw_rate = moving_average(yaw_rate, n)

    body = _deadband(np.clip(body, -config.max_speed, config.max_speed), config.deadband)
    if config.yaw:
        yaw_rate = _deadband(np.clip(yaw_rate, -config.max_yaw_rate, config.max_yaw_rate),
                             config.yaw_deadband)
    else:
        yaw_rate = np.zeros(T)
    return [LocomotionCommand(i * dt, float(body[i, 0]) + 0.0, float(body[i, 1]) + 0.0,
                              float(yaw_rate[i]) + 0.0) for i in range(T)]


def integrate_commands(cmds: Sequence[LocomotionCommand], heading0: float = 0.0,
                       dt: float | None = None) -> tuple[np.ndarray, float]:
    """Net ground displacement (2,) and heading change from a command stream.

    Each interval uses the mean of its two end commands.
    """
    if len(cmds) < 2:
        return np.zeros(2), 0.0
    t = np.array([c.timestamp for c in cmds])
    v = np.array([[c.forward, c.lateral] for c in cmds])
    w = np.array([c.yaw_rate for c in cmds])
    steps = np.diff(t) if dt is None else np.full(len(cmds) - 1, dt)
    pos = np.zeros(2)
    h = heading0
    for i, h_dt in enumerate(steps):
        wm = 0.5 * (w[i] + w[i + 1])
        vm = 0.5 * (v[i] + v[i + 1])
        mid = h + 0.5 * wm * h_dt
        pos += h_dt * np.array([math.cos(mid) * vm[0] - math.sin(mid) * vm[1],
                                math.sin(mid) * vm[0] + math.cos(mid) * vm[1]])
        h += wm * h_dt
    return pos, h - heading0


def save_commands(cmds: Sequence[LocomotionCommand], path: str | Path) -> None:
    Path(path).write_text("".join(json.dumps(c.to_dict()) + "\n" for c in cmds))


def load_commands(path: str | Path) -> list[LocomotionCommand]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(LocomotionCommand(**json.loads(line)))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"{path}:{n}: bad locomotion command ({exc})") from None
    return out


def split_upper_lower(traj: JointTrajectory, model: KinematicModel
                      ) -> tuple[JointTrajectory, JointTrajectory]:
    """Partition columns by the model's ``lower_body`` group."""
    check_model_order(traj, model)
    lower = sorted(model.groups["lower_body"])
    lower_set = set(lower)
    upper = [i for i in range(model.n_joints) if i not in lower_set]
    return traj.columns(upper), traj.columns(lower)


def recombine(upper: JointTrajectory, lower: JointTrajectory, model: KinematicModel) -> JointTrajectory:
    if upper.n_frames != lower.n_frames or upper.fps != lower.fps:
        raise ConfigError("upper and lower streams differ in length or rate")
    names = list(model.joint_names)
    rows = np.empty((upper.n_frames, len(names)))
    seen = set()
    for part in (upper, lower):
        for k, name in enumerate(part.joint_names):
            if name in seen:
                raise ConfigError(f"joint {name} appears in both streams")
            seen.add(name)
            rows[:, names.index(name)] = part.rows[:, k]
    if len(seen) != len(names):
        raise ConfigError("upper and lower streams do not cover every joint")
    return JointTrajectory(upper.fps, tuple(names), rows)
