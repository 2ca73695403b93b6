"""Source motions and joint trajectories, with their file formats."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .shapefit import N_SOURCE_JOINTS, SMPL_JOINT_NAMES

VELOCITY_TOL = 1e-9


@dataclass(eq=False)
class SourceMotion:
    """T frames of 24 source joint positions (meters, z-up) plus the text."""

    fps: float
    frames: np.ndarray
    description: str = ""
    joint_names: tuple[str, ...] = SMPL_JOINT_NAMES

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 3 or self.frames.shape[1:] != (N_SOURCE_JOINTS, 3):
            raise ConfigError(f"motion frames must be T x 24 x 3, got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ConfigError("motion needs at least one frame")
        if not np.all(np.isfinite(self.frames)):
            raise ConfigError("motion contains non-finite positions")
        if not self.fps > 0:
            raise ConfigError("fps must be positive")
        if len(self.joint_names) != N_SOURCE_JOINTS:
            raise ConfigError("motion must name 24 joints")
        self.joint_names = tuple(self.joint_names)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def to_dict(self) -> dict:
        return {
            "fps": self.fps,
            "joint_names": list(self.joint_names),
            "frames": self.frames.tolist(),
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SourceMotion":
        try:
            return cls(
                fps=float(data["fps"]),
                frames=np.asarray(data["frames"], dtype=float),
                description=str(data.get("description", "")),
                joint_names=tuple(data.get("joint_names", SMPL_JOINT_NAMES)),
            )
        except KeyError as exc:
            raise ConfigError(f"motion file missing field {exc}") from None


def load_motion(path: str | Path) -> SourceMotion:
    try:
        return SourceMotion.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def save_motion(motion: SourceMotion, path: str | Path) -> None:
    Path(path).write_text(json.dumps(motion.to_dict()) + "\n")


@dataclass(eq=False)
class JointTrajectory:
    """T rows of joint angles (radians) in a named joint order."""

    fps: float
    joint_names: tuple[str, ...]
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.joint_names = tuple(self.joint_names)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.joint_names):
            raise ConfigError(
                f"rows have shape {self.rows.shape}, expected T x {len(self.joint_names)}")
        if not self.fps > 0:
            raise ConfigError("fps must be positive")

    @property
    def n_frames(self) -> int:
        return self.rows.shape[0]

    def copy(self) -> "JointTrajectory":
        return JointTrajectory(self.fps, self.joint_names, self.rows.copy())

    def columns(self, indices: Sequence[int]) -> "JointTrajectory":
        idx = list(indices)
        return JointTrajectory(self.fps, [self.joint_names[i] for i in idx], self.rows[:, idx])

    def equals(self, other: "JointTrajectory") -> bool:
        return (self.fps == other.fps and self.joint_names == other.joint_names
                and self.rows.shape == other.rows.shape
                and bool(np.array_equal(self.rows, other.rows)))

    def to_dict(self) -> dict:
        return {"fps": self.fps, "joint_names": list(self.joint_names), "rows": self.rows.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "JointTrajectory":
        try:
            rows = np.asarray(data["rows"], dtype=float).reshape(-1, len(data["joint_names"]))
            return cls(float(data["fps"]), tuple(data["joint_names"]), rows)
        except KeyError as exc:
            raise ConfigError(f"trajectory file missing field {exc}") from None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.joint_names)
        for row in self.rows:
            writer.writerow(repr(float(v)) for v in row)
        return buf.getvalue()


def load_trajectory(path: str | Path) -> JointTrajectory:
    try:
        return JointTrajectory.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def save_trajectory(traj: JointTrajectory, path: str | Path, csv_path: str | Path | None = None) -> None:
    Path(path).write_text(json.dumps(traj.to_dict()) + "\n")
    if csv_path is not None:
        Path(csv_path).write_text(traj.to_csv())


def check_model_order(traj: JointTrajectory, model) -> None:
    if traj.joint_names != model.joint_names:
        raise ConfigError("trajectory joint order does not match the kinematic model")


def limit_violations(traj: JointTrajectory, model, tol: float = 0.0) -> np.ndarray:
    """Boolean T x c mask of rows outside the position limits."""
    return (traj.rows < model.lower - tol) | (traj.rows > model.upper + tol)


def velocity_violations(traj: JointTrajectory, model, tol: float = VELOCITY_TOL) -> np.ndarray:
    """Boolean (T-1) x c mask of steps exceeding velocity_limit / fps."""
    if traj.n_frames < 2:
        return np.zeros((0, model.n_joints), dtype=bool)
    step = model.velocity_limits / traj.fps
    return np.abs(np.diff(traj.rows, axis=0)) > step + tol


def validate_trajectory(traj: JointTrajectory, model) -> None:
    check_model_order(traj, model)
    if not np.all(np.isfinite(traj.rows)):
        raise ConfigError("trajectory contains non-finite values")
    bad = limit_violations(traj, model)
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise ConfigError(f"frame {i}: joint {model.joint_names[j]!r} outside its limits")
    bad = velocity_violations(traj, model)
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise ConfigError(
            f"frame {i + 1}: joint {model.joint_names[j]!r} exceeds its velocity limit")


def rate_limit(rows: np.ndarray, max_step: np.ndarray) -> np.ndarray:
    """Forward pass that caps per-frame changes at ``max_step``.

    Rows already within the cap are returned bit-for-bit unchanged.
    """
    out = np.array(rows, dtype=float, copy=True)
    for i in range(1, out.shape[0]):
        delta = out[i] - out[i - 1]
        over = np.abs(delta) > max_step
        if np.any(over):
            out[i, over] = out[i - 1, over] + np.sign(delta[over]) * max_step[over]
    return out


def enforce_velocity_limits(traj: JointTrajectory, model) -> JointTrajectory:
    rows = rate_limit(traj.rows, model.velocity_limits / traj.fps)
    return JointTrajectory(traj.fps, traj.joint_names, rows)
