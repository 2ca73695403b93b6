"""Rigid kinematic trees: forward kinematics, position Jacobians and a
damped-least-squares differential IK step.

World frame is z-up with the humanoid facing +x (left is +y). Every joint
is a single revolute degree of freedom. A joint whose limits coincide
(``limit_lo == limit_hi``) is treated as fixed and never moves.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, ModelError, NumericError

REQUIRED_FRAMES = (
    "left_wrist", "right_wrist", "left_elbow", "right_elbow",
    "left_shoulder", "right_shoulder", "left_knee", "right_knee",
    "left_ankle", "right_ankle", "head", "chest", "hip", "pelvis",
)
REQUIRED_GROUPS = ("body", "fingers", "neck", "lower_body")
N_FINGER_JOINTS = 12
N_NECK_JOINTS = 3


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int | None
    origin_translation: tuple[float, float, float]
    origin_rotation: tuple[float, float, float, float]  # (w, x, y, z)
    axis: tuple[float, float, float]
    limit_lo: float
    limit_hi: float
    velocity_limit: float

    @property
    def fixed(self) -> bool:
        return self.limit_hi <= self.limit_lo


@dataclass(frozen=True)
class FrameTarget:
    frame: str
    position: np.ndarray
    weight: float = 1.0


def quat_to_matrix(q: Sequence[float]) -> np.ndarray:
    """Rotation matrix of a unit quaternion given as (w, x, y, z)."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


@dataclass(frozen=True, eq=False)
class KinematicModel:
    """Immutable joint tree. Construct through :meth:`from_dict` or
    :func:`load_model` so invariants are checked."""

    joints: tuple[Joint, ...]
    frames: Mapping[str, int]
    groups: Mapping[str, tuple[int, ...]]
    _origin_R: np.ndarray = field(repr=False, default=None)
    _origin_t: np.ndarray = field(repr=False, default=None)
    _axes: np.ndarray = field(repr=False, default=None)
    lower: np.ndarray = field(repr=False, default=None)
    upper: np.ndarray = field(repr=False, default=None)
    velocity_limits: np.ndarray = field(repr=False, default=None)
    movable: np.ndarray = field(repr=False, default=None)
    _chains: Mapping[int, tuple[int, ...]] = field(repr=False, default=None)
    _chain_arrays: Mapping[int, np.ndarray] = field(repr=False, default=None)
    _levels: tuple = field(repr=False, default=None)

    def __post_init__(self):
        def frozen(a):
            a = np.asarray(a, dtype=float)
            a.setflags(write=False)
            return a

        set_ = object.__setattr__
        set_(self, "_origin_R", frozen([quat_to_matrix(j.origin_rotation) for j in self.joints]))
        set_(self, "_origin_t", frozen([j.origin_translation for j in self.joints]))
        set_(self, "_axes", frozen([j.axis for j in self.joints]))
        set_(self, "lower", frozen([j.limit_lo for j in self.joints]))
        set_(self, "upper", frozen([j.limit_hi for j in self.joints]))
        set_(self, "velocity_limits", frozen([j.velocity_limit for j in self.joints]))
        movable = np.array([not j.fixed for j in self.joints])
        movable.setflags(write=False)
        set_(self, "movable", movable)
        chains = {}
        for i in range(len(self.joints)):
            chain = []
            k = i
            while k is not None:
                chain.append(k)
                k = self.joints[k].parent
            chains[i] = tuple(reversed(chain))
        set_(self, "_chains", chains)
        set_(self, "_chain_arrays", {i: np.array(c) for i, c in chains.items()})
        depth = [len(chains[i]) - 1 for i in range(len(self.joints))]
        levels = []
        for d in range(max(depth) + 1):
            idx = np.array([i for i in range(len(self.joints)) if depth[i] == d])
            par = np.array([self.joints[i].parent if d else -1 for i in idx])
            levels.append((idx, par))
        set_(self, "_levels", tuple(levels))

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self) -> tuple[str, ...]:
        return tuple(j.name for j in self.joints)

    def chain(self, frame: str) -> tuple[int, ...]:
        """Joint indices from the root down to the joint carrying ``frame``."""
        return self._chains[self.frame_index(frame)]

    def frame_index(self, frame: str) -> int:
        try:
            return self.frames[frame]
        except KeyError:
            raise KeyError(f"unknown frame {frame!r}") from None

    def zero(self) -> np.ndarray:
        return np.zeros(self.n_joints)

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)

    def within_limits(self, q: np.ndarray, tol: float = 0.0) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def to_dict(self) -> dict:
        return {
            "joints": [
                {
                    "name": j.name,
                    "parent": j.parent,
                    "origin_translation": list(j.origin_translation),
                    "origin_rotation": list(j.origin_rotation),
                    "axis": list(j.axis),
                    "limit_lo": j.limit_lo,
                    "limit_hi": j.limit_hi,
                    "velocity_limit": j.velocity_limit,
                }
                for j in self.joints
            ],
            "frames": dict(self.frames),
            "groups": {k: list(v) for k, v in self.groups.items()},
        }

    @classmethod
    def from_dict(cls, data: dict, source: str = "<model>", text: str | None = None,
                  require_humanoid: bool = True) -> "KinematicModel":
        """Build and validate a model.

        With ``require_humanoid=False`` the named frames and groups required
        of a humanoid are not enforced, which is what small test chains need.
        """
        def fail(msg, needle=None):
            loc = source
            if text is not None and needle is not None:
                line = _line_of(text, needle)
                if line is not None:
                    loc = f"{source}:{line}"
            raise ModelError(f"{loc}: {msg}")

        if not isinstance(data, dict) or "joints" not in data:
            fail("missing 'joints' array")
        joints = []
        names = set()
        for i, jd in enumerate(data["joints"]):
            name = jd.get("name", f"#{i}")
            needle = f'"name": "{name}"'
            try:
                parent = jd.get("parent")
                t = tuple(float(v) for v in jd.get("origin_translation", (0.0, 0.0, 0.0)))
                r = tuple(float(v) for v in jd.get("origin_rotation", (1.0, 0.0, 0.0, 0.0)))
                axis = tuple(float(v) for v in jd["axis"])
                lo, hi = float(jd["limit_lo"]), float(jd["limit_hi"])
                vel = float(jd["velocity_limit"])
            except (KeyError, TypeError, ValueError) as exc:
                fail(f"joint {name!r}: malformed field ({exc})", needle)
            if name in names:
                fail(f"duplicate joint name {name!r}", needle)
            names.add(name)
            if parent is not None and not (isinstance(parent, int) and 0 <= parent < i):
                fail(f"joint {name!r}: parent {parent!r} must be an earlier joint index", needle)
            if len(t) != 3 or len(r) != 4 or len(axis) != 3:
                fail(f"joint {name!r}: wrong vector length", needle)
            values = t + r + axis + (lo, hi, vel)
            if not np.all(np.isfinite(values)):
                fail(f"joint {name!r}: non-finite value", needle)
            if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
                fail(f"joint {name!r}: axis is not unit norm", needle)
            if abs(np.linalg.norm(r) - 1.0) > 1e-9:
                fail(f"joint {name!r}: origin rotation is not a unit quaternion", needle)
            if lo > hi:
                fail(f"joint {name!r}: limit_lo > limit_hi", needle)
            if vel < 0:
                fail(f"joint {name!r}: negative velocity limit", needle)
            joints.append(Joint(name, parent, t, r, axis, lo, hi, vel))
        if not joints:
            fail("model has no joints")

        frames = dict(data.get("frames", {}))
        for fname, idx in frames.items():
            if not (isinstance(idx, int) and 0 <= idx < len(joints)):
                fail(f"frame {fname!r} refers to missing joint {idx!r}", f'"{fname}"')
        groups = {}
        for gname, members in data.get("groups", {}).items():
            members = tuple(members)
            if any(not (isinstance(m, int) and 0 <= m < len(joints)) for m in members):
                fail(f"group {gname!r} refers to a missing joint", f'"{gname}"')
            groups[gname] = members

        if require_humanoid:
            for fname in REQUIRED_FRAMES:
                if fname not in frames:
                    fail(f"required frame {fname!r} missing", '"frames"')
            for gname in REQUIRED_GROUPS:
                if gname not in groups:
                    fail(f"required group {gname!r} missing", '"groups"')
            if len(groups["fingers"]) != N_FINGER_JOINTS:
                fail(f"finger group must have {N_FINGER_JOINTS} joints, "
                     f"got {len(groups['fingers'])}", '"fingers"')
            if len(groups["neck"]) != N_NECK_JOINTS:
                fail(f"neck group must have {N_NECK_JOINTS} joints, "
                     f"got {len(groups['neck'])}", '"neck"')
        return cls(tuple(joints), frames, groups)


def _line_of(text: str, needle: str) -> int | None:
    m = re.search(re.escape(needle), text)
    if m is None:
        return None
    return text.count("\n", 0, m.start()) + 1


def load_model(path: str | Path) -> KinematicModel:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return KinematicModel.from_dict(data, source=str(path), text=text)


def save_model(model: KinematicModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def _check_q(model: KinematicModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_joints,):
        raise ConfigError(
            f"configuration has shape {q.shape}, model expects ({model.n_joints},)")
    return q


def _batch_rotations(axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues rotations for many (axis, angle) pairs at once."""
    x, y, z = axes.T
    c, s = np.cos(angles), np.sin(angles)
    C = 1.0 - c
    R = np.empty((len(angles), 3, 3))
    R[:, 0, 0] = c + x * x * C
    R[:, 0, 1] = x * y * C - z * s
    R[:, 0, 2] = x * z * C + y * s
    R[:, 1, 0] = y * x * C + z * s
    R[:, 1, 1] = c + y * y * C
    R[:, 1, 2] = y * z * C - x * s
    R[:, 2, 0] = z * x * C - y * s
    R[:, 2, 1] = z * y * C + x * s
    R[:, 2, 2] = c + z * z * C
    return R


def joint_kinematics(model: KinematicModel, q) -> tuple[np.ndarray, np.ndarray]:
    """World origins (c x 3) and world rotation axes (c x 3) of every joint."""
    q = _check_q(model, q)
    n = model.n_joints
    R0, t0, ax = model._origin_R, model._origin_t, model._axes
    local = R0 @ _batch_rotations(ax, q)
    pos = np.empty((n, 3))
    rot = np.empty((n, 3, 3))
    axes = np.empty((n, 3))
    for level, (idx, par) in enumerate(model._levels):
        if level == 0:
            pos[idx] = t0[idx]
            frame = R0[idx]
            rot[idx] = local[idx]
        else:
            Rp = rot[par]
            pos[idx] = pos[par] + np.einsum("nij,nj->ni", Rp, t0[idx])
            frame = Rp @ R0[idx]
            rot[idx] = Rp @ local[idx]
        axes[idx] = np.einsum("nij,nj->ni", frame, ax[idx])
    return pos, axes


def forward_kinematics(model: KinematicModel, q) -> dict[str, np.ndarray]:
    """World position of every named frame."""
    pos, _ = joint_kinematics(model, q)
    return {name: pos[idx].copy() for name, idx in model.frames.items()}


def jacobian(model: KinematicModel, q, frame: str, _cache=None) -> np.ndarray:
    """Position Jacobian (3 x c) of ``frame``; zero outside its chain."""
    idx = model.frame_index(frame)
    pos, axes = joint_kinematics(model, q) if _cache is None else _cache
    J = np.zeros((3, model.n_joints))
    chain = model._chain_arrays[idx]
    a = axes[chain]
    r = pos[idx] - pos[chain]
    J[0, chain] = a[:, 1] * r[:, 2] - a[:, 2] * r[:, 1]
    J[1, chain] = a[:, 2] * r[:, 0] - a[:, 0] * r[:, 2]
    J[2, chain] = a[:, 0] * r[:, 1] - a[:, 1] * r[:, 0]
    return J


def default_damping(model: KinematicModel, weights: Sequence[float]) -> float:
    total = float(np.sum(weights))
    return 1e-6 * model.n_joints * (total if total > 0 else 1.0)


def ik_step(model: KinematicModel, q, targets: Sequence[FrameTarget],
            damping: float | None = None, dt: float = 0.01, q_ref=None,
            posture_weight: float = 1e-3) -> np.ndarray:
    """One damped-least-squares velocity step toward the frame targets.

    Solves ``(J^T W J + (damping + w_p) I) qdot = (J^T W e + w_p (q_ref - q)) / dt``
    over the movable joints, where the posture term pulls toward ``q_ref``
    (defaults to ``q``). Joints sitting on a limit whose velocity points
    outward are removed from the solve. ``qdot`` is scaled down uniformly so that no joint
    exceeds its velocity limit, then the integrated configuration is clamped
    into the position limits.
    """
    q = _check_q(model, q)
    q_ref = q if q_ref is None else _check_q(model, q_ref)
    if dt <= 0:
        raise ConfigError("dt must be positive")
    weights = [float(t.weight) for t in targets]
    if any(w < 0 for w in weights):
        raise ConfigError("target weights must be nonnegative")
    if damping is None:
        damping = default_damping(model, weights)
    if damping <= 0:
        raise ConfigError("damping must be positive")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(q_ref))):
        raise NumericError("non-finite joint configuration")

    cache = joint_kinematics(model, q)
    pos = cache[0]
    mov = model.movable
    n = int(mov.sum())
    rows, errs, wts = [], [], []
    for target, w in zip(targets, weights):
        p = np.asarray(target.position, dtype=float)
        if not np.all(np.isfinite(p)):
            raise NumericError(f"non-finite target for {target.frame!r}")
        if w == 0.0:
            continue
        rows.append(jacobian(model, q, target.frame, _cache=cache)[:, mov])
        errs.append(p - pos[model.frame_index(target.frame)])
        wts.append(w)
    if rows:
        J = np.vstack(rows)
        W = np.repeat(wts, 3)
        JtW = J.T * W
        A = JtW @ J
        b = JtW @ np.concatenate(errs)
    else:
        A = np.zeros((n, n))
        b = np.zeros(n)
    A[np.diag_indices(n)] += damping + posture_weight
    b += posture_weight * (q_ref - q)[mov]

    # joints resting on a limit and pushed outward are dropped and the
    # system re-solved, so they do not absorb motion the others could make
    qm, lo, hi = q[mov], model.lower[mov], model.upper[mov]
    free = np.ones(n, dtype=bool)
    qdot = np.zeros(n)
    for _ in range(n + 1):
        idx = np.flatnonzero(free)
        try:
            step = np.linalg.solve(A[np.ix_(idx, idx)], b[idx])
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"IK solve failed: {exc}") from None
        qdot = np.zeros(n)
        qdot[idx] = step / dt
        blocked = free & (((qm <= lo) & (qdot < 0)) | ((qm >= hi) & (qdot > 0)))
        if not blocked.any():
            break
        free &= ~blocked
    if not np.all(np.isfinite(qdot)):
        raise NumericError("non-finite joint velocity")

    vmax = model.velocity_limits[mov]
    over = np.abs(qdot) > vmax
    if np.any(over):
        with np.errstate(divide="ignore"):
            scale = np.min(vmax[over] / np.abs(qdot[over]))
        qdot = qdot * scale

    out = q.copy()
    out[mov] = q[mov] + qdot * dt
    return model.clamp(out)


def task_error(model: KinematicModel, q, targets: Sequence[FrameTarget]) -> float:
    """Weighted squared position error sum(w * |target - FK|^2)."""
    pos, _ = joint_kinematics(model, q)
    total = 0.0
    for t in targets:
        d = np.asarray(t.position, dtype=float) - pos[model.frame_index(t.frame)]
        total += float(t.weight) * float(d @ d)
    return total
