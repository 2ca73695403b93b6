"""Parametric 24-joint source skeleton and Adam fitting of its shape vector.

Bone offsets depend linearly on a 10-dim shape vector::

    offsets(beta) = base_offsets + shape_basis @ beta      # (24, 3)

Joint positions accumulate offsets down the parent tree from a pelvis at
the origin. In the shared T pose the map beta -> positions is affine, so
the fitting loss is quadratic and its gradient is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ModelError, OptimizationError
from .kinematics import KinematicModel, forward_kinematics

N_SOURCE_JOINTS = 24
N_SHAPE = 10
N_PAIRS = 17
BETA_BOUND = 5.0

SMPL_JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_hand", "right_hand",
)
SMPL_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)


@dataclass(frozen=True)
class ShapeParams:
    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if beta.shape != (N_SHAPE,):
            raise ValueError(f"beta must have {N_SHAPE} components, got {beta.shape}")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def zeros(cls) -> "ShapeParams":
        return cls(np.zeros(N_SHAPE))


@dataclass(frozen=True, eq=False)
class SourceSkeletonModel:
    base_offsets: np.ndarray        # (24, 3) meters
    shape_basis: np.ndarray         # (24, 3, 10) meters per unit beta
    parents: tuple[int, ...]        # -1 marks the root
    pair_map: tuple[tuple[int, str], ...]
    joint_names: tuple[str, ...] = SMPL_JOINT_NAMES

    def __post_init__(self):
        base = np.asarray(self.base_offsets, dtype=float)
        basis = np.asarray(self.shape_basis, dtype=float)
        if base.shape != (N_SOURCE_JOINTS, 3):
            raise ModelError(f"base_offsets must be (24, 3), got {base.shape}")
        if basis.shape != (N_SOURCE_JOINTS, 3, N_SHAPE):
            raise ModelError(f"shape_basis must be (24, 3, 10), got {basis.shape}")
        if len(self.parents) != N_SOURCE_JOINTS or self.parents[0] != -1:
            raise ModelError("parents must have 24 entries with the root first")
        if any(not (0 <= p < i) for i, p in enumerate(self.parents) if i > 0):
            raise ModelError("parents must be in topological order")
        if len(self.pair_map) != N_PAIRS:
            raise ModelError(f"pair_map must have exactly {N_PAIRS} entries, got {len(self.pair_map)}")
        for src, _ in self.pair_map:
            if not 0 <= src < N_SOURCE_JOINTS:
                raise ModelError(f"pair_map source index {src} out of range")
        for a in (base, basis):
            a.setflags(write=False)
        object.__setattr__(self, "base_offsets", base)
        object.__setattr__(self, "shape_basis", basis)
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "pair_map", tuple((int(s), str(f)) for s, f in self.pair_map))

    def offsets(self, beta: ShapeParams) -> np.ndarray:
        return self.base_offsets + self.shape_basis @ beta.beta

    def accumulation(self) -> np.ndarray:
        """(24, 24) 0/1 matrix A with positions = A @ offsets."""
        A = np.zeros((N_SOURCE_JOINTS, N_SOURCE_JOINTS))
        for j in range(N_SOURCE_JOINTS):
            k = j
            while k > 0:
                A[j, k] = 1.0
                k = self.parents[k]
        return A

    def pair_frames(self) -> dict[str, int]:
        return {frame: src for src, frame in self.pair_map}

    def to_dict(self) -> dict:
        return {
            "joint_names": list(self.joint_names),
            "parents": list(self.parents),
            "base_offsets": self.base_offsets.tolist(),
            "shape_basis_order": "joint, axis, component (row-major 24 x 3 x 10)",
            "shape_basis": self.shape_basis.reshape(-1).tolist(),
            "pair_map": [[s, f] for s, f in self.pair_map],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SourceSkeletonModel":
        try:
            basis = np.asarray(data["shape_basis"], dtype=float)
            if basis.ndim == 1:
                if basis.size != N_SOURCE_JOINTS * 3 * N_SHAPE:
                    raise ModelError(f"flattened shape_basis must hold 720 values, got {basis.size}")
                basis = basis.reshape(N_SOURCE_JOINTS, 3, N_SHAPE)
            return cls(
                base_offsets=np.asarray(data["base_offsets"], dtype=float),
                shape_basis=basis,
                parents=tuple(data["parents"]),
                pair_map=tuple((p[0], p[1]) for p in data["pair_map"]),
                joint_names=tuple(data.get("joint_names", SMPL_JOINT_NAMES)),
            )
        except KeyError as exc:
            raise ModelError(f"skeleton file missing field {exc}") from None


def load_skeleton(path: str | Path) -> SourceSkeletonModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return SourceSkeletonModel.from_dict(data)


def save_skeleton(skel: SourceSkeletonModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(skel.to_dict(), indent=1) + "\n")


def skeleton_tpose(skel: SourceSkeletonModel, beta: ShapeParams) -> np.ndarray:
    """T-pose joint positions (24 x 3) for the given shape."""
    off = skel.offsets(beta)
    pos = np.zeros((N_SOURCE_JOINTS, 3))
    for j in range(1, N_SOURCE_JOINTS):
        pos[j] = pos[skel.parents[j]] + off[j]
    return pos


def bone_lengths(skel: SourceSkeletonModel, beta: ShapeParams) -> np.ndarray:
    return np.linalg.norm(skel.offsets(beta), axis=1)


@dataclass
class AdamConfig:
    lr: float = 0.05
    steps: int = 500
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init: Sequence[float] | None = None


def _affine_pairs(skel: SourceSkeletonModel, targets: np.ndarray):
    """Return (M, r0) with paired source positions = M @ beta + r0, flattened."""
    A = skel.accumulation()
    src = [s for s, _ in skel.pair_map]
    # positions(beta) = A @ (base + basis @ beta)
    basis_pos = np.einsum("jk,kcb->jcb", A, skel.shape_basis)[src]   # (17, 3, 10)
    base_pos = (A @ skel.base_offsets)[src]                           # (17, 3)
    M = basis_pos.reshape(-1, N_SHAPE)
    r0 = (base_pos - targets).reshape(-1)
    return M, r0


def pair_targets(skel: SourceSkeletonModel, humanoid: KinematicModel) -> np.ndarray:
    """Humanoid T-pose (zero configuration) positions of the paired frames."""
    fk = forward_kinematics(humanoid, humanoid.zero())
    try:
        return np.array([fk[frame] for _, frame in skel.pair_map])
    except KeyError as exc:
        raise ModelError(f"pair_map frame {exc} not in humanoid model") from None


def shape_loss(skel: SourceSkeletonModel, targets: np.ndarray, beta) -> float:
    M, r0 = _affine_pairs(skel, targets)
    r = M @ np.asarray(beta, dtype=float) + r0
    return float(r @ r)


def shape_gradient(skel: SourceSkeletonModel, targets: np.ndarray, beta) -> np.ndarray:
    M, r0 = _affine_pairs(skel, targets)
    return 2.0 * M.T @ (M @ np.asarray(beta, dtype=float) + r0)


def fit_shape(skel: SourceSkeletonModel, humanoid: KinematicModel | None = None,
              config: AdamConfig | None = None, *, targets: np.ndarray | None = None,
              history: list | None = None) -> tuple[ShapeParams, float]:
    """Fit beta so the 17 paired source joints match the humanoid T pose.

    Runs full-batch Adam on ``sum_pairs |p_source(beta) - p_humanoid|^2`` and
    returns the lowest-loss iterate (the initial point included) together
    with its loss in square meters. ``targets`` (17 x 3) overrides the
    humanoid T pose when given. Each component is kept in [-5, 5].
    """
    config = config or AdamConfig()
    if targets is None:
        if humanoid is None:
            raise ValueError("either humanoid or targets is required")
        targets = pair_targets(skel, humanoid)
    targets = np.asarray(targets, dtype=float)
    M, r0 = _affine_pairs(skel, targets)

    beta = np.zeros(N_SHAPE) if config.init is None else np.array(config.init, dtype=float)
    beta = np.clip(beta, -BETA_BOUND, BETA_BOUND)
    m = np.zeros(N_SHAPE)
    v = np.zeros(N_SHAPE)

    r = M @ beta + r0
    best_beta, best_loss = beta.copy(), float(r @ r)
    if history is not None:
        history.append(best_loss)
    for t in range(1, config.steps + 1):
        grad = 2.0 * M.T @ r
        m = config.beta1 * m + (1.0 - config.beta1) * grad
        v = config.beta2 * v + (1.0 - config.beta2) * grad * grad
        m_hat = m / (1.0 - config.beta1 ** t)
        v_hat = v / (1.0 - config.beta2 ** t)
        beta = beta - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
        beta = np.clip(beta, -BETA_BOUND, BETA_BOUND)
        r = M @ beta + r0
        loss = float(r @ r)
        if not np.isfinite(loss):
            raise OptimizationError("shape-fit loss is not finite", step=t)
        if history is not None:
            history.append(loss)
        if loss < best_loss:
            best_beta, best_loss = beta.copy(), loss
    return ShapeParams(best_beta), best_loss
