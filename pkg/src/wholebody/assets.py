"""Bundled default assets and the builders that generate them.

``python -m wholebody.assets`` regenerates the JSON files in ``data/``.
The humanoid is laid out so that its T pose coincides, on the 17 paired
frames, with the source skeleton at a reference shape ``HUMANOID_BETA``.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .kinematics import KinematicModel, load_model
from .shapefit import (
    N_SHAPE, SMPL_JOINT_NAMES, SMPL_PARENTS, ShapeParams, SourceSkeletonModel,
    load_skeleton, skeleton_tpose,
)

DATA_DIR = Path(str(resources.files("wholebody") / "data"))

# source index -> humanoid frame
DEFAULT_PAIRS = (
    (0, "pelvis"), (3, "waist"), (9, "chest"), (12, "neck"), (15, "head"),
    (1, "left_hip"), (2, "right_hip"), (4, "left_knee"), (5, "right_knee"),
    (7, "left_ankle"), (8, "right_ankle"), (16, "left_shoulder"),
    (17, "right_shoulder"), (18, "left_elbow"), (19, "right_elbow"),
    (20, "left_wrist"), (21, "right_wrist"),
)

HUMANOID_BETA = np.array([0.8, 1.2, -0.6, 0.9, 1.5, -0.4, 0.7, 0.3, -0.5, 0.6])


def _mirror(v):
    return (v[0], -v[1], v[2])


def default_skeleton() -> SourceSkeletonModel:
    """Average adult proportions with ten linear shape directions."""
    left = {
        1: (0.0, 0.07, -0.09), 4: (0.0, 0.02, -0.38), 7: (0.0, 0.0, -0.40),
        10: (0.12, 0.0, -0.05), 13: (0.0, 0.07, 0.12), 16: (0.0, 0.11, 0.02),
        18: (0.0, 0.26, 0.0), 20: (0.0, 0.25, 0.0), 22: (0.0, 0.08, 0.0),
    }
    base = np.zeros((24, 3))
    for j, off in left.items():
        base[j] = off
        base[j + 1] = _mirror(off)
    base[3] = (0.0, 0.0, 0.11)
    base[6] = (0.0, 0.0, 0.13)
    base[9] = (0.0, 0.0, 0.06)
    base[12] = (0.0, 0.0, 0.20)
    base[15] = (0.0, 0.0, 0.18)

    basis = np.zeros((24, 3, N_SHAPE))
    basis[:, :, 0] = 0.05 * base                   # overall size
    for side, sign in ((0, 1.0), (1, -1.0)):
        basis[4 + side, 2, 1] = -0.02             # leg length
        basis[7 + side, 2, 1] = -0.02
        basis[18 + side, 1, 2] = 0.015 * sign      # arm length
        basis[20 + side, 1, 2] = 0.015 * sign
        basis[13 + side, 1, 3] = 0.01 * sign       # shoulder width
        basis[16 + side, 1, 3] = 0.01 * sign
        basis[1 + side, 1, 4] = 0.01 * sign        # hip width
        basis[18 + side, 1, 7] = 0.015 * sign      # upper/lower arm ratio
        basis[20 + side, 1, 7] = -0.015 * sign
        basis[4 + side, 2, 8] = -0.015             # thigh/shin ratio
        basis[7 + side, 2, 8] = 0.015
        basis[1 + side, 2, 9] = -0.01              # hip drop vs collar height
        basis[13 + side, 2, 9] = 0.01
    basis[[3, 6, 9], 2, 5] = 0.01                  # torso length
    basis[12, 2, 6] = 0.01                         # neck and head
    basis[15, 2, 6] = 0.015
    return SourceSkeletonModel(base, _principal_basis(base, basis), SMPL_PARENTS,
                               DEFAULT_PAIRS, SMPL_JOINT_NAMES)


def _principal_basis(base: np.ndarray, semantic: np.ndarray) -> np.ndarray:
    """Rotate the semantic directions into orthogonal components.

    Like a PCA shape space, each component moves the paired joints along a
    direction orthogonal to the others, with magnitudes decaying from 6 cm
    per unit.
    """
    skel = SourceSkeletonModel(base, semantic, SMPL_PARENTS, DEFAULT_PAIRS)
    A = skel.accumulation()[[s for s, _ in DEFAULT_PAIRS]]
    effect = np.einsum("jk,kcb->jcb", A, semantic).reshape(-1, N_SHAPE)
    _, sv, vt = np.linalg.svd(effect, full_matrices=False)
    V = vt.T
    V *= np.sign(V[np.abs(V).argmax(axis=0), np.arange(N_SHAPE)])
    scales = 0.06 * 0.85 ** np.arange(N_SHAPE)
    return semantic @ (V * (scales / sv))


def _joint(name, parent, origin, axis, lo, hi, vel):
    return {
        "name": name, "parent": parent,
        "origin_translation": [float(v) for v in origin],
        "origin_rotation": [1.0, 0.0, 0.0, 0.0],
        "axis": [float(v) for v in axis],
        "limit_lo": float(lo), "limit_hi": float(hi), "velocity_limit": float(vel),
    }


def default_humanoid_dict(skel: SourceSkeletonModel | None = None) -> dict:
    skel = skel or default_skeleton()
    P = skeleton_tpose(skel, ShapeParams(HUMANOID_BETA))
    joints: list[dict] = []
    frames: dict[str, int] = {}
    groups = {"fingers": [], "neck": [], "lower_body": []}

    def add(name, parent, origin, axis=(0.0, 0.0, 1.0), lo=0.0, hi=0.0, vel=0.0, group=None):
        joints.append(_joint(name, parent, origin, axis, lo, hi, vel))
        idx = len(joints) - 1
        if group:
            groups[group].append(idx)
        return idx

    pelvis = add("pelvis", None, P[0])
    frames["pelvis"] = frames["hip"] = pelvis

    for side, s, hip_i, knee_i, ankle_i, foot_i in (
        ("left", 1.0, 1, 4, 7, 10), ("right", -1.0, 2, 5, 8, 11),
    ):
        g = "lower_body"
        hp = add(f"{side}_hip_pitch", pelvis, P[hip_i] - P[0], (0, 1, 0), -2.2, 0.6, 8.0, g)
        hr = add(f"{side}_hip_roll", hp, (0, 0, 0), (1, 0, 0),
                 *((-0.4, 0.8) if s > 0 else (-0.8, 0.4)), 8.0, g)
        hy = add(f"{side}_hip_yaw", hr, (0, 0, 0), (0, 0, 1), -0.7, 0.7, 8.0, g)
        kn = add(f"{side}_knee", hy, P[knee_i] - P[hip_i], (0, 1, 0), 0.0, 2.5, 10.0, g)
        ap = add(f"{side}_ankle_pitch", kn, P[ankle_i] - P[knee_i], (0, 1, 0), -0.8, 0.6, 8.0, g)
        ar = add(f"{side}_ankle_roll", ap, (0, 0, 0), (1, 0, 0), -0.4, 0.4, 8.0, g)
        add(f"{side}_foot", ar, skel.base_offsets[foot_i], group=g)
        frames[f"{side}_hip"] = hp
        frames[f"{side}_knee"] = kn
        frames[f"{side}_ankle"] = ap

    wy = add("waist_yaw", pelvis, P[3] - P[0], (0, 0, 1), -1.0, 1.0, 6.0)
    wr = add("waist_roll", wy, (0, 0, 0), (1, 0, 0), -0.5, 0.5, 6.0)
    wp = add("waist_pitch", wr, (0, 0, 0), (0, 1, 0), -0.5, 1.0, 6.0)
    chest = add("chest", wp, P[9] - P[3])
    ny = add("neck_yaw", chest, P[12] - P[9], (0, 0, 1), -1.2, 1.2, 6.0, "neck")
    npi = add("neck_pitch", ny, (0, 0, 0), (0, 1, 0), -0.6, 0.6, 6.0, "neck")
    nr = add("neck_roll", npi, (0, 0, 0), (1, 0, 0), -0.5, 0.5, 6.0, "neck")
    head = add("head", nr, P[15] - P[12])
    frames.update(waist=wy, chest=chest, neck=ny, head=head)

    for side, s, sh_i, el_i, wr_i in (("left", 1.0, 16, 18, 20), ("right", -1.0, 17, 19, 21)):
        sr = add(f"{side}_shoulder_roll", chest, P[sh_i] - P[9], (1, 0, 0), -2.6, 2.6, 8.0)
        sy = add(f"{side}_shoulder_yaw", sr, (0, 0, 0), (0, 0, 1), -2.0, 2.0, 8.0)
        st = add(f"{side}_shoulder_pitch", sy, (0, 0, 0), (0, 1, 0), -2.6, 2.6, 8.0)
        elbow_lim = (-2.6, 0.1) if s > 0 else (-0.1, 2.6)
        el = add(f"{side}_elbow", st, P[el_i] - P[sh_i], (0, 0, 1), *elbow_lim, 8.0)
        wro = add(f"{side}_wrist_roll", el, P[wr_i] - P[el_i], (0, 1, 0), -1.5, 1.5, 8.0)
        wpi = add(f"{side}_wrist_pitch", wro, (0, 0, 0), (0, 0, 1), -0.8, 0.8, 8.0)
        frames[f"{side}_shoulder"] = sr
        frames[f"{side}_elbow"] = el
        frames[f"{side}_wrist"] = wro
        curl = (-s, 0, 0)
        ty = add(f"{side}_thumb_yaw", wpi, (0.03, s * 0.03, 0.0), (0, 0, 1),
                 *((0.0, 1.3) if s > 0 else (-1.3, 0.0)), 20.0, "fingers")
        tp = add(f"{side}_thumb_pitch", ty, (0.03, s * 0.01, 0.0), curl, 0.0, 1.0, 20.0, "fingers")
        add(f"{side}_thumb_tip", tp, (0.03, s * 0.005, 0.0))
        for finger, dx in (("index", 0.03), ("middle", 0.01), ("ring", -0.01), ("pinky", -0.03)):
            f = add(f"{side}_{finger}", wpi, (dx, s * 0.09, 0.0), curl, 0.0, 1.7, 20.0, "fingers")
            add(f"{side}_{finger}_tip", f, (0.0, s * (0.045 if finger != "pinky" else 0.035), 0.0))
        frames[f"{side}_hand"] = wpi

    special = set(groups["fingers"]) | set(groups["neck"])
    groups["body"] = [i for i in range(len(joints)) if i not in special]
    return {"joints": joints, "frames": frames, "groups": groups}


def default_humanoid() -> KinematicModel:
    return KinematicModel.from_dict(default_humanoid_dict())


def bundled_model_path() -> Path:
    return DATA_DIR / "humanoid.json"


def bundled_skeleton_path() -> Path:
    return DATA_DIR / "skeleton.json"


def bundled_motion_path() -> Path:
    return DATA_DIR / "sample_motion.json"


def bundled_mock_script_path() -> Path:
    return DATA_DIR / "sample_mock_script.json"


def load_bundled_model() -> KinematicModel:
    return load_model(bundled_model_path())


def load_bundled_skeleton() -> SourceSkeletonModel:
    return load_skeleton(bundled_skeleton_path())


def write_assets(out: Path = DATA_DIR) -> None:
    from .motion import save_motion
    from .synth import sample_mock_script, sample_motion

    out.mkdir(parents=True, exist_ok=True)
    skel = default_skeleton()
    (out / "skeleton.json").write_text(json.dumps(skel.to_dict(), indent=1) + "\n")
    (out / "humanoid.json").write_text(json.dumps(default_humanoid_dict(skel), indent=2) + "\n")
    save_motion(sample_motion(skel), out / "sample_motion.json")
    (out / "sample_mock_script.json").write_text(json.dumps(sample_mock_script(), indent=2) + "\n")


if __name__ == "__main__":
    write_assets()
