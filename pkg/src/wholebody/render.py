"""Stick-figure renderer for humanoid trajectories.

Frames are drawn with matplotlib's Agg canvas (no display, no GPU) and
encoded as RGB8 PNG with Pillow, so identical inputs give identical bytes.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.collections import LineCollection
from matplotlib.figure import Figure
from PIL import Image

from .errors import ConfigError
from .kinematics import KinematicModel, joint_kinematics
from .motion import JointTrajectory

NEAR = 0.05
BACKGROUND = "#f4f4f0"
GROUP_COLORS = {"body": "#2b59c3", "fingers": "#d1495b", "neck": "#2a9d3f"}
GROUND_COLOR = "#b8b8b0"
DPI = 100


@dataclass(frozen=True)
class CameraSpec:
    eye: tuple[float, float, float]
    look_at: tuple[float, float, float]
    fov: float = 0.7          # vertical, radians
    width: int = 384
    height: int = 384

    def __post_init__(self):
        eye, at = np.asarray(self.eye, float), np.asarray(self.look_at, float)
        if eye.shape != (3,) or at.shape != (3,):
            raise ConfigError("camera eye and look_at must be 3-vectors")
        if not (np.all(np.isfinite(eye)) and np.all(np.isfinite(at))):
            raise ConfigError("camera eye and look_at must be finite")
        if np.linalg.norm(at - eye) < 1e-9:
            raise ConfigError("camera eye and look_at coincide")
        if not 0.0 < self.fov < math.pi:
            raise ConfigError(f"camera fov must lie in (0, pi), got {self.fov}")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ConfigError("image dimensions must be integers")
        if self.width < 64 or self.height < 64:
            raise ConfigError(f"image must be at least 64 x 64, got {self.width} x {self.height}")

    def translated(self, v) -> "CameraSpec":
        v = np.asarray(v, float)
        return CameraSpec(tuple(np.asarray(self.eye) + v), tuple(np.asarray(self.look_at) + v),
                          self.fov, self.width, self.height)

    def basis(self):
        """Rows: right, up, forward (world coordinates)."""
        eye, at = np.asarray(self.eye, float), np.asarray(self.look_at, float)
        f = (at - eye) / np.linalg.norm(at - eye)
        up = np.array([0.0, 0.0, 1.0])
        if abs(f @ up) > 0.999:
            up = np.array([0.0, 1.0, 0.0])
        r = np.cross(f, up)
        r /= np.linalg.norm(r)
        return np.stack([r, np.cross(r, f), f])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eye"], d["look_at"] = list(self.eye), list(self.look_at)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CameraSpec":
        return cls(tuple(d["eye"]), tuple(d["look_at"]), d.get("fov", 0.7),
                   d.get("width", 384), d.get("height", 384))


# framed so a wrist raised overhead and the feet both stay in view
_LOOK = (0.0, 0.0, 0.05)
PRESETS = {
    "front": CameraSpec((3.4, 0.0, 0.25), _LOOK, 0.8),
    "three-quarter": CameraSpec((2.4, 2.4, 0.6), _LOOK, 0.8),
    "side": CameraSpec((0.0, 3.4, 0.25), _LOOK, 0.8),
}


def camera_preset(name: str, width: int | None = None, height: int | None = None) -> CameraSpec:
    try:
        cam = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown camera preset {name!r}; choose from {sorted(PRESETS)}") from None
    if width is None and height is None:
        return cam
    return CameraSpec(cam.eye, cam.look_at, cam.fov, width or cam.width, height or cam.height)


def to_camera(camera: CameraSpec, points) -> np.ndarray:
    """World points (n x 3) to camera coordinates (x right, y up, z forward)."""
    return (np.asarray(points, float) - np.asarray(camera.eye, float)) @ camera.basis().T


def _focal(camera: CameraSpec) -> float:
    return 0.5 * camera.height / math.tan(0.5 * camera.fov)


def _pixels(camera: CameraSpec, cam_pts: np.ndarray) -> np.ndarray:
    f = _focal(camera)
    u = 0.5 * camera.width + f * cam_pts[:, 0] / cam_pts[:, 2]
    v = 0.5 * camera.height - f * cam_pts[:, 1] / cam_pts[:, 2]
    return np.stack([u, v], axis=1)


def project_points(camera: CameraSpec, points) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates (n x 2, origin top-left) and a mask of points in front of the camera."""
    c = to_camera(camera, np.atleast_2d(points))
    visible = c[:, 2] > NEAR
    safe = c.copy()
    safe[~visible, 2] = np.nan
    return _pixels(camera, safe), visible


def _clip_segment(a: np.ndarray, b: np.ndarray):
    """Clip a camera-space segment to z > NEAR; None if fully behind."""
    if a[2] <= NEAR and b[2] <= NEAR:
        return None
    if a[2] > NEAR and b[2] > NEAR:
        return a, b
    t = (NEAR - a[2]) / (b[2] - a[2])
    m = a + t * (b - a)
    m[2] = NEAR + 1e-9
    return (m, b) if a[2] <= NEAR else (a, m)


def _bone_groups(model: KinematicModel) -> list[str]:
    group = ["body"] * model.n_joints
    for name in ("fingers", "neck"):
        for i in model.groups.get(name, ()):
            group[i] = name
    # fixed tips inherit the colour of their parent chain
    for i, j in enumerate(model.joints):
        if j.fixed and j.parent is not None and j.parent >= 0 and group[j.parent] != "body":
            group[i] = group[j.parent]
    return group


def _segments(model: KinematicModel, q, camera: CameraSpec, root_offset, ground_z: float):
    pos, _ = joint_kinematics(model, q)
    pos = pos + np.asarray(root_offset, float)
    cam = to_camera(camera, pos)
    groups = _bone_groups(model)
    segs = []  # (group, camera a, camera b)
    for i, j in enumerate(model.joints):
        if j.parent is None or j.parent < 0:
            continue
        a, b = cam[j.parent], cam[i]
        if np.linalg.norm(pos[i] - pos[j.parent]) < 1e-9:
            continue
        segs.append((groups[i], a, b))
    # ground square centred under the root
    r = np.asarray(root_offset, float)
    h = 0.4
    corners = r + np.array([[-h, -h, ground_z], [h, -h, ground_z], [h, h, ground_z], [-h, h, ground_z]])
    gc = to_camera(camera, corners)
    ground = [(gc[k], gc[(k + 1) % 4]) for k in range(4)]
    return segs, ground


def render_frame(model: KinematicModel, q, camera: CameraSpec, root_offset=(0.0, 0.0, 0.0),
                 ground_z: float | None = None) -> np.ndarray:
    """RGB8 image (height x width x 3) of configuration ``q``.

    Bones are drawn far to near; parts behind the camera are clipped.
    ``root_offset`` places the model root in the world.
    """
    q = np.asarray(q, float)
    if ground_z is None:
        ground_z = _ground_height(model)
    segs, ground = _segments(model, q, camera, root_offset, ground_z)

    fig = Figure(figsize=(camera.width / DPI, camera.height / DPI), dpi=DPI, facecolor=BACKGROUND)
    canvas = FigureCanvasAgg(fig)
    ax = fig.add_axes((0.0, 0.0, 1.0, 1.0))
    ax.set_xlim(0, camera.width)
    ax.set_ylim(camera.height, 0)
    ax.set_axis_off()
    ax.set_facecolor(BACKGROUND)

    def draw(pairs, colors, widths, z):
        lines, cols, ws, depth = [], [], [], []
        for (a, b), c, w in zip(pairs, colors, widths):
            clipped = _clip_segment(a, b)
            if clipped is None:
                continue
            px = _pixels(camera, np.stack(clipped))
            lines.append(px)
            cols.append(c)
            ws.append(w)
            depth.append(0.5 * (clipped[0][2] + clipped[1][2]))
        if not lines:
            return
        order = np.argsort(-np.asarray(depth), kind="stable")
        ax.add_collection(LineCollection([lines[k] for k in order], colors=[cols[k] for k in order],
                                         linewidths=[ws[k] for k in order], antialiaseds=True,
                                         capstyle="round", zorder=z))

    draw(ground, [GROUND_COLOR] * len(ground), [1.0] * len(ground), 1)
    width = {"body": 3.0, "fingers": 1.2, "neck": 3.0}
    draw([(a, b) for _, a, b in segs], [GROUP_COLORS[g] for g, _, _ in segs],
         [width[g] for g, _, _ in segs], 2)

    canvas.draw()
    rgba = np.asarray(canvas.buffer_rgba())
    return np.ascontiguousarray(rgba[:, :, :3])


def _ground_height(model: KinematicModel) -> float:
    pos, _ = joint_kinematics(model, model.zero())
    return float(pos[:, 2].min())


def encode_png(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def render_png(model: KinematicModel, q, camera: CameraSpec, root_offset=(0.0, 0.0, 0.0)) -> bytes:
    return encode_png(render_frame(model, q, camera, root_offset))


def _offsets(traj: JointTrajectory, root_offsets):
    if root_offsets is None:
        return np.zeros((traj.n_frames, 3))
    r = np.asarray(root_offsets, float)
    if r.shape != (traj.n_frames, 3):
        raise ConfigError(f"root offsets must be {traj.n_frames} x 3, got {r.shape}")
    return r


def make_render_fn(model: KinematicModel, camera: CameraSpec, root_offsets=None):
    """``fn(traj, indices) -> list of PNG bytes`` for the agent loop."""
    def fn(traj: JointTrajectory, indices: Sequence[int]) -> list[bytes]:
        offs = _offsets(traj, root_offsets)
        return [render_png(model, traj.rows[i], camera, offs[i]) for i in indices]
    return fn


def render_sequence(model: KinematicModel, traj: JointTrajectory, camera: CameraSpec,
                    out_dir: str | Path, root_offsets=None, prefix: str = "frame") -> list[Path]:
    """One PNG per frame plus ``manifest.json``; returns the image paths in order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    offs = _offsets(traj, root_offsets)
    digits = max(4, len(str(traj.n_frames - 1)))
    paths = []
    for i in range(traj.n_frames):
        p = out / f"{prefix}_{i:0{digits}d}.png"
        p.write_bytes(render_png(model, traj.rows[i], camera, offs[i]))
        paths.append(p)
    manifest = {"fps": traj.fps, "count": traj.n_frames, "camera": camera.to_dict(),
                "files": [p.name for p in paths]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return paths


def contact_sheet(images: Sequence[np.ndarray], cols: int = 4, pad: int = 4) -> np.ndarray:
    """Tile equally sized RGB images into one grid image."""
    if not images:
        raise ConfigError("contact sheet needs at least one image")
    h, w = images[0].shape[:2]
    if any(im.shape[:2] != (h, w) for im in images):
        raise ConfigError("contact sheet images must share one size")
    cols = max(1, min(cols, len(images)))
    rows = math.ceil(len(images) / cols)
    sheet = np.full((rows * h + (rows + 1) * pad, cols * w + (cols + 1) * pad, 3), 255, np.uint8)
    for k, im in enumerate(images):
        r, c = divmod(k, cols)
        y, x = pad + r * (h + pad), pad + c * (w + pad)
        sheet[y:y + h, x:x + w] = im[:, :, :3]
    return sheet
