"""Pipeline stages with on-disk artifacts. The CLI is a thin layer over this."""

from __future__ import annotations

import contextlib
import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import assets
from .agents import (AgentTranscript, BackendConfig, ChatBackend, HttpChatBackend, MockChatBackend,
                     SplitDescription, edit_loop, generate_fingers, generate_head,
                     render_samples, split_description)
from .editing import EditConfig, assemble_fingers, compose_motion, interpolate_head
from .errors import ConfigError, WholeBodyError
from .kinematics import KinematicModel, joint_kinematics, load_model
from .locomotion import LocomotionConfig, extract_locomotion, save_commands, split_upper_lower
from .motion import JointTrajectory, SourceMotion, load_motion, save_motion, save_trajectory
from .plotting import plot_locomotion, plot_loss, plot_tracking, plot_wrists
from .render import camera_preset, contact_sheet, encode_png, make_render_fn, render_frame, render_sequence
from .retarget import KEY_JOINTS, normalize_source, retarget_motion, tracking_report
from .shapefit import AdamConfig, ShapeParams, SourceSkeletonModel, fit_shape, load_skeleton

log = logging.getLogger(__name__)

ORDERS = ("parts-first", "body-first")
MODES = ("fixed", "parameterized")


@dataclass
class PipelineConfig:
    model: Optional[str] = None          # humanoid JSON; None -> bundled
    skeleton: Optional[str] = None       # source skeleton JSON; None -> bundled
    motion: Optional[str] = None         # source motion JSON; None -> bundled sample
    backend: str = "mock"                # mock | http
    mock_script: Optional[str] = None
    endpoint: str = BackendConfig.endpoint
    vlm_model: str = BackendConfig.model
    api_key_env: str = BackendConfig.api_key_env
    timeout: float = BackendConfig.timeout
    max_retries: int = BackendConfig.max_retries
    frames: int = 4
    max_rounds: int = 2
    primitive_mode: str = "fixed"
    order: str = "parts-first"
    camera: str = "front"
    width: int = 384
    height: int = 384
    out: str = "out"
    seed: int = 0
    smoothing: float = 0.2               # locomotion window, seconds
    yaw: bool = True

    def validate(self, need_backend: bool = False) -> None:
        for name in ("model", "skeleton", "motion"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{name} file not found: {p}")
        if self.frames < 2:
            raise ConfigError(f"frames must be at least 2, got {self.frames}")
        if self.max_rounds < 0:
            raise ConfigError(f"max_rounds must be non-negative, got {self.max_rounds}")
        if self.primitive_mode not in MODES:
            raise ConfigError(f"primitive_mode must be one of {MODES}, got {self.primitive_mode!r}")
        if self.order not in ORDERS:
            raise ConfigError(f"order must be one of {ORDERS}, got {self.order!r}")
        if self.backend not in ("mock", "http"):
            raise ConfigError(f"backend must be 'mock' or 'http', got {self.backend!r}")
        camera_preset(self.camera, self.width, self.height)
        if need_backend and self.backend == "mock":
            if self.mock_script is None:
                raise ConfigError("--mock-script is required with the mock backend")
            if not Path(self.mock_script).is_file():
                raise ConfigError(f"mock script not found: {self.mock_script}")

    def to_dict(self) -> dict:
        return asdict(self)


def _read_config_file(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None


_PATH_KEYS = ("model", "skeleton", "motion", "mock_script", "out")
_BACKEND_KEYS = {"kind": "backend", "mock_script": "mock_script", "endpoint": "endpoint",
                 "model": "vlm_model", "api_key_env": "api_key_env", "timeout": "timeout",
                 "max_retries": "max_retries"}


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Config from a TOML or JSON file, then non-None ``overrides`` on top.

    Relative paths in the file are resolved against the file's directory.
    A ``[backend]`` table may hold kind, mock_script, endpoint, model,
    api_key_env, timeout and max_retries.
    """
    data: dict = {}
    if path is not None:
        path = Path(path)
        raw = dict(_read_config_file(path))
        backend = raw.pop("backend", None)
        if isinstance(backend, dict):
            for k, v in backend.items():
                if k not in _BACKEND_KEYS:
                    raise ConfigError(f"{path}: unknown backend setting {k!r}")
                raw[_BACKEND_KEYS[k]] = v
        elif backend is not None:
            raw["backend"] = backend
        known = {f.name for f in fields(PipelineConfig)}
        for k in raw:
            if k not in known:
                raise ConfigError(f"{path}: unknown setting {k!r}")
        for k in _PATH_KEYS:
            if raw.get(k) is not None and not Path(raw[k]).is_absolute():
                raw[k] = str(path.parent / raw[k])
        data.update(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    try:
        return PipelineConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


@contextlib.contextmanager
def stage(name: str):
    """Tag library errors raised inside with the stage name."""
    try:
        yield
    except WholeBodyError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise


def make_backend(cfg: PipelineConfig) -> ChatBackend:
    if cfg.backend == "mock":
        return MockChatBackend.from_file(cfg.mock_script, max_retries=cfg.max_retries)
    backend = HttpChatBackend(BackendConfig(cfg.endpoint, cfg.vlm_model, cfg.api_key_env,
                                            cfg.timeout, cfg.max_retries))
    backend.check_ready()
    return backend


@dataclass
class Inputs:
    model: KinematicModel
    skeleton: SourceSkeletonModel
    motion: SourceMotion


def load_inputs(cfg: PipelineConfig) -> Inputs:
    with stage("load"):
        model = load_model(cfg.model) if cfg.model else assets.load_bundled_model()
        skel = load_skeleton(cfg.skeleton) if cfg.skeleton else assets.load_bundled_skeleton()
        motion = load_motion(cfg.motion or assets.bundled_motion_path())
    return Inputs(model, skel, motion)


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def write_table(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r)
    path.write_text(buf.getvalue())


# ---- stages ---------------------------------------------------------------

def run_fit_shape(cfg: PipelineConfig, inputs: Inputs | None = None, write: bool = True):
    inputs = inputs or load_inputs(cfg)
    history: list[float] = []
    with stage("fit-shape"):
        beta, loss = fit_shape(inputs.skeleton, inputs.model, AdamConfig(), history=history)
    if write:
        out = _out(cfg)
        write_json(out / "shape.json", {"beta": beta.beta.tolist(), "loss": loss,
                                        "steps": len(history) - 1})
        write_table(out / "shape_loss.csv", ["step", "loss"], [(i, h) for i, h in enumerate(history)])
        plot_loss(history, out / "shape_loss.png")
    return beta, loss, history


def root_offsets(motion: SourceMotion) -> np.ndarray:
    """Pelvis displacement from the first frame, used to place the rendered model."""
    return motion.frames[:, 0] - motion.frames[0, 0]


def run_retarget(cfg: PipelineConfig, inputs: Inputs | None = None, beta: ShapeParams | None = None,
                 write: bool = True):
    inputs = inputs or load_inputs(cfg)
    if beta is None:
        beta, _, _ = run_fit_shape(cfg, inputs, write=write)
    with stage("retarget"):
        norm = normalize_source(inputs.motion, inputs.skeleton, beta)
        traj = retarget_motion(norm, inputs.model, inputs.skeleton)
        report = tracking_report(norm, inputs.model, traj, inputs.skeleton)
    if write:
        out = _out(cfg)
        save_motion(norm, out / "normalized_motion.json")
        save_trajectory(traj, out / "retargeted.json", out / "retargeted.csv")
        per_frame = report["per_frame"]
        summary = {k: v for k, v in report.items() if k != "per_frame"}
        write_json(out / "tracking.json", summary)
        write_table(out / "tracking.csv", ["frame", *KEY_JOINTS],
                    [(i, *map(float, row)) for i, row in enumerate(per_frame)])
        plot_tracking(per_frame, KEY_JOINTS, traj.fps, out / "tracking.png")
    return norm, traj, report


@dataclass
class EditResult:
    split: SplitDescription
    body: JointTrajectory           # Q_b
    fingers: np.ndarray             # T x 12
    head: np.ndarray                # T x 3
    final: JointTrajectory          # Q*
    transcript: AgentTranscript = field(default_factory=AgentTranscript)


def _generate_parts(split: SplitDescription, traj: JointTrajectory, model: KinematicModel,
                    render_fn, backend, cfg: PipelineConfig, transcript: AgentTranscript):
    T = traj.n_frames
    fingers, head = np.zeros((T, 12)), np.zeros((T, 3))
    if split.finger_text:
        with stage("fingers"):
            images = render_samples(traj, render_fn, cfg.frames)
            segs = generate_fingers(images, split.finger_text, backend, model, transcript)
            fingers = assemble_fingers(segs, T, cfg.frames, traj.fps, model=model)
    if split.head_text:
        with stage("head"):
            kfs = generate_head(split.head_text, T, traj.fps, backend, model, transcript)
            head = interpolate_head(kfs, T, traj.fps, model)
    return fingers, head


def run_edit(cfg: PipelineConfig, retargeted: JointTrajectory, motion: SourceMotion,
             model: KinematicModel, backend: ChatBackend, description: str | None = None,
             write: bool = True) -> EditResult:
    """Split the description, generate finger/head parts and refine the body.

    ``motion`` is the (normalized) source motion; it supplies the default
    description and the pelvis track used to place the rendered model.
    """
    transcript = AgentTranscript()
    camera = camera_preset(cfg.camera, cfg.width, cfg.height)
    if motion.n_frames != retargeted.n_frames:
        raise ConfigError(f"motion has {motion.n_frames} frames, trajectory {retargeted.n_frames}")
    render_fn = make_render_fn(model, camera, root_offsets(motion))
    text = description if description is not None else motion.description
    out = _out(cfg) if write else None
    try:
        with stage("split"):
            split = split_description(text, backend, transcript)
        if out is not None:
            write_json(out / "split.json", {"body": split.body_text, "finger": split.finger_text,
                                            "head": split.head_text})
        loop_kw = dict(max_rounds=cfg.max_rounds, k=cfg.frames, mode=cfg.primitive_mode,
                       transcript=transcript, edit_config=EditConfig())
        if cfg.order == "parts-first":
            fingers, head = _generate_parts(split, retargeted, model, render_fn, backend, cfg, transcript)
            with_parts = compose_motion(retargeted, fingers, head, model)
            with stage("edit-loop"):
                body, _ = edit_loop(with_parts, split.body_text, model, render_fn, backend, **loop_kw)
        else:
            with stage("edit-loop"):
                body, _ = edit_loop(retargeted, split.body_text, model, render_fn, backend, **loop_kw)
            fingers, head = _generate_parts(split, body, model, render_fn, backend, cfg, transcript)
        with stage("compose"):
            final = compose_motion(body, fingers, head, model)
    finally:
        if out is not None:
            transcript.save(out / "transcript.json")
    result = EditResult(split, body, fingers, head, final, transcript)
    if out is not None:
        save_trajectory(body, out / "body_edited.json", out / "body_edited.csv")
        f_names = [model.joint_names[i] for i in model.groups["fingers"]]
        n_names = [model.joint_names[i] for i in model.groups["neck"]]
        write_table(out / "fingers.csv", f_names, fingers.tolist())
        write_table(out / "head.csv", n_names, head.tolist())
        save_trajectory(final, out / "final.json", out / "final.csv")
        plot_wrists({"retargeted (left)": _wrist_z(model, retargeted, "left"),
                     "edited (left)": _wrist_z(model, final, "left"),
                     "retargeted (right)": _wrist_z(model, retargeted, "right"),
                     "edited (right)": _wrist_z(model, final, "right")},
                    final.fps, out / "wrists.png")
    return result


def _wrist_z(model: KinematicModel, traj: JointTrajectory, side: str) -> np.ndarray:
    k = model.frame_index(f"{side}_wrist")
    return np.array([joint_kinematics(model, q)[0][k, 2] for q in traj.rows])


def run_render(cfg: PipelineConfig, traj: JointTrajectory, model: KinematicModel,
               motion: SourceMotion | None = None, subdir: str = "frames"):
    camera = camera_preset(cfg.camera, cfg.width, cfg.height)
    offs = root_offsets(motion) if motion is not None else None
    if offs is not None and len(offs) != traj.n_frames:
        raise ConfigError(f"motion has {len(offs)} frames, trajectory {traj.n_frames}")
    out = _out(cfg)
    with stage("render"):
        paths = render_sequence(model, traj, camera, out / subdir, offs)
        idx = sorted(set(int(round(i * (traj.n_frames - 1) / 7)) for i in range(8)))
        sheet = [render_frame(model, traj.rows[i], camera,
                              offs[i] if offs is not None else (0.0, 0.0, 0.0)) for i in idx]
        (out / "contact_sheet.png").write_bytes(encode_png(contact_sheet(sheet, 4)))
    return paths


def run_locomotion(cfg: PipelineConfig, motion: SourceMotion, traj: JointTrajectory | None = None,
                   model: KinematicModel | None = None):
    out = _out(cfg)
    with stage("locomotion"):
        cmds = extract_locomotion(motion, LocomotionConfig(window=cfg.smoothing, yaw=cfg.yaw))
        save_commands(cmds, out / "locomotion.jsonl")
        write_table(out / "locomotion.csv", ["timestamp", "forward", "lateral", "yaw_rate"],
                    [(c.timestamp, c.forward, c.lateral, c.yaw_rate) for c in cmds])
        plot_locomotion(cmds, out / "locomotion.png")
        if traj is not None and model is not None:
            upper, lower = split_upper_lower(traj, model)
            (out / "upper_body.csv").write_text(upper.to_csv())
            (out / "lower_body.csv").write_text(lower.to_csv())
    return cmds


def run_pipeline(cfg: PipelineConfig, description: str | None = None) -> EditResult:
    cfg.validate(need_backend=True)
    backend = make_backend(cfg)       # fails fast on a missing API key
    out = _out(cfg)
    write_json(out / "config.json", cfg.to_dict())
    inputs = load_inputs(cfg)
    beta, _, _ = run_fit_shape(cfg, inputs)
    norm, retargeted, _ = run_retarget(cfg, inputs, beta)
    result = run_edit(cfg, retargeted, norm, inputs.model, backend, description)
    run_render(cfg, result.final, inputs.model, norm)
    run_locomotion(cfg, norm, result.final, inputs.model)
    if isinstance(backend, MockChatBackend) and backend.mismatches:
        write_json(out / "mock_mismatches.json", backend.mismatches)
    return result
