"""The six agent roles. Every response is parsed from a fenced JSON block
and schema-validated before anything reaches the kinematics layer; an
invalid reply triggers a corrective re-prompt."""

from __future__ import annotations

import json
import logging
import math
import re
import time
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..editing import PRIMITIVES, EditCommand, FingerSegment, HeadKeyframe, primitive_table
from ..errors import AgentParseError, ConfigError
from ..kinematics import KinematicModel
from .backend import ChatBackend, ImagePart, build_messages
from .transcript import AgentRecord, AgentTranscript, image_ref

log = logging.getLogger(__name__)

ROLES = ("split", "finger", "head", "classify", "judge", "adjust")
SYSTEM_PROMPT = ("You assist with editing humanoid robot motions. Always answer with one "
                 "JSON object inside a ```json fenced code block and nothing else.")


def load_prompt(role: str) -> str:
    return (resources.files("wholebody.agents") / "prompts" / f"{role}.txt").read_text()


def fill(template: str, **values) -> str:
    """Substitute ``{name}`` placeholders; other braces are left alone."""
    out = template
    for key, val in values.items():
        out = out.replace("{" + key + "}", str(val))
    return out


_FENCE = re.compile(r"```(?:json|JSON)?\s*\n?(.*?)```", re.DOTALL)


def extract_json(text: str) -> dict:
    m = _FENCE.search(text)
    body = m.group(1) if m else text.strip()
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ValueError(f"response does not contain valid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ValueError("response JSON must be an object")
    return data


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SplitResponse(_Strict):
    body: str
    finger: Optional[str] = None
    head: Optional[str] = None

    @field_validator("finger", "head")
    @classmethod
    def _blank_is_none(cls, v):
        if v is None or not v.strip() or v.strip().lower() in ("none", "null", "n/a"):
            return None
        return v.strip()


class SegmentModel(_Strict):
    interval: int
    config: list[float]


class FingerResponse(_Strict):
    segments: list[SegmentModel]


class KeyframeModel(_Strict):
    frame: int
    neck: list[float] = Field(min_length=3, max_length=3)


class HeadResponse(_Strict):
    keyframes: list[KeyframeModel]


class ClassifyResponse(_Strict):
    editable: bool
    reason: str = ""


class JudgeResponse(_Strict):
    caption: str
    aligned: bool
    suggestions: list[str] = []

    @field_validator("suggestions", mode="before")
    @classmethod
    def _one_string(cls, v):
        return [v] if isinstance(v, str) else v


class CommandModel(_Strict):
    side: Literal["left", "right"]
    primitive: str
    distance: Optional[float] = None
    frame_range: Optional[list[int]] = Field(default=None, min_length=2, max_length=2)

    @field_validator("primitive")
    @classmethod
    def _known(cls, v):
        if v not in PRIMITIVES:
            raise ValueError(f"unknown primitive {v!r}")
        return v


class AdjustResponse(_Strict):
    commands: list[CommandModel]


@dataclass(frozen=True)
class SplitDescription:
    body_text: str
    finger_text: str | None = None
    head_text: str | None = None


@dataclass(frozen=True)
class Verdict:
    caption: str
    aligned: bool
    suggestions: tuple[str, ...]


def _short_error(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        parts = []
        for e in exc.errors()[:5]:
            loc = ".".join(str(p) for p in e["loc"])
            parts.append(f"{loc}: {e['msg']}" if loc else e["msg"])
        return "; ".join(parts)
    return str(exc)


def ask(backend: ChatBackend, transcript: AgentTranscript | None, role: str, prompt: str,
        validate: Callable[[dict], object], images: Sequence[ImagePart] = ()):
    """Query ``role`` until ``validate`` accepts the reply or retries run out.

    ``validate`` turns the parsed JSON into the role's result and raises
    ValueError / ValidationError to reject it.
    """
    transcript = transcript if transcript is not None else AgentTranscript()
    messages = build_messages(SYSTEM_PROMPT, prompt, images)
    refs = tuple(image_ref(img.frame, img.png) for img in images)
    sent_prompt = prompt
    last_error = None
    for attempt in range(backend.max_retries + 1):
        t0 = time.perf_counter()
        raw = backend.complete(role, messages)
        elapsed = 0.0 if backend.deterministic else time.perf_counter() - t0
        try:
            result = validate(extract_json(raw))
        except (ValueError, ValidationError) as exc:
            last_error = _short_error(exc)
            transcript.append(AgentRecord(role, sent_prompt, refs, raw, None, last_error, elapsed))
            log.info("%s: invalid response (%s), re-prompting", role, last_error)
            sent_prompt = (f"Your previous reply was invalid: {last_error}. Reply again with "
                           "only the corrected JSON object in a ```json fenced block.")
            messages = messages + [
                {"role": "assistant", "content": [{"type": "text", "text": raw}]},
                {"role": "user", "content": [{"type": "text", "text": sent_prompt}]},
            ]
            continue
        transcript.append(AgentRecord(role, sent_prompt, refs, raw, _jsonable(result), None, elapsed))
        return result
    raise AgentParseError(f"{role}: no valid response after {backend.max_retries + 1} "
                          f"attempts ({last_error})")


def _jsonable(result):
    if isinstance(result, (list, tuple)):
        return [_jsonable(r) for r in result]
    if hasattr(result, "to_dict"):
        return result.to_dict()
    if isinstance(result, (SplitDescription, Verdict)):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in result.__dict__.items()}
    return result


def sample_indices(n_frames: int, k: int) -> list[int]:
    """``round(i (T-1) / (k-1))`` for i in 0..k-1, halves rounded up."""
    if k < 2:
        raise ConfigError("at least two frames must be sampled")
    if k > n_frames:
        raise ConfigError(f"cannot sample {k} frames from {n_frames}")
    return [int(math.floor(i * (n_frames - 1) / (k - 1) + 0.5)) for i in range(k)]


def sample_frames(frames: Sequence, k: int) -> tuple[list, list[int]]:
    """k frames at equal intervals, endpoints included, and their indices."""
    idx = sample_indices(len(frames), k)
    return [frames[i] for i in idx], idx


def split_description(text: str, backend: ChatBackend,
                      transcript: AgentTranscript | None = None) -> SplitDescription:
    if not text or not text.strip():
        raise ConfigError("motion description is empty")

    def validate(data):
        r = SplitResponse.model_validate(data)
        if not r.body.strip():
            raise ValueError("body description is empty")
        return SplitDescription(r.body.strip(), r.finger, r.head)

    return ask(backend, transcript, "split", fill(load_prompt("split"), description=text), validate)


def _joint_table(model: KinematicModel, group: str) -> str:
    lines = []
    for i in model.groups[group]:
        j = model.joints[i]
        lines.append(f"- {j.name}: [{j.limit_lo:.2f}, {j.limit_hi:.2f}]")
    return "\n".join(lines)


def generate_fingers(images: Sequence[ImagePart], finger_text: str, backend: ChatBackend,
                     model: KinematicModel, transcript: AgentTranscript | None = None
                     ) -> list[FingerSegment]:
    """One 12-joint configuration per sampled-frame interval."""
    k = len(images)
    idx = list(model.groups["fingers"])
    lo, hi = model.lower[idx], model.upper[idx]
    notes = []

    def validate(data):
        r = FingerResponse.model_validate(data)
        seen = sorted(s.interval for s in r.segments)
        if seen != list(range(k)):
            raise ValueError(f"need exactly one segment per interval 0..{k - 1}, got {seen}")
        out = []
        for s in sorted(r.segments, key=lambda s: s.interval):
            if len(s.config) != 12:
                raise ValueError(f"interval {s.interval}: expected 12 values, got {len(s.config)}")
            cfg = np.asarray(s.config, dtype=float)
            if not np.all(np.isfinite(cfg)):
                raise ValueError(f"interval {s.interval}: non-finite value")
            clamped = np.clip(cfg, lo, hi)
            if np.any(clamped != cfg):
                notes.append(f"finger interval {s.interval}: clamped "
                             f"{int(np.sum(clamped != cfg))} value(s) into joint limits")
            out.append(FingerSegment(s.interval, tuple(float(v) for v in clamped)))
        return out

    prompt = fill(load_prompt("finger"), k=k, frame_indices=[im.frame for im in images],
                  finger_description=finger_text, finger_joints=_joint_table(model, "fingers"),
                  last_interval=k - 1)
    result = ask(backend, transcript, "finger", prompt, validate, images)
    for n in notes:
        log.info(n)
        if transcript is not None:
            transcript.note(n)
    return result


def generate_head(head_text: str, n_frames: int, fps: float, backend: ChatBackend,
                  model: KinematicModel, transcript: AgentTranscript | None = None
                  ) -> list[HeadKeyframe]:
    idx = list(model.groups["neck"])
    lo, hi = model.lower[idx], model.upper[idx]
    notes = []

    def validate(data):
        r = HeadResponse.model_validate(data)
        if not r.keyframes:
            raise ValueError("no keyframes given")
        frames = [kf.frame for kf in r.keyframes]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("keyframe indices must be strictly increasing")
        if frames[0] < 0 or frames[-1] >= n_frames:
            raise ValueError(f"keyframe indices must lie in [0, {n_frames - 1}]")
        out = []
        for kf in r.keyframes:
            v = np.asarray(kf.neck, dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"frame {kf.frame}: non-finite neck angle")
            c = np.clip(v, lo, hi)
            if np.any(c != v):
                notes.append(f"head keyframe {kf.frame}: clamped into neck limits")
            out.append(HeadKeyframe(kf.frame, tuple(float(x) for x in c)))
        return out

    fps_text = int(fps) if float(fps).is_integer() else fps
    prompt = fill(load_prompt("head"), head_description=head_text, T=n_frames, fps=fps_text,
                  last_frame=n_frames - 1, neck_joints=_joint_table(model, "neck"))
    result = ask(backend, transcript, "head", prompt, validate)
    for n in notes:
        log.info(n)
        if transcript is not None:
            transcript.note(n)
    return result


def classify_editable(images: Sequence[ImagePart], body_text: str, backend: ChatBackend,
                      transcript: AgentTranscript | None = None) -> bool:
    prompt = fill(load_prompt("classify"), k=len(images), description=body_text,
                  frame_indices=[im.frame for im in images])
    return ask(backend, transcript, "classify", prompt,
               lambda d: ClassifyResponse.model_validate(d).editable, images)


def judge(images: Sequence[ImagePart], body_text: str, backend: ChatBackend,
          transcript: AgentTranscript | None = None) -> Verdict:
    def validate(data):
        r = JudgeResponse.model_validate(data)
        return Verdict(r.caption, r.aligned, tuple(r.suggestions))

    prompt = fill(load_prompt("judge"), k=len(images), description=body_text,
                  frame_indices=[im.frame for im in images])
    return ask(backend, transcript, "judge", prompt, validate, images)


MODE_TEXT = {
    "fixed": "Each primitive moves the wrist by its fixed distance; do not give a distance.",
    "parameterized": ("You may add a \"distance\" in meters (greater than 0, at most 0.5) to "
                      "any moving primitive, for example {\"side\": \"left\", \"primitive\": "
                      "\"move_up\", \"distance\": 0.12}."),
}


def adjust(images: Sequence[ImagePart], suggestions: Sequence[str], backend: ChatBackend,
           n_frames: int, mode: str = "fixed",
           transcript: AgentTranscript | None = None) -> list[EditCommand]:
    if mode not in MODE_TEXT:
        raise ConfigError(f"primitive mode must be 'fixed' or 'parameterized', got {mode!r}")

    def validate(data):
        r = AdjustResponse.model_validate(data)
        out = []
        for i, c in enumerate(r.commands):
            if c.distance is not None and mode == "fixed":
                raise ValueError(f"command {i}: distance is not allowed with fixed primitives")
            fr = tuple(c.frame_range) if c.frame_range is not None else None
            if fr is not None and not (0 <= fr[0] < fr[1] <= n_frames):
                raise ValueError(f"command {i}: frame_range must satisfy 0 <= start < end <= {n_frames}")
            try:
                out.append(EditCommand(c.side, c.primitive, c.distance, fr))
            except ConfigError as exc:
                raise ValueError(f"command {i}: {exc}") from None
        return out

    text = "\n".join(f"- {s}" for s in suggestions) or "- (none)"
    prompt = fill(load_prompt("adjust"), k=len(images), frame_indices=[im.frame for im in images],
                  T=n_frames, suggestions=text, primitive_table=primitive_table(mode),
                  mode_instructions=MODE_TEXT[mode])
    return ask(backend, transcript, "adjust", prompt, validate, images)
