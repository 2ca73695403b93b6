"""Bounded judge/adjust refinement of the body motion."""

from __future__ import annotations

import logging
from typing import Callable, Sequence

from ..editing import EditConfig, apply_edits
from ..errors import AgentError, DegenerateDirectionError
from ..kinematics import KinematicModel
from ..motion import JointTrajectory
from .backend import ChatBackend, ImagePart
from .roles import adjust, classify_editable, judge, sample_indices
from .transcript import AgentTranscript

log = logging.getLogger(__name__)

# render_fn(traj, frame indices) -> one PNG per index
RenderFn = Callable[[JointTrajectory, Sequence[int]], Sequence[bytes]]


def render_samples(traj: JointTrajectory, render_fn: RenderFn, k: int) -> list[ImagePart]:
    idx = sample_indices(traj.n_frames, k)
    return [ImagePart(i, png) for i, png in zip(idx, render_fn(traj, idx))]


def edit_loop(traj: JointTrajectory, body_text: str, model: KinematicModel, render_fn: RenderFn,
              backend: ChatBackend, max_rounds: int = 2, k: int = 4, mode: str = "fixed",
              transcript: AgentTranscript | None = None,
              edit_config: EditConfig | None = None) -> tuple[JointTrajectory, AgentTranscript]:
    """Gate, then judge and adjust until aligned or ``max_rounds`` adjustments are spent.

    A final judge call follows the last adjustment so the transcript records
    the verdict on the returned motion. Agent failures abort the loop and
    return the input trajectory with the transcript flagged.
    """
    if max_rounds < 0:
        raise ValueError("max_rounds must be non-negative")
    transcript = transcript if transcript is not None else AgentTranscript()
    if max_rounds == 0:
        transcript.note("edit loop skipped: max_rounds is 0")
        return traj.copy(), transcript

    current = traj
    try:
        if not classify_editable(render_samples(traj, render_fn, k), body_text, backend, transcript):
            transcript.note("motion classified as not editable; body left unchanged")
            return traj.copy(), transcript
        for rnd in range(max_rounds + 1):
            images = render_samples(current, render_fn, k)
            verdict = judge(images, body_text, backend, transcript)
            if verdict.aligned:
                transcript.note(f"round {rnd}: judged aligned")
                break
            if rnd == max_rounds:
                transcript.note(f"round {rnd}: still not aligned, round limit reached")
                break
            cmds = adjust(images, verdict.suggestions, backend, current.n_frames, mode, transcript)
            try:
                current = apply_edits(model, current, cmds, edit_config)
            except DegenerateDirectionError as exc:
                transcript.note(f"round {rnd}: edit skipped ({exc})")
                log.warning("round %d: edit skipped (%s)", rnd, exc)
            transcript.note(f"round {rnd}: applied {len(cmds)} command(s)")
    except AgentError as exc:
        transcript.flag(str(exc))
        log.warning("edit loop aborted: %s; keeping the retargeted motion", exc)
        return traj.copy(), transcript
    return current, transcript
