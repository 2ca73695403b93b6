"""Command line interface: ``wholebody <subcommand> [options]``.

Exit codes: 0 ok, 2 configuration error, 3 agent error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline as P
from .errors import AgentError, ConfigError, NumericError, WholeBodyError
from .motion import load_trajectory
from .shapefit import ShapeParams

log = logging.getLogger("wholebody")

EXIT_OK, EXIT_CONFIG, EXIT_AGENT, EXIT_NUMERIC = 0, 2, 3, 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--model", help="humanoid model JSON (default: bundled)")
    p.add_argument("--skeleton", help="source skeleton JSON (default: bundled)")
    p.add_argument("--motion", help="source motion JSON (default: bundled sample)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _agents(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=["mock", "http"])
    p.add_argument("--mock-script", dest="mock_script")
    p.add_argument("--frames", type=int, help="frames sampled for the agents (k)")
    p.add_argument("--max-rounds", dest="max_rounds", type=int)
    p.add_argument("--primitive-mode", dest="primitive_mode", choices=list(P.MODES))
    p.add_argument("--order", choices=list(P.ORDERS))
    p.add_argument("--description", help="override the motion's text description")


def _camera(p: argparse.ArgumentParser) -> None:
    p.add_argument("--camera", choices=["front", "three-quarter", "side"])
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wholebody",
                                     description="Text-driven whole-body humanoid motion pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-shape", help="fit source shape parameters to the humanoid T pose")
    _common(p)

    p = sub.add_parser("retarget", help="retarget a source motion to the humanoid")
    _common(p)
    p.add_argument("--beta", help="shape.json from fit-shape (default: fit now)")

    p = sub.add_parser("edit", help="agent-driven finger/head generation and body refinement")
    _common(p)
    _agents(p)
    _camera(p)
    p.add_argument("--trajectory", help="retargeted trajectory JSON (default: retarget now)")

    p = sub.add_parser("render", help="render a trajectory to PNG frames")
    _common(p)
    _camera(p)
    p.add_argument("--trajectory", required=True, help="trajectory JSON")

    p = sub.add_parser("locomotion", help="extract walking commands from the pelvis track")
    _common(p)
    p.add_argument("--trajectory", help="whole-body trajectory JSON to split upper/lower")
    p.add_argument("--smoothing", type=float, help="moving-average window in seconds")
    p.add_argument("--no-yaw", dest="yaw", action="store_const", const=False)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _common(p)
    _agents(p)
    _camera(p)
    return parser


_CONFIG_FLAGS = ("model", "skeleton", "motion", "out", "seed", "backend", "mock_script", "frames",
                 "max_rounds", "primitive_mode", "order", "camera", "width", "height",
                 "smoothing", "yaw")


def config_from_args(args: argparse.Namespace) -> P.PipelineConfig:
    overrides = {k: getattr(args, k, None) for k in _CONFIG_FLAGS}
    return P.load_config(args.config, overrides)


def _load_beta(path: str) -> ShapeParams:
    try:
        return ShapeParams(json.loads(Path(path).read_text())["beta"])
    except (OSError, KeyError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read shape parameters from {path}: {exc}") from None


def cmd_fit_shape(args) -> int:
    cfg = config_from_args(args)
    cfg.validate()
    beta, loss, history = P.run_fit_shape(cfg)
    print(f"fit-shape: loss {loss:.3e} m^2 after {len(history) - 1} steps -> {cfg.out}/shape.json")
    return EXIT_OK


def cmd_retarget(args) -> int:
    cfg = config_from_args(args)
    cfg.validate()
    inputs = P.load_inputs(cfg)
    beta = _load_beta(args.beta) if args.beta else None
    _, traj, report = P.run_retarget(cfg, inputs, beta)
    o = report["overall"]
    print(f"retarget: {traj.n_frames} frames, key-joint error mean {100 * o['mean']:.2f} cm, "
          f"max {100 * o['max']:.2f} cm -> {cfg.out}/retargeted.json")
    return EXIT_OK


def cmd_edit(args) -> int:
    cfg = config_from_args(args)
    cfg.validate(need_backend=True)
    backend = P.make_backend(cfg)
    inputs = P.load_inputs(cfg)
    beta, _, _ = P.run_fit_shape(cfg, inputs, write=False)
    if args.trajectory:
        with P.stage("load"):
            retargeted = load_trajectory(args.trajectory)
            norm = P.normalize_source(inputs.motion, inputs.skeleton, beta)
    else:
        norm, retargeted, _ = P.run_retarget(cfg, inputs, beta)
    result = P.run_edit(cfg, retargeted, norm, inputs.model, backend, args.description)
    _report_transcript(result.transcript)
    print(f"edit: {result.final.n_frames} frames -> {cfg.out}/final.json")
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = config_from_args(args)
    cfg.validate()
    inputs = P.load_inputs(cfg)
    with P.stage("load"):
        traj = load_trajectory(args.trajectory)
    # the pelvis track places the model only when a motion was given explicitly
    motion = inputs.motion if cfg.motion else None
    paths = P.run_render(cfg, traj, inputs.model, motion)
    print(f"render: {len(paths)} frames -> {Path(cfg.out) / 'frames'}")
    return EXIT_OK


def cmd_locomotion(args) -> int:
    cfg = config_from_args(args)
    cfg.validate()
    inputs = P.load_inputs(cfg)
    traj = None
    if args.trajectory:
        with P.stage("load"):
            traj = load_trajectory(args.trajectory)
    cmds = P.run_locomotion(cfg, inputs.motion, traj, inputs.model)
    print(f"locomotion: {len(cmds)} commands -> {cfg.out}/locomotion.jsonl")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = config_from_args(args)
    result = P.run_pipeline(cfg, args.description)
    _report_transcript(result.transcript)
    print(f"pipeline: {result.final.n_frames} frames, "
          f"{len(result.transcript.records)} agent exchanges -> {cfg.out}")
    return EXIT_OK


def _report_transcript(t) -> None:
    if t.flagged:
        print(f"warning: edit loop aborted ({t.flag_reason}); the retargeted body was kept",
              file=sys.stderr)


COMMANDS = {"fit-shape": cmd_fit_shape, "retarget": cmd_retarget, "edit": cmd_edit,
            "render": cmd_render, "locomotion": cmd_locomotion, "pipeline": cmd_pipeline}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except WholeBodyError as exc:
        tag = getattr(exc, "stage", None) or args.command
        print(f"error [{tag}]: {exc}", file=sys.stderr)
        if isinstance(exc, ConfigError):
            return EXIT_CONFIG
        if isinstance(exc, AgentError):
            return EXIT_AGENT
        if isinstance(exc, NumericError):
            return EXIT_NUMERIC
        return 1


if __name__ == "__main__":
    sys.exit(main())
