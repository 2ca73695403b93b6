import json

import numpy as np
import pytest

from wholebody.cli import main
from wholebody.editing import column_sources
from wholebody.motion import load_trajectory


def fenced(obj):
    return "```json\n" + json.dumps(obj) + "\n```"


def write_script(path, **responses):
    path.write_text(json.dumps({"responses": responses}))
    return str(path)


def frame_bytes(out):
    return [p.read_bytes() for p in sorted((out / "frames").glob("*.png"))]


def test_pipeline_writes_every_artifact(pipeline_runs):
    out = pipeline_runs[0]
    for name in ("config.json", "shape.json", "shape_loss.csv", "shape_loss.png",
                 "retargeted.json", "retargeted.csv", "tracking.json", "tracking.png",
                 "split.json", "transcript.json", "body_edited.json", "fingers.csv", "head.csv",
                 "final.json", "final.csv", "wrists.png", "contact_sheet.png",
                 "locomotion.jsonl", "locomotion.csv", "upper_body.csv", "lower_body.csv"):
        assert (out / name).is_file(), name
    assert not (out / "mock_mismatches.json").exists()
    man = json.loads((out / "frames" / "manifest.json").read_text())
    assert man["count"] == 90 == len(frame_bytes(out))


def test_pipeline_is_deterministic(pipeline_runs):
    a, b = pipeline_runs
    for name in ("final.json", "transcript.json", "retargeted.json", "locomotion.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert frame_bytes(a) == frame_bytes(b)


def test_pipeline_transcript_contents(pipeline_runs):
    t = json.loads((pipeline_runs[0] / "transcript.json").read_text())
    roles = [r["role"] for r in t["records"]]
    assert roles == ["split", "finger", "head", "classify", "judge", "adjust", "judge"]
    assert not t["flagged"]


def test_baseline_equals_retargeted(tmp_path):
    script = write_script(tmp_path / "s.json",
                          split=[fenced({"body": "a person stands", "finger": "", "head": ""})])
    out = tmp_path / "out"
    assert main(["pipeline", "--mock-script", script, "--max-rounds", "0", "--out", str(out)]) == 0
    from wholebody import assets
    model = assets.load_bundled_model()
    final, ret = load_trajectory(out / "final.json"), load_trajectory(out / "retargeted.json")
    src = np.array(column_sources(model))
    body = src == "body"
    np.testing.assert_array_equal(final.rows[:, body], ret.rows[:, body])
    assert np.all(final.rows[:, ~body] == 0.0)


def test_missing_api_key_fails_before_writing(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("HARMON_API_KEY", raising=False)
    out = tmp_path / "never"
    assert main(["pipeline", "--backend", "http", "--out", str(out)]) == 2
    assert "HARMON_API_KEY" in capsys.readouterr().err
    assert not out.exists()


def test_mock_backend_needs_script(tmp_path):
    assert main(["pipeline", "--out", str(tmp_path / "o")]) == 2


def test_split_failure_exits_3(tmp_path, capsys):
    script = write_script(tmp_path / "s.json", split=["I would rather not.", "Still prose."])
    assert main(["pipeline", "--mock-script", script, "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "error [split]" in err
    assert (tmp_path / "o" / "transcript.json").is_file()


def test_edit_loop_failure_keeps_body_and_warns(tmp_path, capsys):
    script = write_script(tmp_path / "s.json",
                          split=[fenced({"body": "a person waves", "finger": "", "head": ""})],
                          classify=[fenced({"editable": True, "reason": "arm motion"})])
    out = tmp_path / "o"
    assert main(["edit", "--mock-script", script, "--out", str(out)]) == 0
    assert "warning" in capsys.readouterr().err
    t = json.loads((out / "transcript.json").read_text())
    assert t["flagged"] and "judge" in t["flag_reason"]
    body = load_trajectory(out / "body_edited.json")
    final = load_trajectory(out / "final.json")
    assert body.n_frames == final.n_frames == 90


def test_toml_config_and_flag_precedence(tmp_path, mock_script_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(f'out = "from_config"\nframes = 3\ncamera = "side"\n\n'
                   f'[backend]\nkind = "mock"\nmock_script = "{mock_script_path}"\n')
    from wholebody.cli import build_parser, config_from_args
    args = build_parser().parse_args(["pipeline", "--config", str(cfg), "--frames", "5"])
    c = config_from_args(args)
    assert c.frames == 5 and c.camera == "side" and c.out == str(tmp_path / "from_config")
    assert c.mock_script == str(mock_script_path)


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"frmes": 3}')
    assert main(["fit-shape", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_stage_subcommands_chain(tmp_path):
    out = tmp_path / "o"
    assert main(["fit-shape", "--out", str(out)]) == 0
    beta = json.loads((out / "shape.json").read_text())["beta"]
    assert len(beta) == 10
    assert main(["retarget", "--beta", str(out / "shape.json"), "--out", str(out)]) == 0
    traj = str(out / "retargeted.json")
    assert main(["render", "--trajectory", traj, "--width", "96", "--height", "96",
                 "--out", str(out)]) == 0
    assert len(list((out / "frames").glob("*.png"))) == 90
    assert main(["locomotion", "--trajectory", traj, "--no-yaw", "--out", str(out)]) == 0
    lines = (out / "locomotion.jsonl").read_text().splitlines()
    assert len(lines) == 90 and all(json.loads(l)["yaw_rate"] == 0.0 for l in lines)
    assert (out / "lower_body.csv").is_file()


def test_bad_trajectory_file(tmp_path, capsys):
    bad = tmp_path / "t.json"
    bad.write_text("not json")
    assert main(["render", "--trajectory", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "error [load]" in capsys.readouterr().err


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
