import json

import numpy as np
import pytest

from wholebody.agents import (AgentTranscript, ImagePart, MockChatBackend, adjust,
                              classify_editable, edit_loop, extract_json, generate_fingers,
                              generate_head, judge, sample_frames, sample_indices, split_description)
from wholebody.agents.roles import fill, load_prompt
from wholebody.editing import EditCommand
from wholebody.errors import AgentError, AgentParseError, ConfigError
from wholebody.motion import JointTrajectory
from wholebody.synth import sample_mock_script


def fenced(obj):
    return "```json\n" + json.dumps(obj) + "\n```"


def mock(**responses):
    return MockChatBackend({"responses": responses})


IMAGES = [ImagePart(i, b"png%d" % i) for i in (0, 30, 59, 89)]


# ---- frame sampling -------------------------------------------------------

def test_sample_indices_examples():
    assert sample_indices(100, 4) == [0, 33, 66, 99]
    assert sample_indices(10, 10) == list(range(10))
    idx = sample_indices(90, 9)
    assert len(idx) == 9 and idx[0] == 0 and idx[-1] == 89
    frames, idx = sample_frames(list("abcdefg"), 3)
    assert frames == ["a", "d", "g"] and idx == [0, 3, 6]


def test_sample_indices_errors():
    with pytest.raises(ConfigError):
        sample_indices(3, 4)
    with pytest.raises(ConfigError):
        sample_indices(10, 1)


# ---- prompts and parsing --------------------------------------------------

def test_prompt_templates_have_placeholders():
    for role, keys in {"split": ["{description}"], "head": ["{T}", "{fps}"],
                       "adjust": ["{primitive_table}", "{suggestions}"],
                       "finger": ["{k}", "{frame_indices}"], "judge": ["{description}"],
                       "classify": ["{description}"]}.items():
        text = load_prompt(role)
        for k in keys:
            assert k in text
        assert "```json" in text


def test_fill_only_touches_named_keys():
    assert fill('{"a": 1} {x}', x=5) == '{"a": 1} 5'


def test_extract_json_variants():
    assert extract_json('Sure!\n```json\n{"a": 1}\n```') == {"a": 1}
    assert extract_json('{"a": 2}') == {"a": 2}
    with pytest.raises(ValueError):
        extract_json("no json here")
    with pytest.raises(ValueError):
        extract_json("```json\n[1, 2]\n```")


# ---- split ----------------------------------------------------------------

def test_split_wave_fingers_nod():
    b = mock(split=[fenced({"body": "a person waves", "finger": "fingers spread",
                            "head": "nodding"})])
    s = split_description("a person waves with fingers spread while nodding", b)
    assert (s.body_text, s.finger_text, s.head_text) == ("a person waves", "fingers spread", "nodding")


def test_split_walk_has_no_parts():
    b = mock(split=[fenced({"body": "a person walks forward", "finger": None, "head": "none"})])
    s = split_description("a person walks forward", b)
    assert s.finger_text is None and s.head_text is None


def test_split_retry_after_prose():
    t = AgentTranscript()
    b = mock(split=["The body waves and the head nods.", fenced({"body": "waves"})])
    s = split_description("a person waves", b, t)
    assert s.body_text == "waves"
    assert [r.error is None for r in t.records] == [False, True]
    assert "invalid" in t.records[1].prompt


def test_split_parse_error_after_retries():
    b = mock(split=["prose", "more prose"])
    with pytest.raises(AgentParseError):
        split_description("x", b)
    with pytest.raises(ConfigError):
        split_description("  ", b)


# ---- fingers / head -------------------------------------------------------

def fist(model):
    idx = list(model.groups["fingers"])
    return [float(v) for v in np.where(model.upper[idx] > 0, model.upper[idx], model.lower[idx])]


def test_fingers_fist_four_segments(model):
    segs = [{"interval": k, "config": fist(model)} for k in range(4)]
    out = generate_fingers(IMAGES, "make a fist", mock(finger=[fenced({"segments": segs})]), model)
    assert [s.interval for s in out] == [0, 1, 2, 3]
    assert all(len(s.config) == 12 for s in out)


def test_fingers_wrong_arity_retry_then_error(model):
    bad = fenced({"segments": [{"interval": k, "config": [0.1] * 13} for k in range(4)]})
    t = AgentTranscript()
    with pytest.raises(AgentParseError, match="13"):
        generate_fingers(IMAGES, "spread", mock(finger=[bad, bad]), model, t)
    assert t.count("finger") == 2 and t.count("finger", parsed_only=True) == 0


def test_fingers_clamped_and_logged(model):
    segs = [{"interval": k, "config": [3.0] * 12} for k in range(4)]
    t = AgentTranscript()
    out = generate_fingers(IMAGES, "spread", mock(finger=[fenced({"segments": segs})]), model, t)
    idx = list(model.groups["fingers"])
    assert all(np.all(np.asarray(s.config) <= model.upper[idx]) for s in out)
    assert any("clamped" in n for n in t.notes)


def test_fingers_prompt_carries_images_and_indices(model):
    segs = [{"interval": k, "config": fist(model)} for k in range(4)]
    b = MockChatBackend({"responses": {"finger": [{"response": fenced({"segments": segs}),
                                                  "expect": "[0, 30, 59, 89]"}]}})
    generate_fingers(IMAGES, "fist", b, model)
    assert b.mismatches == []


def test_head_nod_twice(model):
    kfs = [{"frame": f, "neck": [0.0, p, 0.0]} for f, p in
           [(0, 0.0), (20, 0.3), (40, -0.2), (60, 0.3), (80, -0.2), (119, 0.0)]]
    t = AgentTranscript()
    b = MockChatBackend({"responses": {"head": [{"response": fenced({"keyframes": kfs}),
                                                "expect": "120 frames at 30"}]}})
    out = generate_head("nod twice", 120, 30.0, b, model, t)
    assert len(out) >= 5
    pitches = [k.neck[1] for k in out[1:-1]]
    assert all(np.sign(a) != np.sign(b_) for a, b_ in zip(pitches, pitches[1:]))
    assert b.mismatches == []


def test_head_frame_T_rejected_then_fixed(model):
    bad = fenced({"keyframes": [{"frame": 0, "neck": [0, 0, 0]}, {"frame": 120, "neck": [0, 0.2, 0]}]})
    good = fenced({"keyframes": [{"frame": 0, "neck": [0, 0, 0]}, {"frame": 119, "neck": [0, 0.2, 0]}]})
    t = AgentTranscript()
    out = generate_head("nod", 120, 30.0, mock(head=[bad, good]), model, t)
    assert out[-1].frame == 119
    assert "119" in t.records[0].error


def test_head_non_increasing_error(model):
    bad = fenced({"keyframes": [{"frame": 10, "neck": [0, 0, 0]}, {"frame": 5, "neck": [0, 0, 0]}]})
    with pytest.raises(AgentParseError, match="increasing"):
        generate_head("nod", 60, 30.0, mock(head=[bad, bad]), model)


def test_head_clamped(model):
    r = fenced({"keyframes": [{"frame": 0, "neck": [0, 5.0, 0]}]})
    out = generate_head("look up", 30, 30.0, mock(head=[r]), model)
    assert out[0].neck[1] == model.upper[model.groups["neck"][1]]


# ---- classify / judge / adjust -------------------------------------------

@pytest.mark.parametrize("responses,expected", [
    ([fenced({"editable": True})], True),
    ([fenced({"editable": False, "reason": "already fine"})], False),
    (["maybe?", fenced({"editable": True})], True),
])
def test_classify(responses, expected):
    assert classify_editable(IMAGES, "wave", mock(classify=responses)) is expected


@pytest.mark.parametrize("responses,aligned", [
    ([fenced({"caption": "waves", "aligned": True, "suggestions": []})], True),
    ([fenced({"caption": "arm low", "aligned": False, "suggestions": ["raise the right hand"]})], False),
    (["nope", fenced({"caption": "c", "aligned": True})], True),
])
def test_judge(responses, aligned):
    v = judge(IMAGES, "wave", mock(judge=responses))
    assert v.aligned is aligned
    if not aligned:
        assert v.suggestions == ("raise the right hand",)


def test_adjust_single_and_pair():
    one = adjust(IMAGES, ["raise"], mock(adjust=[fenced({"commands": [
        {"side": "right", "primitive": "move_up"}]})]), 90)
    assert one == [EditCommand("right", "move_up")]
    two = adjust(IMAGES, ["hands together"], mock(adjust=[fenced({"commands": [
        {"side": "left", "primitive": "move_right"},
        {"side": "right", "primitive": "move_left", "frame_range": [10, 40]}]})]), 90)
    assert two[1].frame_range == (10, 40) and len(two) == 2


def test_adjust_parameterized_distance():
    r = fenced({"commands": [{"side": "left", "primitive": "move_up", "distance": 0.12}]})
    t = AgentTranscript()
    out = adjust(IMAGES, ["a bit higher"], mock(adjust=[r]), 90, "parameterized", t)
    assert out[0].distance == 0.12
    assert "distance" in t.records[0].prompt
    with pytest.raises(AgentParseError, match="not allowed"):
        adjust(IMAGES, ["higher"], mock(adjust=[r, r]), 90, "fixed")


def test_adjust_rejects_unknown_primitive_and_bad_range():
    r1 = fenced({"commands": [{"side": "left", "primitive": "wave"}]})
    r2 = fenced({"commands": [{"side": "left", "primitive": "move_up", "frame_range": [0, 500]}]})
    with pytest.raises(AgentParseError):
        adjust(IMAGES, ["x"], mock(adjust=[r1, r2]), 90)


# ---- loop -----------------------------------------------------------------

class CountingRender:
    def __init__(self):
        self.calls = []

    def __call__(self, traj, indices):
        self.calls.append(list(indices))
        return [b"frame-%d" % i for i in indices]


def tiny_traj(model, T=30):
    return JointTrajectory(30.0, model.joint_names, np.tile(model.zero(), (T, 1)))


NOT_ALIGNED = fenced({"caption": "low", "aligned": False, "suggestions": ["raise the right hand"]})
ALIGNED = fenced({"caption": "ok", "aligned": True, "suggestions": []})
NO_OP = fenced({"commands": [{"side": "right", "primitive": "no_change"}]})


def test_loop_never_aligned_stops_after_two_adjustments(model):
    b = mock(classify=[fenced({"editable": True})], judge=[NOT_ALIGNED] * 5, adjust=[NO_OP] * 5)
    out, t = edit_loop(tiny_traj(model), "wave", model, CountingRender(), b, max_rounds=2)
    assert t.count("adjust") == 2
    assert t.count("judge") == 3
    assert not t.flagged


def test_loop_aligned_immediately(model):
    q = tiny_traj(model)
    b = mock(classify=[fenced({"editable": True})], judge=[ALIGNED])
    out, t = edit_loop(q, "wave", model, CountingRender(), b)
    assert t.count("adjust") == 0 and t.count("judge") == 1
    assert out.equals(q)


def test_loop_gate_false_skips_judge(model):
    q = tiny_traj(model)
    b = mock(classify=[fenced({"editable": False})])
    out, t = edit_loop(q, "wave", model, CountingRender(), b)
    assert t.count("judge") == 0
    assert out.equals(q)


@pytest.mark.parametrize("rounds", [0, 1, 3])
def test_loop_call_count_bound(model, rounds):
    b = mock(classify=[fenced({"editable": True})], judge=[NOT_ALIGNED] * 9, adjust=[NO_OP] * 9)
    _, t = edit_loop(tiny_traj(model), "wave", model, CountingRender(), b, max_rounds=rounds)
    assert t.count("judge") <= rounds + 1
    assert t.count("adjust") == rounds


def test_loop_applies_edits(sample, skeleton, model):
    from wholebody.retarget import retarget_motion
    q = retarget_motion(sample, model, skeleton)
    up = fenced({"commands": [{"side": "right", "primitive": "move_up", "frame_range": [40, 50]}]})
    b = mock(classify=[fenced({"editable": True})], judge=[NOT_ALIGNED, ALIGNED], adjust=[up])
    render = CountingRender()
    out, t = edit_loop(q, "wave", model, render, b, k=4)
    assert not out.equals(q)
    assert render.calls == [[0, 30, 59, 89]] * 3


def test_loop_backend_failure_flags_and_keeps_input(model):
    q = tiny_traj(model)
    b = mock(classify=[fenced({"editable": True})], judge=[NOT_ALIGNED])   # adjust missing
    out, t = edit_loop(q, "wave", model, CountingRender(), b)
    assert t.flagged and "adjust" in t.flag_reason
    assert out.equals(q)
    assert b.mismatches and b.mismatches[0]["role"] == "adjust"


def test_transcript_roundtrip_and_replay(tmp_path, model):
    script = sample_mock_script()
    q = tiny_traj(model)
    b = MockChatBackend(script)
    t = AgentTranscript()
    split_description("a person waves", b, t)
    edit_loop(q, "wave", model, CountingRender(), b, transcript=t)
    path = tmp_path / "t.json"
    t.save(path)
    again = AgentTranscript.load(path)
    assert again.to_json() == t.to_json()
    assert all(r.wall_time == 0.0 for r in again.records)
    # replaying the recorded raw responses reproduces the same transcript
    replay = MockChatBackend.from_transcript(again)
    t2 = AgentTranscript()
    split_description("a person waves", replay, t2)
    edit_loop(q, "wave", model, CountingRender(), replay, transcript=t2)
    assert t2.to_json() == t.to_json()


def test_mock_without_response_raises():
    with pytest.raises(AgentError):
        mock().complete("judge", [])
