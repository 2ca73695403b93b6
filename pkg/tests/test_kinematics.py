import copy
import itertools
import json
import math

import numpy as np
import pytest

from conftest import random_chain, two_link, two_link_fk, two_link_ik
from wholebody.errors import ConfigError, ModelError, NumericError
from wholebody.kinematics import (FrameTarget, KinematicModel, axis_angle_matrix, forward_kinematics,
                                  ik_step, jacobian, joint_kinematics, load_model, quat_to_matrix,
                                  save_model, task_error)


def numeric_jacobian(model, q, frame, h=1e-6):
    J = np.zeros((3, model.n_joints))
    for i in range(model.n_joints):
        dq = np.zeros(model.n_joints)
        dq[i] = h
        J[:, i] = (forward_kinematics(model, q + dq)[frame]
                   - forward_kinematics(model, q - dq)[frame]) / (2 * h)
    return J


def test_two_link_fk_matches_closed_form():
    m = two_link()
    for q in [(0.0, 0.0), (0.3, -1.1), (math.pi / 2, math.pi / 2)]:
        qq = np.array([*q, 0.0])
        np.testing.assert_allclose(forward_kinematics(m, qq)["tip"], two_link_fk(q), atol=1e-14)


def test_rotation_helpers():
    np.testing.assert_allclose(quat_to_matrix((1, 0, 0, 0)), np.eye(3))
    R = axis_angle_matrix(np.array([0.0, 0.0, 1.0]), math.pi / 2)
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    h = math.sqrt(0.5)
    np.testing.assert_allclose(quat_to_matrix((h, 0, 0, h)), R, atol=1e-15)


def test_fk_preserves_joint_distances_along_chain():
    rng = np.random.default_rng(3)
    m = random_chain(rng, 6)
    p0, _ = joint_kinematics(m, m.zero())
    for _ in range(5):
        p, _ = joint_kinematics(m, rng.uniform(-3, 3, m.n_joints))
        for i, j in enumerate(m.joints):
            if j.parent is not None:
                assert np.linalg.norm(p[i] - p[j.parent]) == pytest.approx(
                    np.linalg.norm(p0[i] - p0[j.parent]), abs=1e-12)


def test_jacobian_matches_central_differences_random_models():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = random_chain(rng)
        q = rng.uniform(-math.pi, math.pi, m.n_joints)
        frame = f"j{int(rng.integers(0, m.n_joints))}"
        err = np.abs(jacobian(m, q, frame) - numeric_jacobian(m, q, frame)).max()
        assert err < 1e-5


def test_jacobian_columns_zero_off_chain(model):
    J = jacobian(model, model.zero(), "left_wrist")
    chain = set(model.chain("left_wrist"))
    for i in range(model.n_joints):
        if i not in chain:
            assert np.all(J[:, i] == 0.0)


def test_ik_two_link_reaches_analytic_solution():
    m = two_link()
    rng = np.random.default_rng(1)
    for _ in range(100):
        q_star = np.array([rng.uniform(-math.pi, math.pi), rng.choice([-1, 1]) * rng.uniform(0.3, 2.6)])
        p = two_link_fk(q_star)
        q = m.zero()
        for _ in range(50):
            q = ik_step(m, q, [FrameTarget("tip", p)], dt=0.02)
        assert np.linalg.norm(forward_kinematics(m, q)["tip"] - p) < 1e-3
        # the solution is one of the two analytic branches (angles mod 2 pi)
        d = [np.abs(np.angle(np.exp(1j * (q[:2] - s)))).max() for s in two_link_ik(p)]
        assert min(d) < 1e-2


def test_ik_saturates_at_limit_matching_grid_optimum():
    # elbow locked to [0, 0.5]: targets needing more bend saturate at the limit
    m = two_link(lo=-0.5, hi=0.5)
    target = two_link_fk((0.4, 1.6))
    q = np.array([0.0, 0.1, 0.0])
    for _ in range(300):
        q = ik_step(m, q, [FrameTarget("tip", target)], dt=0.02)
    assert m.within_limits(q)
    grid = np.linspace(-0.5, 0.5, 401)
    best = min(((a, b) for a, b in itertools.product(grid, grid)),
               key=lambda ab: np.sum((two_link_fk(ab) - target) ** 2))
    err = np.linalg.norm(forward_kinematics(m, q)["tip"] - target)
    best_err = np.linalg.norm(two_link_fk(best) - target)
    assert err <= best_err + 1e-3
    assert q[1] == pytest.approx(0.5)


def test_ik_step_respects_velocity_limit():
    m = two_link(velocity=1.0)
    q = ik_step(m, np.array([0.0, 0.5, 0.0]), [FrameTarget("tip", [0.0, 1.0, 0.0])], dt=0.01)
    assert np.all(np.abs(q[:2] - [0.0, 0.5]) <= 0.01 + 1e-15)


def test_ik_step_reduces_error_and_keeps_fixed_joints():
    m = two_link()
    tgt = [FrameTarget("tip", [0.3, 0.5, 0.0])]
    q0 = np.array([0.2, 0.4, 0.0])
    q1 = ik_step(m, q0, tgt)
    assert task_error(m, q1, tgt) < task_error(m, q0, tgt)
    assert q1[2] == 0.0


def test_ik_step_rejects_bad_inputs():
    m = two_link()
    tgt = [FrameTarget("tip", [0.3, 0.5, 0.0])]
    with pytest.raises(NumericError):
        ik_step(m, np.array([np.nan, 0, 0]), tgt)
    with pytest.raises(NumericError):
        ik_step(m, m.zero(), [FrameTarget("tip", [np.inf, 0, 0])])
    with pytest.raises(ConfigError):
        ik_step(m, m.zero(), tgt, dt=0.0)
    with pytest.raises(ConfigError):
        ik_step(m, np.zeros(5), tgt)


def test_empty_targets_hold_configuration():
    m = two_link()
    q = np.array([0.3, -0.2, 0.0])
    np.testing.assert_allclose(ik_step(m, q, []), q, atol=1e-15)


def test_humanoid_model_contract(model):
    assert len(model.groups["fingers"]) == 12
    assert len(model.groups["neck"]) == 3
    for f in ("pelvis", "left_wrist", "right_wrist", "head", "left_ankle"):
        assert f in model.frames
    assert model.within_limits(model.zero())


def test_model_roundtrip(tmp_path, model):
    path = tmp_path / "m.json"
    save_model(model, path)
    again = load_model(path)
    assert again.joint_names == model.joint_names
    q = np.linspace(-0.1, 0.1, model.n_joints)
    np.testing.assert_array_equal(joint_kinematics(again, q)[0], joint_kinematics(model, q)[0])


def _bad(model, mutate):
    d = copy.deepcopy(model.to_dict())
    mutate(d)
    return d


@pytest.mark.parametrize("mutate,match", [
    (lambda d: d["joints"][3].update(axis=[0, 0, 2]), "unit"),
    (lambda d: d["joints"][3].update(parent=10), "parent"),
    (lambda d: d["joints"][3].update(origin_rotation=[1, 1, 0, 0]), "quaternion"),
    (lambda d: d["joints"][3].update(limit_lo=1.0, limit_hi=0.0), "limit_lo"),
    (lambda d: d["frames"].pop("left_wrist"), "left_wrist"),
    (lambda d: d["groups"].update(fingers=d["groups"]["fingers"][:11]), "finger"),
    (lambda d: d["joints"][3].update(axis=[0, float("nan"), 1]), "non-finite|unit"),
])
def test_model_validation_errors(model, tmp_path, mutate, match):
    data = _bad(model, mutate)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data, indent=2))
    with pytest.raises(ModelError, match=match):
        load_model(path)


def test_model_error_reports_line(model, tmp_path):
    data = _bad(model, lambda d: d["joints"][5].update(axis=[0, 0, 3]))
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data, indent=2))
    with pytest.raises(ModelError, match=r"bad\.json:\d+"):
        load_model(path)


def test_clamp_and_limits(model):
    q = np.full(model.n_joints, 10.0)
    c = model.clamp(q)
    assert model.within_limits(c)
    assert not model.within_limits(q)
    assert isinstance(model, KinematicModel)
