import math

import numpy as np
import pytest

from wholebody import assets
from wholebody.kinematics import KinematicModel


@pytest.fixture(scope="session")
def model():
    return assets.load_bundled_model()


@pytest.fixture(scope="session")
def skeleton():
    return assets.load_bundled_skeleton()


@pytest.fixture(scope="session")
def sample(skeleton):
    from wholebody.motion import load_motion
    return load_motion(assets.bundled_motion_path())


@pytest.fixture(scope="session")
def mock_script_path():
    return assets.bundled_mock_script_path()


def random_unit(rng, n=3):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


def random_chain(rng, n_joints=None, branching=True, velocity=50.0):
    """Random tree of revolute joints with random offsets, rotations and axes."""
    n = n_joints or int(rng.integers(2, 9))
    joints = []
    for i in range(n):
        parent = None if i == 0 else int(rng.integers(0, i)) if branching else i - 1
        joints.append({
            "name": f"j{i}",
            "parent": parent,
            "origin_translation": (rng.normal(size=3) * 0.3).tolist(),
            "origin_rotation": random_unit(rng, 4).tolist(),
            "axis": random_unit(rng).tolist(),
            "limit_lo": -math.pi,
            "limit_hi": math.pi,
            "velocity_limit": velocity,
        })
    frames = {f"j{i}": i for i in range(n)}
    return KinematicModel.from_dict({"joints": joints, "frames": frames}, require_humanoid=False)


def two_link(l1=0.6, l2=0.4, velocity=50.0, lo=-math.pi, hi=math.pi):
    """Planar arm in the x-y plane rotating about +z; ``tip`` is the end point."""
    j = lambda name, parent, x: {"name": name, "parent": parent, "origin_translation": [x, 0, 0],
                                 "axis": [0, 0, 1], "limit_lo": lo, "limit_hi": hi,
                                 "velocity_limit": velocity}
    data = {"joints": [j("shoulder", None, 0.0), j("elbow", 0, l1),
                       {**j("tip", 1, l2), "limit_lo": 0.0, "limit_hi": 0.0}],
            "frames": {"shoulder": 0, "elbow": 1, "tip": 2}}
    return KinematicModel.from_dict(data, require_humanoid=False)


def two_link_fk(q, l1=0.6, l2=0.4):
    return np.array([l1 * math.cos(q[0]) + l2 * math.cos(q[0] + q[1]),
                     l1 * math.sin(q[0]) + l2 * math.sin(q[0] + q[1]), 0.0])


def two_link_ik(p, l1=0.6, l2=0.4):
    """Both analytic solutions (elbow up / down) for a planar target."""
    x, y = p[0], p[1]
    c2 = (x * x + y * y - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    c2 = min(1.0, max(-1.0, c2))
    out = []
    for s in (1.0, -1.0):
        q2 = s * math.acos(c2)
        q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
        out.append(np.array([q1, q2]))
    return out


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory, mock_script_path):
    """Two full pipeline runs through the CLI entry point with the bundled mock script."""
    from wholebody.cli import main
    outs = []
    for name in ("run_a", "run_b"):
        out = tmp_path_factory.mktemp(name)
        code = main(["pipeline", "--mock-script", str(mock_script_path), "--out", str(out)])
        assert code == 0
        outs.append(out)
    return outs


# ---- acceptance reporting --------------------------------------------------

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion with a summary line")
    config._acceptance_lines = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
    status = "PASS" if rep.passed else "FAIL"
    item.config._acceptance_lines.append(f"{status}  {mark.args[0]}: {detail}")


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
