import json
import subprocess
import sys
import urllib.request

import pytest

from inspectplan.cli import main
from inspectplan.config import PlannerConfig
from inspectplan.fixtures import scene_path, task_path
from inspectplan.pipeline import open_workspace
from inspectplan.stub_oracle import start_stub


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["plan", "--scene", str(scene_path("two_room")), "--task", str(task_path("two_room")),
                 "--out", str(out)]) == 0
    return out


def test_validate_ok(run_dir, capsys):
    code = main(["validate", "--traj", str(run_dir / "trajectory.json"), "--scene", str(scene_path("two_room")),
                 "--task", str(task_path("two_room"))])
    out = capsys.readouterr().out
    assert code == 0
    assert "PASS collision" in out and json.loads(out.splitlines()[-1])["passed"]


def test_validate_failure_exit(run_dir, tmp_path, capsys):
    doc = json.loads((run_dir / "trajectory.json").read_text())
    doc["segments"][0]["ctrl"][2][2] += 1000.0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code = main(["validate", "--traj", str(bad), "--scene", str(scene_path("two_room")),
                 "--task", str(task_path("two_room"))])
    assert code == 1 and "FAIL collision" in capsys.readouterr().out


def test_export_all_formats(run_dir, tmp_path):
    for fmt in ("csv", "ply", "json"):
        out = tmp_path / f"t.{fmt}"
        assert main(["export", "--traj", str(run_dir / "trajectory.json"), "--format", fmt, "--out", str(out)]) == 0
        assert out.stat().st_size > 0
    assert main(["export", "--traj", str(run_dir / "trajectory.json"), "--format", "obj",
                 "--out", str(tmp_path / "x")]) == 2


def test_report(run_dir, tmp_path):
    assert main(["report", "--run", str(run_dir), "--scene", str(scene_path("two_room")), "--out", str(tmp_path)]) == 0
    for name in ("top_view.png", "side_view.png", "profiles.png"):
        assert (tmp_path / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    rows = (tmp_path / "profile.csv").read_text().splitlines()
    assert rows[0] == "t,speed,curvature,jerk" and len(rows) == 501


def test_input_error_exit(tmp_path, capsys):
    code = main(["plan", "--scene", str(scene_path("two_room")), "--task", str(task_path("two_room_behind")),
                 "--out", str(tmp_path)])
    assert code == 2
    assert "[task] InputError" in capsys.readouterr().err
    assert main(["plan", "--scene", str(tmp_path / "none.obj"), "--task", str(task_path("two_room")),
                 "--out", str(tmp_path)]) == 2


def test_coverage_exit(tmp_path, capsys):
    code = main(["plan", "--scene", str(scene_path("two_room")), "--task", str(task_path("two_room_unreachable")),
                 "--out", str(tmp_path)])
    assert code == 3
    assert "vault" in capsys.readouterr().err


def test_subdivision_exit(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"spline": {"max_subdiv_rounds": 0}}))
    code = main(["plan", "--scene", str(scene_path("l_corridor")), "--task", str(task_path("l_corridor")),
                 "--config", str(cfg), "--out", str(tmp_path / "run")])
    assert code == 4


def test_remote_protocol_exit(tmp_path):
    server = start_stub("malformed")
    try:
        code = main(["plan", "--scene", str(scene_path("two_room")), "--task", str(task_path("two_room")),
                     "--oracle", "remote", "--oracle-url", server.url, "--out", str(tmp_path)])
    finally:
        server.shutdown()
    assert code == 5


def test_remote_needs_url(tmp_path):
    assert main(["plan", "--scene", str(scene_path("two_room")), "--task", str(task_path("two_room")),
                 "--oracle", "remote", "--out", str(tmp_path)]) == 2


def test_stub_oracle_subprocess():
    proc = subprocess.Popen([sys.executable, "-m", "inspectplan.cli", "stub-oracle", "--mode", "mirror",
                             "--scene", str(scene_path("two_room")), "--task", str(task_path("two_room")),
                             "--port", "0"], stdout=subprocess.PIPE, text=True)
    try:
        line = proc.stdout.readline()
        assert line.startswith("serving mirror oracle at http://")
        url = line.split()[-1]
        ws = open_workspace(scene_path("two_room"), task_path("two_room"), PlannerConfig(), oracle=object())
        poi = ws.task.pois[0]
        body = json.dumps({"poi": {"name": poi.name, "relation": poi.relation.value, "aabb": poi.aabb.to_json()},
                           "position": [1.0, 1.0, 1.0]}).encode()
        req = urllib.request.Request(url + "/assess", data=body, method="POST")
        with urllib.request.urlopen(req, timeout=10) as resp:
            doc = json.loads(resp.read())
        assert set(doc) == {"visible", "saliency", "relation_ok"}
    finally:
        proc.terminate()
        proc.wait(timeout=10)
