import json

import pytest

from voxbridge.cli import main
from voxbridge.mesh import load_mesh


@pytest.fixture
def world_path(tmp_path):
    p = tmp_path / "world.json"
    p.write_text(
        json.dumps(
            {
                "bounds": {"min": [0, 0, 0], "max": [3.0, 3.0, 2.0]},
                "obstacles": [{"min": [1.3, 1.3, 0.0], "max": [1.7, 1.7, 2.0]}],
            }
        )
    )
    return p


@pytest.fixture
def script_path(tmp_path):
    p = tmp_path / "script.json"
    p.write_text(json.dumps([{"stamp": 0.5, "position": [2.5, 0.5, 1.0]}]))
    return p


class TestSim:
    def test_sim_runs_and_writes_outputs(self, world_path, script_path, tmp_path, capsys):
        log = tmp_path / "session.jsonl"
        snap = tmp_path / "snap.json"
        code = main(
            [
                "sim",
                "--world", str(world_path),
                "--script", str(script_path),
                "--session-log", str(log),
                "--snapshot-out", str(snap),
                "--duration", "30",
            ]
        )
        assert code == 0
        assert log.exists() and snap.exists()
        out = capsys.readouterr().out
        assert "mission finished" in out
        doc = json.loads(snap.read_text())
        assert doc["resolution"] == 0.1
        assert len(doc["voxels"]) % 3 == 0

    def test_missing_world_is_usage_error(self, capsys):
        assert main(["sim"]) == 2
        assert "world" in capsys.readouterr().err

    def test_nonexistent_world_is_usage_error(self):
        assert main(["sim", "--world", "/nope/nothing.json"]) == 2

    def test_config_file_supplies_world(self, world_path, script_path, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps({"world": str(world_path), "script": str(script_path), "duration_s": 30})
        )
        assert main(["sim", "--config", str(cfg)]) == 0

    def test_env_override(self, world_path, script_path, monkeypatch):
        monkeypatch.setenv("VB_WORLD", str(world_path))
        monkeypatch.setenv("VB_SCRIPT", str(script_path))
        monkeypatch.setenv("VB_DURATION_S", "30")
        assert main(["sim"]) == 0

    def test_bad_env_value_is_usage_error(self, world_path, monkeypatch):
        monkeypatch.setenv("VB_SEED", "not-a-number")
        assert main(["sim", "--world", str(world_path)]) == 2


def test_missing_console_dir_is_usage_error(world_path, script_path):
    code = main(
        [
            "mission",
            "--world", str(world_path),
            "--script", str(script_path),
            "--serve-console", "/nope/console",
            "--port", "0",
        ]
    )
    assert code == 2


class TestMetrics:
    def test_report_from_log(self, tmp_path, capsys):
        log = tmp_path / "s.jsonl"
        log.write_text(
            '{"stamp": 0.0, "kind": "task_begin"}\n'
            '{"stamp": 1.0, "kind": "target_command", "position": [1, 1, 1], "seq": 1}\n'
            '{"stamp": 4.0, "kind": "task_end"}\n'
        )
        tasks = tmp_path / "tasks.json"
        tasks.write_text(json.dumps({"positions": [[1, 1, 2]]}))
        assert main(["metrics", str(log), "--tasks", str(tasks), "--json"]) == 0
        out = capsys.readouterr().out
        assert "command_count" in out
        rep = json.loads(out.strip().splitlines()[-1])
        assert rep["command_count"] == 1
        assert rep["composition_error"] == pytest.approx(1.0)

    def test_malformed_log_is_usage_error(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("garbage\n")
        assert main(["metrics", str(bad)]) == 2

    def test_missing_log_is_usage_error(self):
        assert main(["metrics", "/nope/never.jsonl"]) == 2


class TestVoxelMesh:
    def test_single_voxel_snapshot_makes_cube(self, tmp_path, capsys):
        snap = tmp_path / "snap.json"
        snap.write_text(json.dumps({"resolution": 0.1, "voxels": [0, 0, 0]}))
        out = tmp_path / "out.ply"
        assert main(["voxel-mesh", str(snap), "-o", str(out)]) == 0
        mesh = load_mesh(out)
        assert len(mesh.triangles) == 12
        assert "12 triangles" in capsys.readouterr().out

    def test_bad_snapshot_json_is_usage_error(self, tmp_path):
        snap = tmp_path / "snap.json"
        snap.write_text("{broken")
        assert main(["voxel-mesh", str(snap), "-o", str(tmp_path / "o.ply")]) == 2


class TestReplay:
    def test_batch_replay_exits_cleanly(self, tmp_path):
        log = tmp_path / "s.jsonl"
        log.write_text(
            '{"stamp": 0.0, "kind": "pose_sample", "position": [0, 0, 0], "yaw": 0.0}\n'
            '{"stamp": 0.5, "kind": "pose_sample", "position": [0.5, 0, 0], "yaw": 0.0}\n'
        )
        import socket

        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
        s.close()
        assert main(["replay", str(log), "--speed", "batch", "--port", str(port)]) == 0

    def test_bad_speed_is_usage_error(self, tmp_path):
        log = tmp_path / "s.jsonl"
        log.write_text('{"stamp": 0.0, "kind": "pose_sample"}\n')
        assert main(["replay", str(log), "--speed", "-1"]) == 2
