from __future__ import annotations

import json
from pathlib import Path

import pytest

from affordgen.cli import main


class TestCompileTask:
    def test_ok(self, capsys, tmp_path):
        out = tmp_path / "task.json"
        assert main(["compile-task", "pick up the ball", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["task"]["category"] == "grasping"

    def test_bad_description_exit_2(self, capsys):
        assert main(["compile-task", "juggle the moon"]) == 2


class TestGenAndInspect:
    def test_round_trip(self, tmp_path, capsys):
        out = tmp_path / "ds"
        assert main(["gen", "pick up the ball", "--demos", "2", "--out", str(out), "--seed", "3"]) == 0
        assert (out / "manifest.json").exists()
        assert main(["inspect", str(out)]) == 0
        captured = capsys.readouterr()
        assert "demo_00000.afds" in captured.out


class TestValidate:
    def test_asset_ok(self, tmp_path):
        import importlib.resources as res

        text = res.files("affordgen").joinpath("data/assets/mug.yaml").read_text()
        p = tmp_path / "mug.yaml"
        p.write_text(text)
        assert main(["validate", str(p), "--kind", "asset"]) == 0

    def test_bad_asset_exit_2(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("schema: asset/1\nid: bad\nshapes:\n  - {kind: sphere, radius: -1, part: 0}\n")
        assert main(["validate", str(p), "--kind", "asset"]) == 2

    def test_task_file(self, tmp_path):
        p = tmp_path / "task.yaml"
        p.write_text("id: t1\ncategory: grasping\ndescription: pick up the ball\n")
        assert main(["validate", str(p), "--kind", "task"]) == 0

    def test_task_category_mismatch_exit_2(self, tmp_path):
        p = tmp_path / "task.yaml"
        p.write_text("id: t1\ncategory: pouring\ndescription: pick up the ball\n")
        assert main(["validate", str(p), "--kind", "task"]) == 2

    def test_scene_json(self, tmp_path):
        p = tmp_path / "scene.json"
        p.write_text(json.dumps({"objects": [{"asset_id": "ball", "xyz": [0.45, 0, 0]}]}))
        assert main(["validate", str(p), "--kind", "scene"]) == 0

    def test_scene_out_of_bounds_exit_2(self, tmp_path):
        p = tmp_path / "scene.json"
        p.write_text(json.dumps({"objects": [{"asset_id": "ball", "xyz": [1e6, 0, 0]}]}))
        assert main(["validate", str(p), "--kind", "scene"]) == 2


class TestBenchGate:
    def test_gate_exit_3(self, tmp_path):
        # grasp_ball generates reliably: an impossible gate (>100%) trips exit 3
        code = main(
            [
                "bench-gen",
                "--rollouts", "1",
                "--gate", "1.01",
                "--category", "grasping",
                "--out", str(tmp_path / "r.txt"),
            ]
        )
        assert code == 3
