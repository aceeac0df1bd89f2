from __future__ import annotations

import json
import threading
from dataclasses import replace
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from affordgen.geometry import Pose
from affordgen.tasks import (
    CompileError,
    RemoteSceneError,
    SceneObject,
    SceneValidationError,
    compile_task,
    request_scene,
    scene_to_json,
    validate_scene,
)


class TestCompile:
    def test_pick_mug_by_handle(self):
        spec, scene = compile_task("pick up the mug by its handle", "fr3", seed=0)
        assert spec.category == "grasping"
        assert spec.skills[0].kind == "pick"
        assert spec.skills[0].grasp_phrase == "graspable handle"
        assert spec.goals[0].predicate == "displaced_beyond"
        assert spec.goals[0].threshold == pytest.approx(0.10)

    def test_empty_description(self):
        with pytest.raises(CompileError):
            compile_task("", "fr3", 0)

    def test_unmatched_clause_names_templates(self):
        with pytest.raises(CompileError, match="pick up the"):
            compile_task("juggle the mug", "fr3", 0)

    def test_three_skill_composite(self):
        spec, scene = compile_task(
            "pick up the cup then pour into the pan then place the cup on the shelf", "fr3", 0
        )
        assert spec.category == "long_horizon"
        assert [s.kind for s in spec.skills] == ["pick", "pour", "place"]
        # instrumental pick goal dropped; pour + place goals remain
        assert [g.predicate for g in spec.goals] == ["poured_into", "on_top_of"]

    def test_pour_source_phrases(self):
        spec, _ = compile_task("pour from the mug into the bowl", "fr3", 0)
        assert spec.skills[0].grasp_phrase == "graspable handle"
        assert spec.skills[0].aux_phrase == "pourable rim"

    def test_objects_spaced_apart(self):
        _, scene = compile_task(
            "pick up the cup then pour into the pan then place the cup on the shelf", "fr3", 4
        )
        for i, a in enumerate(scene.objects):
            for b in scene.objects[i + 1 :]:
                gap = np.linalg.norm(a.pose.translation[:2] - b.pose.translation[:2])
                assert gap >= 0.05

    def test_determinism(self):
        a = compile_task("place the ball in the bowl", "panda", seed=12)
        b = compile_task("place the ball in the bowl", "panda", seed=12)
        assert scene_to_json(a[1]) == scene_to_json(b[1])

    def test_compiled_scene_validates(self, library):
        for desc in (
            "hang the mug on the rack",
            "stack the block_small on the block_medium",
            "pull open the drawer",
        ):
            _, scene = compile_task(desc, "fr3", 1)
            assert validate_scene(scene, library).ok

    def test_unknown_object(self):
        with pytest.raises(CompileError, match="xyzzy"):
            compile_task("pick up the xyzzy", "fr3", 0)

    def test_goal_override(self):
        spec, _ = compile_task(
            "pick up the ball", "fr3", 0, goal_overrides={"displaced_beyond": 0.25}
        )
        assert spec.goals[0].threshold == pytest.approx(0.25)


class TestValidateScene:
    def test_out_of_bounds(self, library):
        _, scene = compile_task("pick up the ball", "fr3", 0)
        bad = replace(
            scene,
            objects=(replace(scene.objects[0], pose=Pose.from_rpy((1e6, 0, 0))),),
        )
        report = validate_scene(bad, library)
        assert not report.ok
        assert any("bounds" in v for v in report.violations)

    def test_duplicate_ids(self, library):
        _, scene = compile_task("pick up the ball", "fr3", 0)
        dup = replace(scene, objects=scene.objects + scene.objects)
        report = validate_scene(dup, library)
        assert any("duplicate" in v for v in report.violations)

    def test_unknown_asset(self, library):
        _, scene = compile_task("pick up the ball", "fr3", 0)
        bad = replace(scene, objects=(replace(scene.objects[0], asset_id="xyz"),))
        report = validate_scene(bad, library)
        assert any("xyz" in v for v in report.violations)

    def test_interpenetration(self, library):
        _, scene = compile_task("pick up the ball", "fr3", 0)
        twin = SceneObject("ball_2", "ball", scene.objects[0].pose)
        report = validate_scene(replace(scene, objects=scene.objects + (twin,)), library)
        assert any("interpenetrate" in v for v in report.violations)


class _Handler(BaseHTTPRequestHandler):
    reply: dict = {}

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        assert body["schema"].startswith("scene-request/")
        payload = json.dumps(self.reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def scene_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server, f"http://127.0.0.1:{server.server_address[1]}/"
    server.shutdown()


class TestRemoteScene:
    def test_well_formed_reply(self, scene_server, library):
        server, url = scene_server
        _Handler.reply = {
            "objects": [
                {"asset_id": "ball", "xyz": [0.45, 0.0, 0.0]},
                {"asset_id": "bowl", "xyz": [0.6, 0.2, 0.0]},
            ],
        }
        scene = request_scene("put the ball in the bowl", endpoint=url)
        assert validate_scene(scene, library).ok

    def test_unknown_asset_rejected(self, scene_server):
        server, url = scene_server
        _Handler.reply = {"objects": [{"asset_id": "xyz", "xyz": [0.4, 0, 0]}]}
        with pytest.raises(SceneValidationError, match="xyz"):
            request_scene("anything", endpoint=url)

    def test_interpenetration_rejected(self, scene_server):
        server, url = scene_server
        _Handler.reply = {
            "objects": [
                {"object_id": "a", "asset_id": "ball", "xyz": [0.45, 0.0, 0.0]},
                {"object_id": "b", "asset_id": "ball", "xyz": [0.45, 0.0, 0.0]},
            ]
        }
        with pytest.raises(SceneValidationError, match="interpenetrate"):
            request_scene("anything", endpoint=url)

    def test_transport_failure(self):
        with pytest.raises(RemoteSceneError):
            request_scene("anything", endpoint="http://127.0.0.1:9/", timeout=0.5)

    def test_missing_endpoint(self, monkeypatch):
        monkeypatch.delenv("AFFORDGEN_SCENE_ENDPOINT", raising=False)
        with pytest.raises(RemoteSceneError, match="AFFORDGEN_SCENE_ENDPOINT"):
            request_scene("anything")
