"""Task compilation: natural-language descriptions to TaskSpec + SceneConfig.

A deterministic template grammar replaces any hosted model; an optional HTTP
client can instead request scenes from a remote generator, with both paths
funneled through the same validator.
"""

from __future__ import annotations

import json
import math
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose, collide, quat_from_axis_angle
from .world import AssetLibrary, default_library

CATEGORIES = (
    "grasping",
    "placing",
    "stacking",
    "push_pull",
    "pouring",
    "mug_hanging",
    "long_horizon",
)

SKILL_KINDS = ("pick", "place", "pour", "push", "pull", "hang", "stack")

WORKSPACE_LO = (0.2, -0.34, 0.0)
WORKSPACE_HI = (0.82, 0.34, 0.6)
SUPPORT_HEIGHT = 0.0
MIN_SPACING = 0.05

LIFT_THRESHOLD = 0.10
PUSH_THRESHOLD = 0.05
DRAWER_OPEN_THRESHOLD = 0.08
POUR_FRACTION = 0.7

ENDPOINT_ENV = "AFFORDGEN_SCENE_ENDPOINT"
SCENE_SCHEMA_VERSION = "scene-request/1"

ALIASES = {
    "cup": "cup_wide",
    "basket": "basket_wide",
    "block": "block_medium",
    "hook": "hook_stand",
}


class CompileError(ValueError):
    """No grammar template matched; the message names the nearest template."""


class SceneValidationError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class RemoteSceneError(RuntimeError):
    pass


@dataclass(frozen=True)
class GoalCondition:
    predicate: str
    subject: str
    reference: str = ""
    threshold: float = 0.0
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    extra_objects: tuple[str, ...] = ()


@dataclass(frozen=True)
class SkillSpec:
    kind: str
    object_id: str
    target_id: str = ""
    grasp_phrase: str = "graspable body"
    aux_phrase: str = ""  # e.g. tilt origin for pour
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class SceneObject:
    object_id: str
    asset_id: str
    pose: Pose
    scale: float = 1.0


@dataclass(frozen=True)
class RobotPlacement:
    embodiment: str
    base_pose: Pose
    home: np.ndarray


@dataclass(frozen=True)
class SceneConfig:
    objects: tuple[SceneObject, ...]
    robot: RobotPlacement
    workspace: tuple[tuple[float, float, float], tuple[float, float, float]] = (WORKSPACE_LO, WORKSPACE_HI)
    support_surface_height: float = SUPPORT_HEIGHT

    def get(self, object_id: str) -> SceneObject:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)


@dataclass(frozen=True)
class TaskSpec:
    id: str
    category: str
    description: str
    embodiment: str
    skills: tuple[SkillSpec, ...]
    goals: tuple[GoalCondition, ...]

    def __post_init__(self):
        if not self.skills:
            raise ValueError("TaskSpec requires at least one skill")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")


_TEMPLATES = (
    ("pick", re.compile(r"^pick up the (\w+?)(?: by its (\w+))?$")),
    ("place", re.compile(r"^place the (\w+) (on|onto|in|into) the (\w+)$")),
    ("pour", re.compile(r"^pour(?: from the (\w+))? into the (\w+)$")),
    ("push", re.compile(r"^push the (\w+)(?: (forward|backward|left|right))?$")),
    ("pull", re.compile(r"^pull open the (\w+)$")),
    ("hang", re.compile(r"^hang the (\w+) on the (\w+)$")),
    ("stack", re.compile(r"^stack the (\w+) on the (\w+)$")),
)

_PUSH_DIRS = {
    "forward": (1.0, 0.0, 0.0),
    "backward": (-1.0, 0.0, 0.0),
    "left": (0.0, 1.0, 0.0),
    "right": (0.0, -1.0, 0.0),
}


def _resolve_asset(word: str, library: AssetLibrary) -> str:
    asset_id = ALIASES.get(word, word)
    if asset_id not in library:
        raise CompileError(f"unknown object {word!r}; not in the asset library")
    return asset_id


def _parse_clause(clause: str, library: AssetLibrary, held: str | None) -> tuple[SkillSpec, str | None]:
    """One clause -> (skill, object id now held). `held` carries across pours."""
    clause = clause.strip()
    for kind, pattern in _TEMPLATES:
        m = pattern.match(clause)
        if m is None:
            continue
        if kind == "pick":
            obj = _resolve_asset(m.group(1), library)
            part = m.group(2)
            phrase = f"graspable {part}" if part else "graspable body"
            return SkillSpec("pick", obj, grasp_phrase=phrase), obj
        if kind == "place":
            obj = _resolve_asset(m.group(1), library)
            target = _resolve_asset(m.group(3), library)
            mode = "in" if m.group(2) in ("in", "into") else "on"
            return SkillSpec("place", obj, target, direction=(0, 0, 1) if mode == "on" else (0, 0, -1)), None
        if kind == "pour":
            src_word = m.group(1)
            if src_word is None:
                if held is None:
                    raise CompileError("pour without a source requires a preceding pick")
                src = held
            else:
                src = _resolve_asset(src_word, library)
            dst = _resolve_asset(m.group(2), library)
            return (
                SkillSpec("pour", src, dst, grasp_phrase="graspable handle", aux_phrase="pourable rim"),
                src,
            )
        if kind == "push":
            obj = _resolve_asset(m.group(1), library)
            direction = _PUSH_DIRS[m.group(2) or "forward"]
            return SkillSpec("push", obj, direction=direction), None
        if kind == "pull":
            obj = _resolve_asset(m.group(1), library)
            return SkillSpec("pull", obj, grasp_phrase="graspable handle"), None
        if kind == "hang":
            obj = _resolve_asset(m.group(1), library)
            rack = _resolve_asset(m.group(2), library)
            return SkillSpec("hang", obj, rack, grasp_phrase="hang grasp region"), None
        if kind == "stack":
            obj = _resolve_asset(m.group(1), library)
            base = _resolve_asset(m.group(2), library)
            return SkillSpec("stack", obj, base), None
    nearest = " | ".join(p.pattern for _, p in _TEMPLATES[:3])
    raise CompileError(f"no template matches {clause!r}; nearest templates: {nearest}")


def _skill_goals(skill: SkillSpec) -> list[GoalCondition]:
    if skill.kind == "pick":
        return [GoalCondition("displaced_beyond", skill.object_id, threshold=LIFT_THRESHOLD)]
    if skill.kind == "place":
        pred = "inside" if skill.direction[2] < 0 else "on_top_of"
        return [GoalCondition(pred, skill.object_id, skill.target_id)]
    if skill.kind == "pour":
        return [GoalCondition("poured_into", skill.object_id, skill.target_id, threshold=POUR_FRACTION)]
    if skill.kind == "push":
        return [
            GoalCondition(
                "displaced_beyond", skill.object_id, threshold=PUSH_THRESHOLD, direction=skill.direction
            )
        ]
    if skill.kind == "pull":
        return [GoalCondition("joint_opened", skill.object_id, threshold=DRAWER_OPEN_THRESHOLD)]
    if skill.kind == "hang":
        return [GoalCondition("hung_on", skill.object_id, skill.target_id)]
    if skill.kind == "stack":
        return [GoalCondition("stacked_order", skill.object_id, skill.target_id)]
    raise CompileError(f"unknown skill kind {skill.kind!r}")


_CATEGORY_BY_KIND = {
    "pick": "grasping",
    "place": "placing",
    "stack": "stacking",
    "push": "push_pull",
    "pull": "push_pull",
    "pour": "pouring",
    "hang": "mug_hanging",
}


def _placement_radius(asset_id: str, library: AssetLibrary) -> float:
    asset = library.get(asset_id)
    r = 0.0
    for s in asset.shapes.shapes:
        a, b, rad = s.bounding_capsule()
        wp = s.local_pose
        for end in (a, b):
            world = wp.apply(end)
            r = max(r, float(np.hypot(world[0], world[1])) + rad)
    return r


def _stable_seed(text: str) -> int:
    h = 2166136261
    for ch in text.encode():
        h = ((h ^ ch) * 16777619) & 0xFFFFFFFF
    return h


# slot centers fan out in front of the robot, reachable by every embodiment;
# far-flung corners first so large objects land well apart
_SLOTS = (
    (0.42, -0.26),
    (0.58, 0.2),
    (0.3, 0.16),
    (0.58, -0.05),
    (0.42, 0.05),
    (0.3, -0.1),
    (0.52, -0.26),
    (0.44, 0.26),
)


def _place_objects(
    asset_ids: list[str], library: AssetLibrary, seed: int
) -> list[SceneObject]:
    rng = np.random.default_rng(np.random.SeedSequence((0x7A5C, seed)))
    placed: list[tuple[str, str, float, np.ndarray]] = []
    # biggest objects claim slots first so spacing constraints stay satisfiable
    order = sorted(range(len(asset_ids)), key=lambda i: -_placement_radius(asset_ids[i], library))
    positions: dict[int, np.ndarray] = {}
    for idx in order:
        aid = asset_ids[idx]
        radius = _placement_radius(aid, library)
        chosen = None
        for sx, sy in _SLOTS:
            jitter = rng.uniform(-0.01, 0.01, size=2)
            cand = np.array([sx + jitter[0], sy + jitter[1]])
            ok = True
            for j, pos in positions.items():
                need = radius + _placement_radius(asset_ids[j], library) + MIN_SPACING
                if float(np.linalg.norm(cand - pos)) < need:
                    ok = False
                    break
            if ok:
                chosen = cand
                break
        if chosen is None:
            raise CompileError(f"could not place {aid!r} with required spacing")
        positions[idx] = chosen
    objects = []
    counts: dict[str, int] = {}
    for i, aid in enumerate(asset_ids):
        counts[aid] = counts.get(aid, 0) + 1
        oid = aid if counts[aid] == 1 else f"{aid}_{counts[aid]}"
        pos = positions[i]
        yaw = library.get(aid).default_yaw
        pose = Pose(
            quat_from_axis_angle((0.0, 0.0, 1.0), yaw),
            np.array([pos[0], pos[1], SUPPORT_HEIGHT]),
        )
        objects.append(SceneObject(oid, aid, pose))
    return objects


def compile_task(
    description: str,
    embodiment: str,
    seed: int,
    library: AssetLibrary | None = None,
    task_id: str | None = None,
    goal_overrides: dict | None = None,
) -> tuple[TaskSpec, SceneConfig]:
    """Grammar-compile a description into a task and its scene.

    Clauses join with "then"/"and" into long-horizon composites. Deterministic
    for fixed (description, embodiment, seed).
    """
    from .kinematics import load_embodiment

    if not description or not description.strip():
        raise CompileError("empty task description")
    library = library or default_library()
    text = description.strip().lower().rstrip(".")
    clauses = re.split(r"\s+(?:then|and)\s+", text)
    skills: list[SkillSpec] = []
    held: str | None = None
    for clause in clauses:
        skill, held = _parse_clause(clause, library, held)
        skills.append(skill)

    # object ids are asset ids (first use) — bind skills to instance ids
    asset_ids: list[str] = []
    for s in skills:
        for aid in (s.object_id, s.target_id):
            if aid and aid not in asset_ids:
                asset_ids.append(aid)
    objects = _place_objects(asset_ids, library, seed)
    id_map = {o.asset_id: o.object_id for o in reversed(objects)}
    skills = [
        replace(s, object_id=id_map[s.object_id], target_id=id_map.get(s.target_id, s.target_id))
        for s in skills
    ]
    goals: list[GoalCondition] = []
    for i, s in enumerate(skills):
        # a pick that feeds a later skill on the same object is instrumental;
        # its lift condition does not constrain the final state
        if s.kind == "pick" and any(t.object_id == s.object_id for t in skills[i + 1 :]):
            continue
        goals.extend(_skill_goals(s))
    if goal_overrides:
        goals = [
            replace(g, threshold=float(goal_overrides.get(g.predicate, g.threshold))) for g in goals
        ]
    category = (
        "long_horizon" if len(skills) > 1 else _CATEGORY_BY_KIND[skills[0].kind]
    )
    robot = load_embodiment(embodiment)
    spec = TaskSpec(
        id=task_id or f"task_{_stable_seed(text):08x}",
        category=category,
        description=description,
        embodiment=embodiment,
        skills=tuple(skills),
        goals=tuple(goals),
    )
    scene = SceneConfig(
        objects=tuple(objects),
        robot=RobotPlacement(embodiment, Pose.identity(), robot.home),
    )
    report = validate_scene(scene, library)
    if not report.ok:
        raise SceneValidationError(report.violations)
    return spec, scene


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()


def validate_scene(scene: SceneConfig, library: AssetLibrary | None = None) -> ValidationReport:
    """Run every SceneConfig invariant; returns the full violation list."""
    library = library or default_library()
    violations: list[str] = []
    seen = set()
    for obj in scene.objects:
        if obj.object_id in seen:
            violations.append(f"duplicate object id {obj.object_id!r}")
        seen.add(obj.object_id)
        if obj.asset_id not in library:
            violations.append(f"unknown asset {obj.asset_id!r}")
            continue
        lo, hi = np.asarray(scene.workspace[0]), np.asarray(scene.workspace[1])
        t = obj.pose.translation
        if not (np.all(t >= lo - 1e-9) and np.all(t <= hi + 1e-9)):
            violations.append(f"object {obj.object_id!r} out of workspace bounds at {t.tolist()}")
        if obj.scale <= 0:
            violations.append(f"object {obj.object_id!r} has non-positive scale")
    valid = [o for o in scene.objects if o.asset_id in library]
    for i in range(len(valid)):
        for j in range(i + 1, len(valid)):
            a = library.get(valid[i].asset_id).shapes.posed(valid[i].pose)
            b = library.get(valid[j].asset_id).shapes.posed(valid[j].pose)
            if collide(a, b).colliding:
                violations.append(
                    f"objects {valid[i].object_id!r} and {valid[j].object_id!r} interpenetrate"
                )
    return ValidationReport(not violations, tuple(violations))


# -- remote scene generation -------------------------------------------------------


def request_scene(
    description: str,
    endpoint: str | None = None,
    embodiment: str = "fr3",
    timeout: float = 30.0,
    library: AssetLibrary | None = None,
) -> SceneConfig:
    """Ask a remote generator for a scene and validate the reply.

    The request carries the description, the asset-library manifest, and the
    schema version; replies violating the SceneConfig schema are rejected.
    """
    from .kinematics import load_embodiment

    library = library or default_library()
    endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise RemoteSceneError(f"no endpoint configured (set {ENDPOINT_ENV})")
    payload = json.dumps(
        {
            "schema": SCENE_SCHEMA_VERSION,
            "description": description,
            "embodiment": embodiment,
            "assets": library.ids(),
        }
    ).encode()
    req = urllib.request.Request(endpoint, data=payload, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            body = resp.read()
    except (urllib.error.URLError, OSError) as exc:
        raise RemoteSceneError(f"transport failure: {exc}") from exc
    try:
        raw = json.loads(body)
    except json.JSONDecodeError as exc:
        raise SceneValidationError([f"reply is not valid JSON: {exc}"]) from exc
    scene = _scene_from_json(raw, embodiment, load_embodiment(embodiment).home)
    report = validate_scene(scene, library)
    if not report.ok:
        raise SceneValidationError(list(report.violations))
    return scene


def _scene_from_json(raw: dict, embodiment: str, home: np.ndarray) -> SceneConfig:
    if not isinstance(raw, dict) or "objects" not in raw:
        raise SceneValidationError(["reply missing 'objects' field"])
    objects = []
    for i, o in enumerate(raw["objects"]):
        missing = [k for k in ("asset_id", "xyz") if k not in o]
        if missing:
            raise SceneValidationError([f"object {i} missing fields {missing}"])
        yaw = float(o.get("yaw", 0.0))
        pose = Pose(quat_from_axis_angle((0, 0, 1), yaw), np.asarray(o["xyz"], dtype=float))
        objects.append(
            SceneObject(str(o.get("object_id", o["asset_id"])), str(o["asset_id"]), pose, float(o.get("scale", 1.0)))
        )
    return SceneConfig(
        objects=tuple(objects),
        robot=RobotPlacement(embodiment, Pose.identity(), home),
        support_surface_height=float(raw.get("support_surface_height", SUPPORT_HEIGHT)),
    )


def scene_to_json(scene: SceneConfig) -> dict:
    """Plain-JSON form of a scene (manifest/audit serialization)."""
    return {
        "objects": [
            {
                "object_id": o.object_id,
                "asset_id": o.asset_id,
                "xyz": [round(float(v), 9) for v in o.pose.translation],
                "quat": [round(float(v), 9) for v in o.pose.rotation],
                "scale": o.scale,
            }
            for o in scene.objects
        ],
        "robot": {"embodiment": scene.robot.embodiment},
        "support_surface_height": scene.support_surface_height,
        "workspace": [list(scene.workspace[0]), list(scene.workspace[1])],
    }
