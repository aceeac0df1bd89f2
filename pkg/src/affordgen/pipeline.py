"""End-to-end demonstration generation for one task instance.

Chains affordance prediction, grasp selection, and skill planning over an
evolving world state, then re-executes the plans from the initial state to
record the final observation-action trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .affordance import AffordanceQuery, predict
from .config import EngineConfig
from .grasp import GraspCandidate, NoFeasibleGraspError, generate_candidates, score_candidate, select
from .kinematics import load_embodiment
from .planner import (
    GenerationFailure,
    SkillPlan,
    Trajectory,
    _simulate,
    assemble_trajectory,
    obstacles_for,
    plan_skill,
)
from .tasks import SceneConfig, TaskSpec
from .world import World, WorldState, default_library


@dataclass(frozen=True)
class GraspAudit:
    """Every candidate's score triple for one grasped skill, for post-hoc audit."""

    skill_index: int
    object_id: str
    phrase: str
    selected: int
    aff: tuple[float, ...]
    kin: tuple[float, ...]
    total: tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "skill_index": self.skill_index,
            "object_id": self.object_id,
            "phrase": self.phrase,
            "selected": self.selected,
            "aff": [round(v, 9) for v in self.aff],
            "kin": [round(v, 9) for v in self.kin],
            "total": [round(v, 9) for v in self.total],
        }


@dataclass(frozen=True)
class GenerationResult:
    success: bool
    plans: tuple[SkillPlan, ...] = ()
    trajectory: Trajectory | None = None
    audits: tuple[GraspAudit, ...] = ()
    failure_skill: str = ""
    failure_phase: str = ""
    failure_reason: str = ""


def build_world(scene: SceneConfig, config: EngineConfig | None = None) -> tuple[World, WorldState]:
    config = config or EngineConfig()
    robot = load_embodiment(scene.robot.embodiment)
    world = World(
        default_library(),
        robot,
        support_height=scene.support_surface_height,
        base_pose=scene.robot.base_pose,
        pour_rate=config.pour_rate,
    )
    objects = [(o.object_id, o.asset_id, o.pose, o.scale) for o in scene.objects]
    state = world.initial_state(objects, scene.robot.home)
    return world, state


def _select_grasp(
    world: World,
    state: WorldState,
    skill,
    config: EngineConfig,
    seed: int,
) -> tuple[GraspCandidate, GraspAudit, int]:
    oid = skill.object_id
    asset = world.library.get(state.get_object(oid).asset_id)
    cloud = world.capture_pointcloud(state, oid, config.cloud_n, seed=0)
    amap = predict(config.backend, cloud, AffordanceQuery(oid, skill.grasp_phrase), asset.annotations)
    candidates = generate_candidates(cloud, amap, config.candidates_k, world.robot.gripper, seed=seed)
    obstacles = obstacles_for(world, state, exclude=(oid,))
    scored = [
        score_candidate(c, amap, cloud, world.robot, state.robot_config, obstacles, seed=seed + i)
        for i, c in enumerate(candidates)
    ]
    idx, best = select(scored)
    audit = GraspAudit(
        skill_index=-1,
        object_id=oid,
        phrase=skill.grasp_phrase,
        selected=idx,
        aff=tuple(c.aff_score for c in scored),
        kin=tuple(c.kin_score for c in scored),
        total=tuple(c.total for c in scored),
    )
    return best, audit, idx


def generate_demo(
    task: TaskSpec,
    scene: SceneConfig,
    config: EngineConfig | None = None,
    seed: int = 0,
    camera=None,
) -> GenerationResult:
    """Plan every skill of a compiled task and execute the result.

    Failures are data: the result carries the failing skill and phase instead
    of raising.
    """
    config = config or EngineConfig()
    world, initial = build_world(scene, config)
    state = initial
    plans: list[SkillPlan] = []
    audits: list[GraspAudit] = []
    for i, skill in enumerate(task.skills):
        holding = state.attached is not None and state.attached[0] == skill.object_id
        grasp = None
        if skill.kind in ("pick", "place", "pour", "pull", "hang", "stack") and not holding:
            try:
                grasp, audit, _ = _select_grasp(world, state, skill, config, seed=_skill_seed(seed, i))
                audits.append(GraspAudit(**{**audit.__dict__, "skill_index": i}))
            except NoFeasibleGraspError as exc:
                return GenerationResult(
                    False, tuple(plans), None, tuple(audits), skill.kind, "approach", str(exc)
                )
        try:
            plan = plan_skill(skill, world, state, grasp, seed=_skill_seed(seed, i))
        except GenerationFailure as exc:
            return GenerationResult(
                False, tuple(plans), None, tuple(audits), exc.skill, exc.phase, exc.reason
            )
        plans.append(plan)
        state = _simulate(world, state, list(plan.segments))
    trajectory = assemble_trajectory(plans, world, initial, camera=camera)
    return GenerationResult(True, tuple(plans), trajectory, tuple(audits))


def _skill_seed(seed: int, skill_index: int) -> int:
    return (seed * 1000003 + skill_index * 97 + 13) & 0x7FFFFFFF
