"""Collision-free joint-space planning and skill-level trajectory assembly.

plan_joint_path is RRT-Connect with shortcut smoothing (straight-line fast
path first); plan_cartesian tracks end-effector waypoints with sequential IK.
plan_skill assembles phase-labeled segments per skill template, and
assemble_trajectory executes them through the kinematic world, recording
observation-action pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    Pose,
    ShapeSet,
    compose,
    invert,
    pose_error,
    quat_from_axis_angle,
    quat_slerp,
    signed_distance_many,
)
from .grasp import GraspCandidate
from .kinematics import RobotModel, arm_collides, fk, ik
from .world import Action, World, WorldState

RESOLUTION = 0.05
RRT_BUDGET = 20_000
RRT_STEP = 0.3
SHORTCUT_ATTEMPTS = 100
CART_POS_STEP = 0.01
CART_ROT_STEP = 0.05
LIFT_HEIGHT = 0.13  # clears the 0.10 displaced_beyond goal with tracking margin
PLACE_CLEARANCE = 0.002
RETREAT_HEIGHT = 0.08
POUR_TILT = math.radians(120.0)
POUR_TILT_STEP = math.radians(5.0)
POUR_HEIGHT = 0.10
HANG_STANDOFF = 0.05
_YAW_CANDIDATES = tuple(
    s * step for step in (0.0, 0.393, 0.785, 1.178, 1.571, 1.963, 2.356, 2.749, 3.142) for s in ((1.0,) if step == 0.0 else (1.0, -1.0))
)
PHASES = ("approach", "grasp_close", "transport", "manipulate", "release", "retreat")


class PlanPreconditionError(ValueError):
    """Start or goal configuration already in collision."""


@dataclass(frozen=True)
class GenerationFailure(Exception):
    """A sub-plan came back absent; names the failing skill phase."""

    skill: str
    phase: str
    reason: str = ""

    def __str__(self) -> str:
        msg = f"generation failure in skill {self.skill!r} at phase {self.phase!r}"
        return f"{msg}: {self.reason}" if self.reason else msg


@dataclass(frozen=True)
class JointPath:
    configs: tuple[np.ndarray, ...]
    resolution: float = RESOLUTION

    def length(self) -> float:
        return float(
            sum(np.linalg.norm(b - a) for a, b in zip(self.configs, self.configs[1:]))
        )


@dataclass(frozen=True)
class Segment:
    phase: str
    path: JointPath
    gripper: float  # commanded open fraction held across the segment


@dataclass(frozen=True)
class SkillPlan:
    skill: str
    segments: tuple[Segment, ...]

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            if not np.allclose(a.path.configs[-1], b.path.configs[0], atol=1e-9):
                raise ValueError("skill plan segments are not contiguous")


@dataclass(frozen=True)
class StepRecord:
    t: int
    joints: np.ndarray
    ee: Pose
    gripper_open: float
    object_poses: dict[str, Pose]
    action_pose: Pose
    action_gripper: float
    depth_ref: int | None = None


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[StepRecord, ...]
    phase_table: tuple[tuple[str, int, int], ...]  # (phase, start, end) over [0, T)
    final_state: WorldState | None = None
    depth_frames: np.ndarray | None = None  # (T, H, W) when a camera was attached


# -- collision scaffolding --------------------------------------------------------


class PlanningWorld:
    """Immutable obstacle snapshot for one planning call."""

    def __init__(
        self,
        robot: RobotModel,
        obstacles: list[ShapeSet],
        attached: tuple[ShapeSet, Pose] | None = None,
        attached_cloud: np.ndarray | None = None,
    ):
        self.robot = robot
        self.obstacles = obstacles
        self.attached = attached
        self.attached_cloud = attached_cloud

    def config_clear(self, q: np.ndarray) -> bool:
        if arm_collides(self.robot, q, self.obstacles):
            return False
        if self.attached is not None and self.attached_cloud is not None:
            _, weld = self.attached
            ee = fk(self.robot, q).ee
            pts = compose(ee, weld).apply(self.attached_cloud)
            for obs in self.obstacles:
                if float(signed_distance_many(obs, pts).min()) <= 0.0:
                    return False
        return True

    def edge_clear(self, a: np.ndarray, b: np.ndarray, resolution: float = RESOLUTION) -> bool:
        dist = float(np.linalg.norm(b - a))
        n = max(1, int(math.ceil(dist / resolution)))
        for i in range(1, n + 1):
            if not self.config_clear(a + (b - a) * (i / n)):
                return False
        return True


def _densify(a: np.ndarray, b: np.ndarray, resolution: float) -> list[np.ndarray]:
    dist = float(np.linalg.norm(b - a))
    n = max(1, int(math.ceil(dist / resolution)))
    return [a + (b - a) * (i / n) for i in range(1, n + 1)]


def plan_joint_path(
    robot: RobotModel,
    start: np.ndarray,
    goal: np.ndarray,
    world: PlanningWorld,
    seed: int = 0,
    budget: int = RRT_BUDGET,
) -> JointPath | None:
    """RRT-Connect between two collision-free configs, then shortcutting."""
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if not world.config_clear(start):
        raise PlanPreconditionError("start configuration in collision")
    if not world.config_clear(goal):
        raise PlanPreconditionError("goal configuration in collision")
    if np.allclose(start, goal, atol=1e-12):
        return JointPath((start.copy(),))
    if world.edge_clear(start, goal):
        waypoints = [start] + _densify(start, goal, RESOLUTION)
        return JointPath(tuple(waypoints))

    rng = np.random.default_rng(np.random.SeedSequence((0x9B7, seed)))
    lim = robot.limits
    trees: list[list[tuple[np.ndarray, int]]] = [[(start, -1)], [(goal, -1)]]
    nodes = 2

    def extend(tree: list, target: np.ndarray) -> tuple[int, bool]:
        """Grow toward target; returns (new node index, reached target)."""
        best = min(range(len(tree)), key=lambda i: float(np.linalg.norm(tree[i][0] - target)))
        base = tree[best][0]
        d = float(np.linalg.norm(target - base))
        if d < 1e-12:
            return best, True
        step = min(RRT_STEP, d)
        cand = base + (target - base) * (step / d)
        if not world.edge_clear(base, cand, RESOLUTION):
            return -1, False
        tree.append((cand, best))
        return len(tree) - 1, step >= d - 1e-12

    a, b = 0, 1
    connect_pair: tuple[int, int] | None = None
    while nodes < budget:
        sample = rng.uniform(lim[:, 0], lim[:, 1])
        idx, _ = extend(trees[a], sample)
        nodes += 1
        if idx >= 0:
            target = trees[a][idx][0]
            # greedily connect the other tree to the new node
            while True:
                jdx, reached = extend(trees[b], target)
                nodes += 1
                if jdx < 0:
                    break
                if reached:
                    connect_pair = (idx, jdx) if a == 0 else (jdx, idx)
                    break
                if nodes >= budget:
                    break
            if connect_pair is not None:
                break
        a, b = b, a
    if connect_pair is None:
        return None

    def backtrack(tree: list, idx: int) -> list[np.ndarray]:
        out = []
        while idx >= 0:
            out.append(tree[idx][0])
            idx = tree[idx][1]
        return out

    fwd = backtrack(trees[0], connect_pair[0])[::-1]
    back = backtrack(trees[1], connect_pair[1])
    waypoints = fwd + back

    # shortcut smoothing: joint-space arc length never increases
    for _ in range(SHORTCUT_ATTEMPTS):
        if len(waypoints) <= 2:
            break
        i, j = sorted(rng.integers(0, len(waypoints), size=2))
        if j - i < 2:
            continue
        if world.edge_clear(waypoints[i], waypoints[j]):
            waypoints = waypoints[: i + 1] + waypoints[j:]

    dense: list[np.ndarray] = [waypoints[0]]
    for a_, b_ in zip(waypoints, waypoints[1:]):
        dense.extend(_densify(a_, b_, RESOLUTION))
    path = JointPath(tuple(dense))
    if not validate_path(robot, path, world):
        return None
    return path


def validate_path(robot: RobotModel, path: JointPath, world: PlanningWorld) -> bool:
    """Independent re-validation: limits, resolution, and collision."""
    lim = robot.limits
    for q in path.configs:
        if np.any(q < lim[:, 0] - 1e-9) or np.any(q > lim[:, 1] + 1e-9):
            return False
        if not world.config_clear(q):
            return False
    for a, b in zip(path.configs, path.configs[1:]):
        if float(np.linalg.norm(b - a)) > path.resolution + 1e-9:
            return False
    return True


def _interpolate_poses(a: Pose, b: Pose) -> list[Pose]:
    dp, dr = pose_error(a, b)
    n = max(1, int(math.ceil(max(dp / CART_POS_STEP, dr / CART_ROT_STEP))))
    out = []
    for i in range(1, n + 1):
        t = i / n
        out.append(
            Pose(
                quat_slerp(a.rotation, b.rotation, t),
                a.translation + t * (b.translation - a.translation),
            )
        )
    return out


def plan_cartesian(
    robot: RobotModel,
    waypoints: list[Pose],
    seed_config: np.ndarray,
    world: PlanningWorld | None = None,
    seed: int = 0,
) -> JointPath | None:
    """Sequential-IK tracking of dense end-effector waypoints; None on any
    IK failure or collision along the way."""
    if not waypoints:
        raise ValueError("waypoints must be nonempty")
    q = np.asarray(seed_config, dtype=float)
    configs = [q]
    current = fk(robot, q).ee
    dense: list[Pose] = []
    prev = current
    for wp in waypoints:
        dense.extend(_interpolate_poses(prev, wp))
        prev = wp
    for pose in dense:
        sol = ik(robot, pose, configs[-1], seed=seed, restarts=0)
        if sol is None:
            return None
        if world is not None and not world.config_clear(sol):
            return None
        # keep joint-space continuity: a solver jump breaks the path contract
        for piece in _densify(configs[-1], sol, RESOLUTION):
            configs.append(piece)
    return JointPath(tuple(configs))


# -- skill planning ----------------------------------------------------------------


def _table_obstacle(world: World) -> ShapeSet:
    from .geometry import BOX, Shape

    lo, hi = (0.2, -0.35), (0.85, 0.35)
    cx, cy = (lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0
    return ShapeSet(
        (Shape(BOX, ((hi[0] - lo[0]) / 2.0, (hi[1] - lo[1]) / 2.0, 0.01)),),
        Pose(translation=np.array([cx, cy, world.support_height - 0.01])),
    )


def obstacles_for(
    world: World,
    state: WorldState,
    exclude: tuple[str, ...] = (),
) -> list[ShapeSet]:
    obs = [_table_obstacle(world)]
    for oid, _ in state.objects:
        if oid in exclude or (state.attached and state.attached[0] == oid):
            continue
        obs.append(world.object_shapes(state, oid))
    return obs


def _planning_world(
    world: World, state: WorldState, exclude: tuple[str, ...] = (), with_attached: bool = True
) -> PlanningWorld:
    attached = None
    cloud = None
    if with_attached and state.attached is not None:
        oid, weld = state.attached
        asset = world.library.get(state.get_object(oid).asset_id)
        attached = (asset.shapes, weld)
        cloud = asset.canonical_cloud(128).points
    return PlanningWorld(world.robot, obstacles_for(world, state, exclude), attached, cloud)


def _hold(q: np.ndarray, phase: str, gripper: float) -> Segment:
    return Segment(phase, JointPath((q.copy(), q.copy())), gripper)


def _grasp_segments(
    world: World,
    state: WorldState,
    skill_name: str,
    target_oid: str,
    grasp: GraspCandidate,
    seed: int,
) -> tuple[list[Segment], np.ndarray]:
    """home -> pre-grasp (RRT) -> grasp (cartesian) -> close; returns (segments, q at grasp)."""
    robot = world.robot
    q0 = state.robot_config
    pre = Pose(grasp.pose.rotation, grasp.pose.translation - 0.08 * grasp.approach)
    pw_all = _planning_world(world, state)
    pre_q = ik(robot, pre, grasp.grasp_config if grasp.grasp_config is not None else q0, seed=seed)
    if pre_q is None or not pw_all.config_clear(pre_q):
        raise GenerationFailure(skill_name, "approach", "pre-grasp unreachable or in collision")
    try:
        approach = plan_joint_path(robot, q0, pre_q, pw_all, seed=seed)
    except PlanPreconditionError as exc:
        raise GenerationFailure(skill_name, "approach", str(exc)) from exc
    if approach is None:
        raise GenerationFailure(skill_name, "approach", "no collision-free path to pre-grasp")
    pw_no_target = _planning_world(world, state, exclude=(target_oid,))
    descend = plan_cartesian(robot, [grasp.pose], pre_q, pw_no_target, seed=seed)
    if descend is None:
        raise GenerationFailure(skill_name, "approach", "cartesian descent to grasp failed")
    q_grasp = descend.configs[-1]
    segments = [
        Segment("approach", approach, 1.0),
        Segment("approach", descend, 1.0),
        _hold(q_grasp, "grasp_close", 0.0),
    ]
    return segments, q_grasp


def _attached_pose_to_ee(obj_pose_target: Pose, obj_pose_now: Pose, ee_now: Pose) -> Pose:
    """EE pose that carries the welded object to a desired pose."""
    weld = compose(invert(ee_now), obj_pose_now)
    return compose(obj_pose_target, invert(weld))


def plan_skill(
    skill,
    world: World,
    state: WorldState,
    grasp: GraspCandidate | None,
    seed: int = 0,
) -> SkillPlan:
    """Assemble the phase-labeled segments for one skill template.

    Raises GenerationFailure naming the failing phase when a sub-plan is
    absent. `grasp` is the selected candidate for skills that take hold of an
    object (pick/place/pour/pull/hang) unless the object is already held.
    """
    robot = world.robot
    kind = skill.kind
    holding = state.attached is not None and state.attached[0] == skill.object_id
    segments: list[Segment] = []
    q = state.robot_config

    if kind in ("pick", "place", "pour", "pull", "hang", "stack") and not holding:
        if grasp is None:
            raise GenerationFailure(kind, "approach", "no grasp candidate supplied")
        segments, q = _grasp_segments(world, state, kind, skill.object_id, grasp, seed)
        state = _simulate(world, state, segments)
        if kind != "pull":
            # clear the support before any transport: the freshly grasped
            # object still touches the table
            height = LIFT_HEIGHT if kind == "pick" else 0.08
            lift = _lift_segment(world, state, q, height, seed, kind=kind)
            segments.append(lift)
            state = _simulate(world, state, [lift])
            q = lift.path.configs[-1]

    if kind == "pick":
        return SkillPlan(kind, tuple(segments))
    if kind in ("place", "stack"):
        segments += _place_segments(world, state, skill, q, seed, into=skill.direction[2] < 0 and kind == "place")
        return SkillPlan(kind, tuple(segments))
    if kind == "pour":
        segments += _pour_segments(world, state, skill, q, seed)
        return SkillPlan(kind, tuple(segments))
    if kind == "push":
        return SkillPlan(kind, tuple(_push_segments(world, state, skill, seed)))
    if kind == "pull":
        segments += _pull_segments(world, state, skill, q, seed)
        return SkillPlan(kind, tuple(segments))
    if kind == "hang":
        segments += _hang_segments(world, state, skill, q, seed)
        return SkillPlan(kind, tuple(segments))
    raise GenerationFailure(kind, "approach", f"unknown skill kind {kind!r}")


def _simulate(world: World, state: WorldState, segments: list[Segment]) -> WorldState:
    """Execute segments kinematically to predict the post-segment state."""
    for seg in segments:
        for q in seg.path.configs:
            ee = compose(world.base_pose, fk(world.robot, q).ee)
            state = world.step(state, Action(ee, seg.gripper))
    return state


def _lift_segment(
    world: World, state: WorldState, q: np.ndarray, height: float, seed: int, kind: str = "pick"
) -> Segment:
    robot = world.robot
    ee = fk(robot, q).ee
    up = Pose(ee.rotation, ee.translation + np.array([0.0, 0.0, height]))
    # arm-only validation: the held object legitimately touches the support
    # at the start and a straight vertical lift cannot sweep it sideways
    pw = _planning_world(world, state, with_attached=False)
    path = plan_cartesian(robot, [up], q, pw, seed=seed)
    if path is None:
        raise GenerationFailure(kind, "transport", "lift path failed")
    return Segment("transport", path, 0.0)


def _rest_height_offset(world: World, state: WorldState, oid: str) -> float:
    """Distance from the object's origin to its lowest surface point."""
    obj = state.get_object(oid)
    shapes = world.object_shapes(state, oid)
    return float(obj.pose.translation[2] - shapes.lowest_z())


def _place_segments(world: World, state, skill, q: np.ndarray, seed: int, into: bool) -> list[Segment]:
    robot = world.robot
    oid = skill.object_id
    obj = state.get_object(oid)
    ee_now = fk(robot, q).ee
    target = state.get_object(skill.target_id)
    t_asset = world.library.get(target.asset_id)
    if into and t_asset.opening is not None:
        center = target.pose.apply(t_asset.opening.center)
        drop_z = center[2] + _rest_height_offset(world, state, oid) + 0.02
        goal_xy = center[:2]
    else:
        cloud = t_asset.canonical_cloud(512).transformed(target.pose)
        top_z = float(cloud.points[:, 2].max())
        goal_xy = target.pose.translation[:2]
        drop_z = top_z + _rest_height_offset(world, state, oid) + PLACE_CLEARANCE
    obj_goal = Pose(obj.pose.rotation, np.array([goal_xy[0], goal_xy[1], drop_z]))
    ee_goal = _attached_pose_to_ee(obj_goal, obj.pose, ee_now)
    ee_above = Pose(ee_goal.rotation, ee_goal.translation + np.array([0.0, 0.0, RETREAT_HEIGHT]))
    pw = _planning_world(world, state, exclude=(skill.target_id,))
    transport = plan_cartesian(robot, [ee_above, ee_goal], q, pw, seed=seed)
    if transport is None:
        raise GenerationFailure(skill.kind, "transport", "transport to place pose failed")
    q_place = transport.configs[-1]
    release = _hold(q_place, "release", 1.0)
    ee_retreat = Pose(ee_goal.rotation, ee_goal.translation + np.array([0.0, 0.0, RETREAT_HEIGHT]))
    pw_after = PlanningWorld(robot, obstacles_for(world, state, exclude=(oid, skill.target_id)))
    retreat = plan_cartesian(robot, [ee_retreat], q_place, pw_after, seed=seed)
    if retreat is None:
        raise GenerationFailure(skill.kind, "retreat", "retreat path failed")
    return [Segment("transport", transport, 0.0), release, Segment("retreat", retreat, 1.0)]


def _pour_segments(world: World, state, skill, q: np.ndarray, seed: int) -> list[Segment]:
    from .affordance import AffordanceQuery, peak_region, predict

    robot = world.robot
    oid = skill.object_id
    obj = state.get_object(oid)
    asset = world.library.get(obj.asset_id)
    ee_now = fk(robot, q).ee

    # pour lip: the rim-affordance point farthest from the container axis —
    # the tilt pivots about it so emission stays above the target center
    cloud = asset.canonical_cloud()
    try:
        amap = predict("annotated", cloud, AffordanceQuery(oid, skill.aux_phrase or "pourable rim"), asset.annotations)
    except KeyError:
        amap = predict("heuristic", cloud, AffordanceQuery(oid, "pourable rim"))
    region = peak_region(amap, cloud)
    rim_pts = cloud.points[region.indices]
    # the min-size rule can pad the region with body points: keep the top band
    top_band = rim_pts[rim_pts[:, 2] >= rim_pts[:, 2].max() - 0.01]
    # lip: rim point farthest from the gripper, so the pour tips away from the hand
    ee_local = invert(obj.pose).apply(ee_now.translation)
    lip_local = top_band[int(np.argmax(np.linalg.norm(top_band - ee_local, axis=1)))]

    target = state.get_object(skill.target_id)
    t_asset = world.library.get(target.asset_id)
    if t_asset.opening is None:
        raise GenerationFailure("pour", "transport", f"target {skill.target_id!r} has no opening")
    t_center = target.pose.apply(t_asset.opening.center)

    # the carry stance has free yaw about vertical and free hover height:
    # search for one where the arm reaches the stance AND sweeps the whole arc
    pw = _planning_world(world, state, exclude=(skill.target_id,))
    n_steps = int(round(POUR_TILT / POUR_TILT_STEP))

    def _arc_for(obj_goal: Pose, ee_carry: Pose, carry: np.ndarray) -> list[Pose]:
        # rotating about radial-cross-z through the lip raises the body over
        # the pivot, so the lip becomes and stays the lowest rim point
        weld = compose(invert(ee_carry), obj_goal)
        radial = obj_goal.translation - carry
        radial[2] = 0.0
        nr = float(np.linalg.norm(radial))
        radial = radial / nr if nr > 1e-9 else np.array([1.0, 0.0, 0.0])
        tilt_axis = np.cross(radial, np.array([0.0, 0.0, 1.0]))
        tilt_axis /= np.linalg.norm(tilt_axis)
        arc = []
        for i in range(1, n_steps + 1):
            theta = POUR_TILT * (i / n_steps)
            rot = Pose(quat_from_axis_angle(tilt_axis, theta), np.zeros(3))
            obj_t = Pose(
                compose(rot, Pose(obj_goal.rotation)).rotation,
                carry + rot.apply(obj_goal.translation - carry),
            )
            arc.append(compose(obj_t, invert(weld)))
        return arc

    chosen = None
    for height in (POUR_HEIGHT, POUR_HEIGHT + 0.07, POUR_HEIGHT + 0.14):
        carry = np.array([t_center[0], t_center[1], t_center[2] + height])
        for yaw in _YAW_CANDIDATES:
            spin = Pose(quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw), np.zeros(3))
            rot = compose(spin, Pose(obj.pose.rotation)).rotation
            obj_goal = Pose(rot, carry - Pose(rot, np.zeros(3)).apply(lip_local))
            ee_carry = _attached_pose_to_ee(obj_goal, obj.pose, ee_now)
            sol = ik(robot, ee_carry, q, seed=seed, restarts=1)
            if sol is None or not pw.config_clear(sol):
                continue
            arc = _arc_for(obj_goal, ee_carry, carry)
            # arc feasibility probe: chained IK plus collision at full density
            probe = sol
            feasible = True
            for pose in arc:
                probe_sol = ik(robot, pose, probe, seed=seed, restarts=0)
                if probe_sol is None or not pw.config_clear(probe_sol):
                    feasible = False
                    break
                probe = probe_sol
            if not feasible:
                continue
            chosen = (obj_goal, ee_carry, sol, arc)
            break
        if chosen is not None:
            break
    if chosen is None:
        raise GenerationFailure("pour", "manipulate", "no pour stance with a reachable tilt arc")
    obj_goal, ee_carry, q_stance, arc = chosen

    # a cartesian transport may settle into a different arm branch than the
    # validated stance; if the tilt then jams, re-route through joint space
    # into the known-good basin
    transport = plan_cartesian(robot, [ee_carry], q, pw, seed=seed)
    tilt = None
    if transport is not None:
        q_carry = transport.configs[-1]
        tilt = plan_cartesian(robot, arc, q_carry, pw, seed=seed)
    if tilt is None:
        try:
            transport = plan_joint_path(robot, q, q_stance, pw, seed=seed)
        except PlanPreconditionError as exc:
            raise GenerationFailure("pour", "transport", str(exc)) from exc
        if transport is None:
            raise GenerationFailure("pour", "transport", "carry to pour stance failed")
        q_carry = transport.configs[-1]
        tilt = plan_cartesian(robot, arc, q_carry, pw, seed=seed)
    if tilt is None:
        raise GenerationFailure("pour", "manipulate", "tilt arc unreachable")
    untilt = plan_cartesian(robot, arc[::-1][1:] + [fk(robot, q_carry).ee], tilt.configs[-1], pw, seed=seed)
    if untilt is None:
        raise GenerationFailure("pour", "manipulate", "untilt arc unreachable")
    return [
        Segment("transport", transport, 0.0),
        Segment("manipulate", tilt, 0.0),
        Segment("manipulate", untilt, 0.0),
    ]


def _push_segments(world: World, state, skill, seed: int) -> list[Segment]:
    robot = world.robot
    oid = skill.object_id
    obj = state.get_object(oid)
    centroid = world.object_centroid(state, oid)
    direction = np.asarray(skill.direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    shapes = world.object_shapes(state, oid)
    radius = max(
        float(np.linalg.norm(s.local_pose.translation[:2]) + max(s.dims)) for s in shapes.shapes
    )
    finger = robot.gripper.finger_length
    contact_z = max(centroid[2], world.support_height + 0.02)

    def pusher_pose(offset: float) -> Pose:
        pos = centroid - direction * offset
        pos[2] = contact_z + finger
        # gripper points straight down, jaw axis perpendicular to the push
        down = np.array([0.0, 0.0, -1.0])
        jaw = np.cross(down, direction)
        jaw /= np.linalg.norm(jaw)
        y = np.cross(down, jaw)
        rot = np.stack([jaw, y, down], axis=1)
        m = np.eye(4)
        m[:3, :3] = rot
        m[:3, 3] = pos
        return Pose.from_matrix(m)

    start_gap = radius + 0.03
    pre = pusher_pose(start_gap)
    q0 = state.robot_config
    close = _hold(q0, "grasp_close", 0.0)
    pw = _planning_world(world, state)
    pre_q = ik(robot, pre, q0, seed=seed)
    if pre_q is None or not pw.config_clear(pre_q):
        raise GenerationFailure("push", "approach", "push stance unreachable")
    try:
        approach = plan_joint_path(robot, q0, pre_q, pw, seed=seed)
    except PlanPreconditionError as exc:
        raise GenerationFailure("push", "approach", str(exc)) from exc
    if approach is None:
        raise GenerationFailure("push", "approach", "no path to push stance")
    goal = pusher_pose(-0.09)
    pw_drag = _planning_world(world, state, exclude=(oid,))
    drag = plan_cartesian(robot, [goal], pre_q, pw_drag, seed=seed)
    if drag is None:
        raise GenerationFailure("push", "manipulate", "drag path failed")
    return [close, Segment("approach", approach, 0.0), Segment("manipulate", drag, 0.0)]


def _pull_segments(world: World, state, skill, q: np.ndarray, seed: int) -> list[Segment]:
    robot = world.robot
    obj = state.get_object(skill.object_id)
    asset = world.library.get(obj.asset_id)
    if asset.articulation is None:
        raise GenerationFailure("pull", "manipulate", f"{skill.object_id!r} is not articulated")
    axis_world = obj.pose.rotate(asset.articulation.axis)
    travel = asset.articulation.limits[1] * 0.9
    ee_now = fk(robot, q).ee
    goal = Pose(ee_now.rotation, ee_now.translation + axis_world * travel)
    pw = _planning_world(world, state, exclude=(skill.object_id,), with_attached=False)
    drag = plan_cartesian(robot, [goal], q, pw, seed=seed)
    if drag is None:
        raise GenerationFailure("pull", "manipulate", "pull stroke unreachable")
    release = _hold(drag.configs[-1], "release", 1.0)
    ee_out = Pose(goal.rotation, goal.translation + axis_world * 0.04 + np.array([0, 0, 0.04]))
    retreat = plan_cartesian(robot, [ee_out], drag.configs[-1], pw, seed=seed)
    if retreat is None:
        raise GenerationFailure("pull", "retreat", "retreat failed")
    return [Segment("manipulate", drag, 0.0), release, Segment("retreat", retreat, 1.0)]


def _hang_segments(world: World, state, skill, q: np.ndarray, seed: int) -> list[Segment]:
    robot = world.robot
    oid = skill.object_id
    obj = state.get_object(oid)
    asset = world.library.get(obj.asset_id)
    if asset.handle_hole is None:
        raise GenerationFailure("hang", "transport", f"{oid!r} has no handle hole")
    rack = state.get_object(skill.target_id)
    r_asset = world.library.get(rack.asset_id)
    if r_asset.hook is None:
        raise GenerationFailure("hang", "transport", f"{skill.target_id!r} has no hook")

    hook_base = rack.pose.apply(r_asset.hook.base)
    hook_axis = rack.pose.rotate(r_asset.hook.axis)
    hook_tip = hook_base + hook_axis * r_asset.hook.length

    # desired mug orientation: hole normal parallel to the hook axis, up-axis
    # as vertical as the remaining freedom allows
    n_local = asset.handle_hole.normal
    base_rot = Pose(_align_rotation(n_local, hook_axis), np.zeros(3))
    # thread the hook through the open half of the hole, away from the body
    centroid_local = asset.canonical_cloud().points.mean(axis=0)
    away = asset.handle_hole.center - centroid_local
    away -= float(away @ n_local) * np.asarray(n_local, dtype=float)
    n_away = float(np.linalg.norm(away))
    away = away / n_away if n_away > 1e-9 else np.zeros(3)
    hole_local = asset.handle_hole.center + 0.5 * asset.handle_hole.inner_radius * away
    ee_now = fk(robot, q).ee
    pre_pt = hook_tip + hook_axis * HANG_STANDOFF
    seat_pt = hook_base + hook_axis * (r_asset.hook.length * 0.35)
    pw = _planning_world(world, state, exclude=())

    # remaining freedom is a spin about the hook axis: prefer upright stances
    # but take the first one the arm can reach at both pre and seat
    spins = sorted(
        np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False),
        key=lambda s: -float(
            compose(Pose(quat_from_axis_angle(hook_axis, s), np.zeros(3)), base_rot)
            .rotate(np.array([0.0, 0.0, 1.0]))[2]
        ),
    )
    chosen = None
    for spin in spins:
        obj_rot = compose(Pose(quat_from_axis_angle(hook_axis, spin), np.zeros(3)), base_rot)
        obj_pre = Pose(obj_rot.rotation, pre_pt - obj_rot.rotate(hole_local))
        obj_seat = Pose(obj_rot.rotation, seat_pt - obj_rot.rotate(hole_local))
        ee_pre = _attached_pose_to_ee(obj_pre, obj.pose, ee_now)
        ee_seat = _attached_pose_to_ee(obj_seat, obj.pose, ee_now)
        pre_sol = ik(robot, ee_pre, q, seed=seed, restarts=1)
        if pre_sol is None or not pw.config_clear(pre_sol):
            continue
        # probe the insertion line with collision checks before committing
        feasible = True
        probe = pre_sol
        for pose in _interpolate_poses(ee_pre, ee_seat):
            probe_sol = ik(robot, pose, probe, seed=seed, restarts=0)
            if probe_sol is None or not pw.config_clear(probe_sol):
                feasible = False
                break
            probe = probe_sol
        if not feasible:
            continue
        chosen = (ee_pre, ee_seat, pre_sol)
        break
    if chosen is None:
        raise GenerationFailure("hang", "transport", "no reachable hang alignment")
    ee_pre, ee_seat, q_pre = chosen

    high = Pose(ee_pre.rotation, ee_pre.translation + np.array([0.0, 0.0, 0.06]))
    transport = plan_cartesian(robot, [high, ee_pre], q, pw, seed=seed)
    insert = None
    if transport is not None:
        insert = plan_cartesian(robot, [ee_seat], transport.configs[-1], pw, seed=seed)
    if insert is None:
        # re-route through joint space into the spin-validated branch
        try:
            transport = plan_joint_path(robot, q, q_pre, pw, seed=seed)
        except PlanPreconditionError as exc:
            raise GenerationFailure("hang", "transport", str(exc)) from exc
        if transport is None:
            raise GenerationFailure("hang", "transport", "alignment approach failed")
        insert = plan_cartesian(robot, [ee_seat], transport.configs[-1], pw, seed=seed)
    if insert is None:
        raise GenerationFailure("hang", "manipulate", "insertion along hook failed")
    q_seat = insert.configs[-1]
    lower = plan_cartesian(
        robot,
        [Pose(ee_seat.rotation, ee_seat.translation - np.array([0.0, 0.0, 0.005]))],
        q_seat,
        pw,
        seed=seed,
    )
    if lower is None:
        raise GenerationFailure("hang", "manipulate", "seating drop failed")
    q_low = lower.configs[-1]
    release = _hold(q_low, "release", 1.0)
    pw_free = PlanningWorld(robot, obstacles_for(world, state, exclude=(oid,)))
    ee_back = Pose(
        ee_seat.rotation,
        ee_seat.translation + hook_axis * (HANG_STANDOFF + 0.03) + np.array([0.0, 0.0, 0.02]),
    )
    retreat = plan_cartesian(robot, [ee_back], q_low, pw_free, seed=seed)
    if retreat is None:
        raise GenerationFailure("hang", "retreat", "retreat failed")
    return [
        Segment("transport", transport, 0.0),
        Segment("manipulate", insert, 0.0),
        Segment("manipulate", lower, 0.0),
        release,
        Segment("retreat", retreat, 1.0),
    ]


def _align_rotation(v_from: np.ndarray, v_to: np.ndarray) -> np.ndarray:
    """Quaternion rotating unit v_from onto unit v_to."""
    v_from = v_from / np.linalg.norm(v_from)
    v_to = v_to / np.linalg.norm(v_to)
    c = float(v_from @ v_to)
    if c > 1.0 - 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    if c < -1.0 + 1e-12:
        ref = np.array([1.0, 0.0, 0.0]) if abs(v_from[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(v_from, ref)
        axis /= np.linalg.norm(axis)
        return quat_from_axis_angle(axis, math.pi)
    axis = np.cross(v_from, v_to)
    axis /= np.linalg.norm(axis)
    return quat_from_axis_angle(axis, math.acos(max(-1.0, min(1.0, c))))


# -- trajectory assembly -----------------------------------------------------------


def assemble_trajectory(
    plans: list[SkillPlan],
    world: World,
    state: WorldState,
    camera=None,
) -> Trajectory:
    """Step the world through every planned config, recording observations,
    end-effector pose commands, and phase boundaries."""
    steps: list[StepRecord] = []
    phase_table: list[tuple[str, int, int]] = []
    depth_frames: list[np.ndarray] = []
    t = 0
    for plan_idx, plan in enumerate(plans):
        for seg in plan.segments:
            start_t = t
            for qcmd in seg.path.configs:
                ee_cmd = compose(world.base_pose, fk(world.robot, qcmd).ee)
                action = Action(ee_cmd, seg.gripper)
                state = world.step(state, action)
                obs = world.observe(state, camera)
                if obs.depth is not None:
                    depth_frames.append(obs.depth)
                steps.append(
                    StepRecord(
                        t=t,
                        joints=obs.joints,
                        ee=obs.ee,
                        gripper_open=obs.gripper_open,
                        object_poses=obs.object_poses,
                        action_pose=ee_cmd,
                        action_gripper=seg.gripper,
                        depth_ref=t if obs.depth is not None else None,
                    )
                )
                t += 1
            if t > start_t:
                phase_table.append((f"{plan_idx}:{seg.phase}", start_t, t))
    return Trajectory(
        tuple(steps),
        tuple(phase_table),
        final_state=state,
        depth_frames=np.stack(depth_frames) if depth_frames else None,
    )
