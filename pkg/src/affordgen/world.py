"""Kinematic world: asset library, state stepping with attachment and
settling, a discrete pour-particle model, goal predicates, point-cloud
capture, and depth rasterization.

There are no dynamics: released objects snap down to first contact, attached
objects weld to the gripper, and pour contents are conserved integer
particles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
import yaml

from .geometry import (
    PointCloud,
    Pose,
    Shape,
    ShapeSet,
    compose,
    invert,
    quat_to_matrix,
    sample_surface,
    signed_distance_many,
)
from .kinematics import RobotModel, ik

DEFAULT_CLOUD_N = 2048
DEFAULT_DEPTH_HW = (256, 256)
POUR_SPILL_THRESHOLD = 55.0 * math.pi / 180.0
POUR_RATE = 5
SETTLE_TOL = 1e-7
GRIPPER_CLOSED = 0.2


class UnknownAssetError(KeyError):
    pass


class GoalConfigError(ValueError):
    """A goal predicate references asset metadata the asset lacks."""


@dataclass(frozen=True)
class Opening:
    center: np.ndarray
    radius: float
    axis: np.ndarray


@dataclass(frozen=True)
class HandleHole:
    center: np.ndarray
    inner_radius: float
    normal: np.ndarray


@dataclass(frozen=True)
class Hook:
    base: np.ndarray
    axis: np.ndarray
    length: float


@dataclass(frozen=True)
class Articulation:
    kind: str  # prismatic | revolute
    axis: np.ndarray
    limits: tuple[float, float]
    moving_parts: tuple[int, ...]


@dataclass(frozen=True)
class Asset:
    """A library object: shape union plus affordance/goal metadata."""

    id: str
    shapes: ShapeSet
    annotations: dict[str, list[int]] = field(default_factory=dict)
    opening: Opening | None = None
    handle_hole: HandleHole | None = None
    hook: Hook | None = None
    articulation: Articulation | None = None
    capacity: int = 0
    default_yaw: float = 0.0  # scene-placement yaw, e.g. handles toward the robot

    def canonical_cloud(self, n: int = DEFAULT_CLOUD_N) -> PointCloud:
        return _cloud_cache(self, n)


_CLOUDS: dict[tuple[str, int], PointCloud] = {}


def _cloud_cache(asset: Asset, n: int) -> PointCloud:
    key = (asset.id, n)
    if key not in _CLOUDS:
        _CLOUDS[key] = sample_surface(asset.shapes, n, seed=_stable_seed(asset.id))
    return _CLOUDS[key]


def _stable_seed(name: str) -> int:
    h = 2166136261
    for ch in name.encode():
        h = ((h ^ ch) * 16777619) & 0xFFFFFFFF
    return h


def _parse_pose(raw: dict | None) -> Pose:
    if not raw:
        return Pose.identity()
    return Pose.from_rpy(raw.get("xyz", (0, 0, 0)), raw.get("rpy", (0, 0, 0)))


def _parse_shape(raw: dict) -> Shape:
    kind = raw["kind"]
    dims = {
        "box": lambda r: tuple(r["half_extents"]),
        "sphere": lambda r: (r["radius"],),
        "cylinder": lambda r: (r["radius"], r["half_height"]),
        "capsule": lambda r: (r["radius"], r["half_length"]),
        "torus_arc": lambda r: (r["major_radius"], r["minor_radius"], r["span"]),
    }[kind](raw)
    return Shape(kind, dims, _parse_pose(raw.get("pose")), int(raw.get("part", 0)))


def load_asset_data(raw: dict) -> Asset:
    if raw.get("schema") != "asset/1":
        raise ValueError(f"unsupported asset schema {raw.get('schema')!r}")
    shapes = ShapeSet(tuple(_parse_shape(s) for s in raw["shapes"]))
    part_ids = {s.part_id for s in shapes.shapes}
    annotations = {k: list(v) for k, v in (raw.get("annotations") or {}).items()}
    for phrase, parts in annotations.items():
        if not set(parts) <= part_ids:
            raise ValueError(f"annotation {phrase!r} references unknown part ids")
    opening = None
    if "opening" in raw and raw["opening"]:
        o = raw["opening"]
        opening = Opening(np.asarray(o["center"], dtype=float), float(o["radius"]), np.asarray(o["axis"], dtype=float))
    hole = None
    if "handle_hole" in raw and raw["handle_hole"]:
        h = raw["handle_hole"]
        hole = HandleHole(np.asarray(h["center"], dtype=float), float(h["inner_radius"]), np.asarray(h["normal"], dtype=float))
    hook = None
    if "hook" in raw and raw["hook"]:
        h = raw["hook"]
        hook = Hook(np.asarray(h["base"], dtype=float), np.asarray(h["axis"], dtype=float), float(h["length"]))
    art = None
    if "articulation" in raw and raw["articulation"]:
        a = raw["articulation"]
        art = Articulation(a["kind"], np.asarray(a["axis"], dtype=float), (float(a["limits"][0]), float(a["limits"][1])), tuple(a.get("moving_parts", ())))
    return Asset(
        id=raw["id"],
        shapes=shapes,
        annotations=annotations,
        opening=opening,
        handle_hole=hole,
        hook=hook,
        articulation=art,
        capacity=int(raw.get("capacity", 0)),
        default_yaw=float(raw.get("default_yaw", 0.0)),
    )


class AssetLibrary:
    """Immutable map of asset id -> Asset, loaded from bundled YAML files."""

    def __init__(self, assets: dict[str, Asset]):
        self._assets = dict(assets)

    def __contains__(self, asset_id: str) -> bool:
        return asset_id in self._assets

    def __len__(self) -> int:
        return len(self._assets)

    def ids(self) -> list[str]:
        return sorted(self._assets)

    def get(self, asset_id: str) -> Asset:
        if asset_id not in self._assets:
            raise UnknownAssetError(f"unknown asset {asset_id!r}")
        return self._assets[asset_id]


_LIBRARY: AssetLibrary | None = None


def default_library() -> AssetLibrary:
    global _LIBRARY
    if _LIBRARY is None:
        assets = {}
        root = resources.files("affordgen").joinpath("data/assets")
        for entry in sorted(root.iterdir(), key=lambda e: e.name):
            if entry.name.endswith(".yaml"):
                asset = load_asset_data(yaml.safe_load(entry.read_text()))
                assets[asset.id] = asset
        _LIBRARY = AssetLibrary(assets)
    return _LIBRARY


# -- world state ----------------------------------------------------------------


@dataclass(frozen=True)
class Particles:
    held: int
    transferred: tuple[tuple[str, int], ...] = ()
    spilled: int = 0

    def total(self) -> int:
        return self.held + self.spilled + sum(c for _, c in self.transferred)

    def transferred_to(self, target: str) -> int:
        for tid, c in self.transferred:
            if tid == target:
                return c
        return 0

    def crediting(self, target: str, count: int) -> "Particles":
        d = dict(self.transferred)
        d[target] = d.get(target, 0) + count
        return Particles(self.held - count, tuple(sorted(d.items())), self.spilled)

    def spilling(self, count: int) -> "Particles":
        return Particles(self.held - count, self.transferred, self.spilled + count)


@dataclass(frozen=True)
class ObjectState:
    asset_id: str
    pose: Pose
    scale: float = 1.0


@dataclass(frozen=True)
class WorldState:
    """A value snapshot: object poses, one optional attachment, robot config,
    articulation values, and per-container particle ledgers."""

    objects: tuple[tuple[str, ObjectState], ...]
    robot_config: np.ndarray
    gripper_open: float = 1.0
    attached: tuple[str, Pose] | None = None  # (object id, gripper->object weld)
    articulation: tuple[tuple[str, float], ...] = ()
    particles: tuple[tuple[str, Particles], ...] = ()
    flags: tuple[str, ...] = ()

    def object_ids(self) -> list[str]:
        return [oid for oid, _ in self.objects]

    def get_object(self, oid: str) -> ObjectState:
        for o, st in self.objects:
            if o == oid:
                return st
        raise UnknownAssetError(f"no object {oid!r} in world")

    def with_object_pose(self, oid: str, pose: Pose) -> "WorldState":
        objs = tuple((o, replace(st, pose=pose) if o == oid else st) for o, st in self.objects)
        return replace(self, objects=objs)

    def articulation_value(self, oid: str) -> float:
        for o, v in self.articulation:
            if o == oid:
                return v
        return 0.0

    def particles_of(self, oid: str) -> Particles | None:
        for o, p in self.particles:
            if o == oid:
                return p
        return None


@dataclass(frozen=True)
class Action:
    ee_target: Pose
    gripper: float  # commanded open fraction in [0, 1]


@dataclass(frozen=True)
class CameraConfig:
    pose: Pose
    fov: float = math.radians(60.0)
    height: int = DEFAULT_DEPTH_HW[0]
    width: int = DEFAULT_DEPTH_HW[1]


@dataclass(frozen=True)
class Observation:
    joints: np.ndarray
    ee: Pose
    gripper_open: float
    object_poses: dict[str, Pose]
    depth: np.ndarray | None = None


def _core_samples(shapeset: ShapeSet) -> tuple[np.ndarray, np.ndarray]:
    """Dense samples of round primitives' core curves with matching radii.

    Boxes have no round core and are covered by the forward surface check.
    """
    pts: list[np.ndarray] = []
    radii: list[np.ndarray] = []
    for s in shapeset.shapes:
        wp = compose(shapeset.world_pose, s.local_pose)
        if s.kind == "sphere":
            local = np.zeros((1, 3))
            r = s.dims[0]
        elif s.kind in ("cylinder", "capsule"):
            r, h = s.dims
            if s.kind == "cylinder" and h < r:
                continue  # squat disc: the capsule core bound is far too fat
            n = max(2, int(2.0 * h / 0.002) + 1)
            local = np.stack([np.zeros(n), np.zeros(n), np.linspace(-h, h, n)], axis=1)
        elif s.kind == "torus_arc":
            major, r, span = s.dims
            n = max(3, int(span * major / 0.002) + 1)
            phi = np.linspace(-span / 2.0, span / 2.0, n)
            local = np.stack([major * np.cos(phi), major * np.sin(phi), np.zeros(n)], axis=1)
        else:
            continue
        pts.append(wp.apply(local))
        radii.append(np.full(len(local), r))
    if not pts:
        return np.empty((0, 3)), np.empty(0)
    return np.concatenate(pts), np.concatenate(radii)


class World:
    """Steps WorldState values; owns the asset library, robot, and table."""

    def __init__(
        self,
        library: AssetLibrary,
        robot: RobotModel,
        support_height: float = 0.0,
        workspace: tuple[np.ndarray, np.ndarray] | None = None,
        base_pose: Pose | None = None,
        pour_rate: int = POUR_RATE,
    ):
        self.library = library
        self.robot = robot
        self.support_height = support_height
        self.workspace = workspace
        self.base_pose = base_pose or Pose.identity()
        self.pour_rate = pour_rate
        # fk/ik run in the robot base frame
        self._base_inv = invert(self.base_pose)

    # -- shape helpers --

    def object_shapes(self, state: WorldState, oid: str) -> ShapeSet:
        obj = state.get_object(oid)
        asset = self.library.get(obj.asset_id)
        shapes = asset.shapes.shapes
        if asset.articulation is not None:
            v = state.articulation_value(oid)
            offset = self._articulation_offset(asset, v)
            shapes = tuple(
                replace(s, local_pose=compose(offset, s.local_pose))
                if s.part_id in asset.articulation.moving_parts
                else s
                for s in shapes
            )
        return ShapeSet(shapes, obj.pose)

    @staticmethod
    def _articulation_offset(asset: Asset, value: float) -> Pose:
        art = asset.articulation
        if art.kind == "prismatic":
            return Pose(translation=art.axis * value)
        from .geometry import quat_from_axis_angle

        return Pose(rotation=quat_from_axis_angle(art.axis, value))

    def initial_state(self, objects: list[tuple[str, str, Pose, float]], q: np.ndarray) -> WorldState:
        """objects: (object id, asset id, pose, scale)."""
        obj_states = tuple((oid, ObjectState(aid, pose, scale)) for oid, aid, pose, scale in objects)
        particles = tuple(
            (oid, Particles(self.library.get(aid).capacity))
            for oid, aid, pose, scale in objects
            if self.library.get(aid).capacity > 0
        )
        return WorldState(objects=obj_states, robot_config=np.asarray(q, dtype=float), particles=particles)

    def ee_pose(self, state: WorldState) -> Pose:
        from .kinematics import fk

        return compose(self.base_pose, fk(self.robot, state.robot_config).ee)

    # -- stepping --

    def step(self, state: WorldState, action: Action) -> WorldState:
        """Advance one kinematic step: IK toward the command, weld-following,
        attach/detach with settling, pushing, and pour emission."""
        target_local = compose(self._base_inv, action.ee_target)
        sol = ik(self.robot, target_local, state.robot_config, seed=0, restarts=0)
        if sol is None:
            state = replace(state, flags=state.flags + ("ik_failure",))
            sol = state.robot_config
        prev_ee = self.ee_pose(state)
        state = replace(state, robot_config=sol)
        ee = self.ee_pose(state)

        # attached object follows the weld; articulated grabs drag their joint
        if state.attached is not None:
            oid, weld = state.attached
            asset = self.library.get(state.get_object(oid).asset_id)
            if asset.articulation is not None:
                state = self._drag_articulation(state, oid, asset, prev_ee, ee)
            else:
                state = state.with_object_pose(oid, compose(ee, weld))

        was_open = state.gripper_open
        state = replace(state, gripper_open=float(np.clip(action.gripper, 0.0, 1.0)))

        closing = action.gripper <= GRIPPER_CLOSED < was_open
        opening = action.gripper > GRIPPER_CLOSED >= was_open
        if closing and state.attached is None:
            state = self._try_attach(state, ee)
        elif opening and state.attached is not None:
            state = self._detach_and_settle(state)
        elif state.attached is None and state.gripper_open <= GRIPPER_CLOSED:
            state = self._push_objects(state, prev_ee, ee)

        state = self._emit_pour(state, ee)
        return state

    def _try_attach(self, state: WorldState, ee: Pose) -> WorldState:
        from .grasp import contact_set

        for oid, obj in state.objects:
            asset = self.library.get(obj.asset_id)
            cloud = asset.canonical_cloud().transformed(obj.pose)
            contacts = contact_set(ee, cloud, self.robot.gripper)
            if len(contacts) > 0:
                weld = compose(invert(ee), obj.pose)
                return replace(state, attached=(oid, weld))
        return state

    def _detach_and_settle(self, state: WorldState) -> WorldState:
        oid, _ = state.attached
        state = replace(state, attached=None)
        return self.settle(state, oid)

    def settle(self, state: WorldState, oid: str) -> WorldState:
        """Drop an object along -z to first contact (kinematic snap-to-rest)."""
        obj = state.get_object(oid)
        asset = self.library.get(obj.asset_id)
        shapes = self.object_shapes(state, oid)
        other_ids = [o for o, _ in state.objects if o != oid]
        others = [self.object_shapes(state, o) for o in other_ids]
        # full-resolution cloud: rest contacts (e.g. a handle catching a hook)
        # can hinge on a few millimeters of surface
        cloud = self.library.get(obj.asset_id).canonical_cloud().transformed(obj.pose)
        pts = cloud.points.copy()
        # contact is checked both ways: object samples against obstacle SDFs
        # and obstacle core curves (axis segments / arc circles, plus their
        # radii) against the object's exact SDF, so thin features (hooks)
        # stop the drop where point sampling alone would miss
        other_cores = [_core_samples(other) for other in others]
        # table contact is analytic in the lowest surface point
        drop_limit = shapes.lowest_z() - self.support_height
        if drop_limit <= SETTLE_TOL:
            return state
        total = 0.0
        # sphere-trace downward: the union SDF bounds the free fall distance
        for _ in range(64):
            clearance = drop_limit - total
            dropped = shapes.posed(
                Pose(obj.pose.rotation, obj.pose.translation - np.array([0.0, 0.0, total]))
            )
            for other, (core_pts, core_r) in zip(others, other_cores):
                clearance = min(clearance, float(signed_distance_many(other, pts).min()))
                if len(core_pts):
                    rev = signed_distance_many(dropped, core_pts) - core_r
                    clearance = min(clearance, float(rev.min()))
            if clearance <= SETTLE_TOL:
                break
            step = max(clearance, 1e-9)
            total += step
            pts[:, 2] -= step
            if total >= drop_limit:
                total = drop_limit
                break
        new_pose = Pose(obj.pose.rotation, obj.pose.translation - np.array([0.0, 0.0, total]))
        return state.with_object_pose(oid, new_pose)

    def _push_objects(self, state: WorldState, prev_ee: Pose, ee: Pose) -> WorldState:
        delta = ee.translation - prev_ee.translation
        if float(np.linalg.norm(delta[:2])) < 1e-9:
            return state
        from .grasp import contact_set

        for oid, obj in state.objects:
            asset = self.library.get(obj.asset_id)
            if asset.articulation is not None:
                continue
            cloud = asset.canonical_cloud().transformed(obj.pose)
            if len(contact_set(ee, cloud, self.robot.gripper)) > 0:
                push = np.array([delta[0], delta[1], 0.0])
                state = state.with_object_pose(oid, Pose(obj.pose.rotation, obj.pose.translation + push))
        return state

    def _drag_articulation(self, state: WorldState, oid: str, asset: Asset, prev_ee: Pose, ee: Pose) -> WorldState:
        obj = state.get_object(oid)
        axis_world = obj.pose.rotate(asset.articulation.axis)
        delta = float((ee.translation - prev_ee.translation) @ axis_world)
        lo, hi = asset.articulation.limits
        v = float(np.clip(state.articulation_value(oid) + delta, lo, hi))
        arts = dict(state.articulation)
        arts[oid] = v
        return replace(state, articulation=tuple(sorted(arts.items())))

    # -- pour model --

    def _tilt_angle(self, state: WorldState, oid: str) -> float:
        obj = state.get_object(oid)
        asset = self.library.get(obj.asset_id)
        if asset.opening is None:
            return 0.0
        up = obj.pose.rotate(asset.opening.axis)
        return math.acos(min(1.0, max(-1.0, float(up[2]))))

    def _rim_lowest_point(self, state: WorldState, oid: str) -> np.ndarray:
        obj = state.get_object(oid)
        asset = self.library.get(obj.asset_id)
        o = asset.opening
        thetas = np.linspace(0.0, 2.0 * math.pi, 48, endpoint=False)
        ax = o.axis / np.linalg.norm(o.axis)
        ref = np.array([1.0, 0.0, 0.0]) if abs(ax[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = np.cross(ref, ax)
        u /= np.linalg.norm(u)
        v = np.cross(ax, u)
        ring = o.center + o.radius * (np.outer(np.cos(thetas), u) + np.outer(np.sin(thetas), v))
        world = obj.pose.apply(ring)
        return world[np.argmin(world[:, 2])]

    def _emit_pour(self, state: WorldState, ee: Pose) -> WorldState:
        if state.attached is None:
            return state
        oid, _ = state.attached
        p = state.particles_of(oid)
        if p is None or p.held <= 0:
            return state
        if self._tilt_angle(state, oid) <= POUR_SPILL_THRESHOLD:
            return state
        emit = min(self.pour_rate, p.held)
        landing = self._rim_lowest_point(state, oid)
        credited = None
        for other_id, obj in state.objects:
            if other_id == oid:
                continue
            asset = self.library.get(obj.asset_id)
            if asset.opening is None:
                continue
            center = obj.pose.apply(asset.opening.center)
            if center[2] > landing[2]:
                continue  # the catching opening must sit below the emission point
            if float(np.hypot(landing[0] - center[0], landing[1] - center[1])) <= asset.opening.radius:
                credited = other_id
                break
        p2 = p.crediting(credited, emit) if credited else p.spilling(emit)
        parts = dict(state.particles)
        parts[oid] = p2
        return replace(state, particles=tuple(sorted(parts.items())))

    # -- observation --

    def capture_pointcloud(self, state: WorldState, oid: str, n: int = DEFAULT_CLOUD_N, seed: int = 0) -> PointCloud:
        obj = state.get_object(oid)
        asset = self.library.get(obj.asset_id)
        return sample_surface(asset.shapes, n, seed).transformed(obj.pose)

    def observe(self, state: WorldState, camera: CameraConfig | None = None) -> Observation:
        depth = render_depth(self, state, camera) if camera is not None else None
        return Observation(
            joints=state.robot_config.copy(),
            ee=self.ee_pose(state),
            gripper_open=state.gripper_open,
            object_poses={oid: obj.pose for oid, obj in state.objects},
            depth=depth,
        )

    # -- goals --

    def object_centroid(self, state: WorldState, oid: str) -> np.ndarray:
        obj = state.get_object(oid)
        asset = self.library.get(obj.asset_id)
        return obj.pose.apply(asset.canonical_cloud().points.mean(axis=0))

    def eval_goal(self, state: WorldState, goal, initial: WorldState | None = None) -> bool:
        from .tasks import GoalCondition  # noqa: F401 (type only)

        pred = goal.predicate
        if pred == "inside":
            return self._eval_inside(state, goal.subject, goal.reference)
        if pred == "on_top_of":
            return self._eval_on_top(state, goal.subject, goal.reference)
        if pred == "stacked_order":
            order = [goal.subject] + list(goal.extra_objects) if goal.extra_objects else [goal.subject, goal.reference]
            if goal.reference and goal.reference not in order:
                order.insert(1, goal.reference)
            return all(self._eval_on_top(state, a, b) for a, b in zip(order, order[1:]))
        if pred == "displaced_beyond":
            if initial is None:
                raise GoalConfigError("displaced_beyond requires the initial state")
            d = state.get_object(goal.subject).pose.translation - initial.get_object(goal.subject).pose.translation
            direction = np.asarray(goal.direction, dtype=float)
            return float(d @ direction) >= goal.threshold
        if pred == "joint_opened":
            return state.articulation_value(goal.subject) >= goal.threshold
        if pred == "poured_into":
            p = state.particles_of(goal.subject)
            if p is None:
                raise GoalConfigError(f"{goal.subject!r} has no pour contents")
            total = p.total()
            return p.transferred_to(goal.reference) >= goal.threshold * total
        if pred == "hung_on":
            return self._eval_hung(state, goal.subject, goal.reference)
        raise GoalConfigError(f"unknown predicate {pred!r}")

    def _opening_world(self, state: WorldState, oid: str) -> tuple[np.ndarray, float, np.ndarray, float]:
        """(center, radius, axis, rim z) of a container's opening in world."""
        obj = state.get_object(oid)
        asset = self.library.get(obj.asset_id)
        if asset.opening is None:
            raise GoalConfigError(f"asset {obj.asset_id!r} has no opening")
        center = obj.pose.apply(asset.opening.center)
        axis = obj.pose.rotate(asset.opening.axis)
        return center, asset.opening.radius, axis, float(center[2])

    def _eval_inside(self, state: WorldState, subject: str, reference: str) -> bool:
        center, radius, axis, rim_z = self._opening_world(state, reference)
        c = self.object_centroid(state, subject)
        if c[2] >= rim_z:
            return False
        horiz = math.hypot(c[0] - center[0], c[1] - center[1])
        return horiz <= radius

    def _support_top(self, state: WorldState, oid: str) -> tuple[float, np.ndarray, np.ndarray]:
        """(top z, xy min, xy max) of a support object's bounding footprint."""
        shapes = self.object_shapes(state, oid)
        pts = self.library.get(state.get_object(oid).asset_id).canonical_cloud(512).transformed(
            state.get_object(oid).pose
        ).points
        return float(pts[:, 2].max()), pts[:, :2].min(axis=0), pts[:, :2].max(axis=0)

    def _eval_on_top(self, state: WorldState, subject: str, reference: str) -> bool:
        top_z, lo, hi = self._support_top(state, reference)
        subj_shapes = self.object_shapes(state, subject)
        gap = subj_shapes.lowest_z() - top_z
        if not (-0.02 <= gap <= 0.02):
            return False
        c = self.object_centroid(state, subject)
        return bool(lo[0] <= c[0] <= hi[0] and lo[1] <= c[1] <= hi[1])

    def _eval_hung(self, state: WorldState, subject: str, reference: str) -> bool:
        if state.attached is not None and state.attached[0] == subject:
            return False
        subj = state.get_object(subject)
        s_asset = self.library.get(subj.asset_id)
        if s_asset.handle_hole is None:
            raise GoalConfigError(f"asset {subj.asset_id!r} has no handle_hole")
        ref = state.get_object(reference)
        r_asset = self.library.get(ref.asset_id)
        if r_asset.hook is None:
            raise GoalConfigError(f"asset {ref.asset_id!r} has no hook")
        hole_c = subj.pose.apply(s_asset.handle_hole.center)
        hole_n = subj.pose.rotate(s_asset.handle_hole.normal)
        base = ref.pose.apply(r_asset.hook.base)
        axis = ref.pose.rotate(r_asset.hook.axis)
        tip = base + axis * r_asset.hook.length
        # segment vs hole-disk intersection
        denom = float((tip - base) @ hole_n)
        if abs(denom) < 1e-12:
            return False
        t = float((hole_c - base) @ hole_n) / denom
        if not (0.0 <= t <= 1.0):
            return False
        hit = base + t * (tip - base)
        return float(np.linalg.norm(hit - hole_c)) <= s_asset.handle_hole.inner_radius


# -- depth rendering -------------------------------------------------------------


def render_depth(world: World, state: WorldState, camera: CameraConfig) -> np.ndarray:
    """Sphere-traced z-buffer of all scene shapes; background is +inf."""
    if camera.height < 1 or camera.width < 1:
        raise ValueError("camera resolution must be >= 1")
    shape_sets = [world.object_shapes(state, oid) for oid, _ in state.objects]
    h, w = camera.height, camera.width
    fy = fx = 0.5 * h / math.tan(camera.fov / 2.0)
    ys, xs = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    dirs_cam = np.stack(
        [(xs - w / 2.0 + 0.5) / fx, (ys - h / 2.0 + 0.5) / fy, np.ones_like(xs)], axis=-1
    ).reshape(-1, 3)
    dirs_cam /= np.linalg.norm(dirs_cam, axis=1, keepdims=True)
    origin = camera.pose.translation
    dirs = camera.pose.rotate(dirs_cam)

    t = np.zeros(len(dirs))
    alive = np.ones(len(dirs), dtype=bool)
    max_range = 5.0
    for _ in range(128):
        if not alive.any():
            break
        pts = origin[None, :] + t[alive, None] * dirs[alive]
        d = np.full(len(pts), np.inf)
        for ss in shape_sets:
            np.minimum(d, signed_distance_many(ss, pts), out=d)
        t_alive = t[alive] + np.maximum(d, 1e-6)
        hit = d < 1e-5
        escaped = t_alive > max_range
        t[alive] = t_alive
        idx = np.flatnonzero(alive)
        alive[idx[hit | escaped]] = False
    depth = origin[2] * 0.0 + t * (dirs @ camera.pose.rotate(np.array([0.0, 0.0, 1.0])))
    depth = np.where(t >= max_range, np.inf, depth)
    return depth.reshape(h, w)
