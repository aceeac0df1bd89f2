"""Serial-arm models, forward/inverse kinematics, and grasp feasibility scoring.

Arm chains are loaded from bundled YAML files (one per embodiment) holding
joint axes, origin transforms, limits, per-link collision capsules, and the
gripper spec. IK is damped least squares with joint-limit clamping and random
restarts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from .geometry import (
    Pose,
    ShapeSet,
    capsule_shapeset_distance,
    compose,
    pose_error,
    quat_to_matrix,
    _segment_segment_distance,
)

EMBODIMENTS = ("fr3", "panda", "ur5e", "kinova")

IK_POS_TOL = 1e-3
IK_ROT_TOL = 1e-2
IK_DAMPING = 0.05
IK_MAX_ITERS = 200
IK_RESTARTS = 5

PRE_GRASP_OFFSET = 0.08
FEASIBILITY_D_MAX = 2.0 * math.pi


class ConfigurationError(ValueError):
    """Unknown embodiment or malformed robot data file."""


@dataclass(frozen=True)
class GripperSpec:
    jaw_max_width: float
    finger_length: float
    palm_depth: float


@dataclass(frozen=True)
class Joint:
    axis: np.ndarray
    origin: Pose
    lo: float
    hi: float


@dataclass(frozen=True)
class RobotModel:
    """Immutable kinematic chain: revolute joints, tool transform, capsules."""

    name: str
    joints: tuple[Joint, ...]
    tool: Pose
    gripper: GripperSpec
    link_capsules: tuple[tuple[int, np.ndarray, np.ndarray, float], ...]
    home: np.ndarray

    def __post_init__(self):
        # cached chain constants for the fk/ik hot path
        object.__setattr__(
            self, "_origin_rots", tuple(quat_to_matrix(j.origin.rotation) for j in self.joints)
        )
        object.__setattr__(self, "_origin_trans", tuple(j.origin.translation for j in self.joints))
        object.__setattr__(self, "_axes", tuple(j.axis for j in self.joints))
        object.__setattr__(self, "_tool_rot", quat_to_matrix(self.tool.rotation))
        object.__setattr__(self, "_limits_arr", np.array([[j.lo, j.hi] for j in self.joints]))
        object.__setattr__(self, "_chain_origin_rots", np.ascontiguousarray(self._origin_rots))
        object.__setattr__(self, "_chain_origin_trans", np.ascontiguousarray(self._origin_trans))
        object.__setattr__(self, "_chain_axes", np.ascontiguousarray(self._axes))

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def limits(self) -> np.ndarray:
        return self._limits_arr

    def max_reach(self) -> float:
        reach = float(np.linalg.norm(self.tool.translation))
        for j in self.joints:
            reach += float(np.linalg.norm(j.origin.translation))
        return reach

    def clamp(self, q: np.ndarray) -> np.ndarray:
        lim = self.limits
        return np.clip(q, lim[:, 0], lim[:, 1])

    def mid_range(self) -> np.ndarray:
        lim = self.limits
        return 0.5 * (lim[:, 0] + lim[:, 1])


def load_embodiment(name: str) -> RobotModel:
    """Load one of the bundled arms (fr3, panda, ur5e, kinova)."""
    if name not in EMBODIMENTS:
        raise ConfigurationError(f"unknown embodiment {name!r}; expected one of {EMBODIMENTS}")
    text = resources.files("affordgen").joinpath(f"data/robots/{name}.yaml").read_text()
    raw = yaml.safe_load(text)
    if raw.get("schema") != "robot/1":
        raise ConfigurationError(f"unsupported robot schema {raw.get('schema')!r}")
    joints = tuple(
        Joint(
            axis=np.asarray(j["axis"], dtype=float),
            origin=Pose.from_rpy(j["origin"].get("xyz", (0, 0, 0)), j["origin"].get("rpy", (0, 0, 0))),
            lo=float(j["limits"][0]),
            hi=float(j["limits"][1]),
        )
        for j in raw["joints"]
    )
    tool = Pose.from_rpy(raw["tool"].get("xyz", (0, 0, 0)), raw["tool"].get("rpy", (0, 0, 0)))
    g = raw["gripper"]
    gripper = GripperSpec(
        jaw_max_width=float(g["jaw_max_width"]),
        finger_length=float(g["finger_length"]),
        palm_depth=float(g["palm_depth"]),
    )
    capsules = tuple(
        (int(c["link"]), np.asarray(c["a"], dtype=float), np.asarray(c["b"], dtype=float), float(c["radius"]))
        for c in raw["link_capsules"]
    )
    home = np.asarray(raw["home"], dtype=float)
    if len(home) != len(joints):
        raise ConfigurationError("home config length mismatch")
    if raw["dof"] != len(joints):
        raise ConfigurationError("declared dof does not match joint count")
    return RobotModel(name, joints, tool, gripper, capsules, home)


@dataclass(frozen=True)
class FkResult:
    ee: Pose
    link_poses: tuple[Pose, ...]


def _axis_rot(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis (fast path for +z)."""
    c = math.cos(angle)
    s = math.sin(angle)
    if axis[2] == 1.0 and axis[0] == 0.0 and axis[1] == 0.0:
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    x, y, z = axis
    ic = 1.0 - c
    return np.array(
        [
            [c + x * x * ic, x * y * ic - z * s, x * z * ic + y * s],
            [y * x * ic + z * s, c + y * y * ic, y * z * ic - x * s],
            [z * x * ic - y * s, z * y * ic + x * s, c + z * z * ic],
        ]
    )


def _fk_chain(robot: RobotModel, q: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-link world rotation matrices and translations (fast path, no Pose)."""
    rots: list[np.ndarray] = []
    trans: list[np.ndarray] = []
    r = np.eye(3)
    t = np.zeros(3)
    for orot, otr, axis, angle in zip(robot._origin_rots, robot._origin_trans, robot._axes, q):
        t = r @ otr + t
        r = (r @ orot) @ _axis_rot(axis, float(angle))
        rots.append(r)
        trans.append(t)
    return rots, trans


def fk(robot: RobotModel, q: np.ndarray) -> FkResult:
    """End-effector and per-link poses for configuration q."""
    q = np.asarray(q, dtype=float)
    if q.shape != (robot.dof,):
        raise ValueError(f"expected {robot.dof} joint values, got {q.shape}")
    rots, trans = _fk_chain(robot, q)
    links = tuple(Pose.from_matrix(_homog(r, t)) for r, t in zip(rots, trans))
    ee = compose(links[-1], robot.tool)
    return FkResult(ee, links)


def _homog(r: np.ndarray, t: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = r
    m[:3, 3] = t
    return m


def _ee_fast(robot: RobotModel, q: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[np.ndarray], list[np.ndarray]]:
    rots, trans = _fk_chain(robot, q)
    ee_r = rots[-1] @ robot._tool_rot
    ee_t = rots[-1] @ robot.tool.translation + trans[-1]
    return ee_r, ee_t, rots, trans


def _jacobian(robot: RobotModel, rots, trans, ee_t: np.ndarray) -> np.ndarray:
    """Geometric Jacobian (6 x dof): linear rows then angular rows."""
    n = robot.dof
    jac = np.empty((6, n))
    for i in range(n):
        r = rots[i]
        a = robot._axes[i]
        # world-frame joint axis and its moment arm to the end effector
        ax = r[0, 0] * a[0] + r[0, 1] * a[1] + r[0, 2] * a[2]
        ay = r[1, 0] * a[0] + r[1, 1] * a[1] + r[1, 2] * a[2]
        az = r[2, 0] * a[0] + r[2, 1] * a[1] + r[2, 2] * a[2]
        t = trans[i]
        px = ee_t[0] - t[0]
        py = ee_t[1] - t[1]
        pz = ee_t[2] - t[2]
        jac[0, i] = ay * pz - az * py
        jac[1, i] = az * px - ax * pz
        jac[2, i] = ax * py - ay * px
        jac[3, i] = ax
        jac[4, i] = ay
        jac[5, i] = az
    return jac


def _rotation_error_vec(r_cur: np.ndarray, r_tgt: np.ndarray) -> np.ndarray:
    """Axis-angle error vector rotating r_cur onto r_tgt."""
    r_err = r_tgt @ r_cur.T
    cos_a = min(1.0, max(-1.0, (np.trace(r_err) - 1.0) / 2.0))
    angle = math.acos(cos_a)
    if angle < 1e-12:
        return np.zeros(3)
    vec = np.array([r_err[2, 1] - r_err[1, 2], r_err[0, 2] - r_err[2, 0], r_err[1, 0] - r_err[0, 1]])
    if angle > math.pi - 1e-6:
        # near pi the antisymmetric part vanishes; recover the axis from the
        # dominant diagonal entry and the symmetric off-diagonals
        k = int(np.argmax(np.diag(r_err)))
        axis = np.empty(3)
        axis[k] = math.sqrt(max(0.0, (r_err[k, k] + 1.0) / 2.0))
        for j in range(3):
            if j != k:
                axis[j] = (r_err[k, j] + r_err[j, k]) / (4.0 * axis[k])
        axis /= np.linalg.norm(axis)
        return axis * angle
    return vec / (2.0 * math.sin(angle)) * angle


try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


@_njit(cache=True)
def _dls_core(origin_rots, origin_trans, axes, tool_rot, tool_t, limits, target_r, target_t, q0,
              max_iters, pos_tol, rot_tol, damping):  # pragma: no cover - jit
    n = q0.shape[0]
    q = np.empty(n)
    for i in range(n):
        v = q0[i]
        if v < limits[i, 0]:
            v = limits[i, 0]
        elif v > limits[i, 1]:
            v = limits[i, 1]
        q[i] = v
    rots = np.empty((n, 3, 3))
    trans = np.empty((n, 3))
    jac = np.empty((6, n))
    lam = damping
    best_err = 1e30
    stall = 0
    for _ in range(max_iters):
        # forward chain
        r = np.eye(3)
        t = np.zeros(3)
        for i in range(n):
            for k in range(3):
                trans_k = t[k]
                for m in range(3):
                    trans_k += r[k, m] * origin_trans[i, m]
                trans[i, k] = trans_k
            ro = r @ origin_rots[i]
            c = np.cos(q[i])
            s = np.sin(q[i])
            ax = axes[i]
            if ax[2] == 1.0 and ax[0] == 0.0 and ax[1] == 0.0:
                rz = np.empty((3, 3))
                rz[0, 0] = c
                rz[0, 1] = -s
                rz[0, 2] = 0.0
                rz[1, 0] = s
                rz[1, 1] = c
                rz[1, 2] = 0.0
                rz[2, 0] = 0.0
                rz[2, 1] = 0.0
                rz[2, 2] = 1.0
            else:
                x, y, z = ax[0], ax[1], ax[2]
                ic = 1.0 - c
                rz = np.empty((3, 3))
                rz[0, 0] = c + x * x * ic
                rz[0, 1] = x * y * ic - z * s
                rz[0, 2] = x * z * ic + y * s
                rz[1, 0] = y * x * ic + z * s
                rz[1, 1] = c + y * y * ic
                rz[1, 2] = y * z * ic - x * s
                rz[2, 0] = z * x * ic - y * s
                rz[2, 1] = z * y * ic + x * s
                rz[2, 2] = c + z * z * ic
            r = ro @ rz
            rots[i] = r
            t = trans[i]
        ee_r = r @ tool_rot
        ee_t = r @ tool_t + t
        # position and orientation error
        e_pos = target_t - ee_t
        r_err = target_r @ ee_r.T
        tr = r_err[0, 0] + r_err[1, 1] + r_err[2, 2]
        cos_a = (tr - 1.0) / 2.0
        if cos_a > 1.0:
            cos_a = 1.0
        elif cos_a < -1.0:
            cos_a = -1.0
        angle = np.arccos(cos_a)
        e_rot = np.zeros(3)
        if angle >= 1e-12:
            vx = r_err[2, 1] - r_err[1, 2]
            vy = r_err[0, 2] - r_err[2, 0]
            vz = r_err[1, 0] - r_err[0, 1]
            if angle > np.pi - 1e-6:
                kk = 0
                if r_err[1, 1] > r_err[kk, kk]:
                    kk = 1
                if r_err[2, 2] > r_err[kk, kk]:
                    kk = 2
                axv = np.empty(3)
                diag = (r_err[kk, kk] + 1.0) / 2.0
                if diag < 0.0:
                    diag = 0.0
                axv[kk] = np.sqrt(diag)
                for j in range(3):
                    if j != kk:
                        axv[j] = (r_err[kk, j] + r_err[j, kk]) / (4.0 * axv[kk])
                nv = np.sqrt(axv[0] ** 2 + axv[1] ** 2 + axv[2] ** 2)
                e_rot = axv / nv * angle
            else:
                sc = angle / (2.0 * np.sin(angle))
                e_rot[0] = vx * sc
                e_rot[1] = vy * sc
                e_rot[2] = vz * sc
        pe = np.sqrt(e_pos[0] ** 2 + e_pos[1] ** 2 + e_pos[2] ** 2)
        re = np.sqrt(e_rot[0] ** 2 + e_rot[1] ** 2 + e_rot[2] ** 2)
        if pe <= pos_tol and re <= rot_tol:
            return q, True
        err = pe + 0.1 * re
        if err < best_err - 1e-10:
            best_err = err
            stall = 0
            lam = lam * 0.5
            if lam < damping:
                lam = damping
        else:
            stall += 1
            lam = lam * 2.0
            if lam > 1.0:
                lam = 1.0
            if stall >= 20:
                return q, False
        # geometric jacobian
        for i in range(n):
            ri = rots[i]
            ax = axes[i]
            wx = ri[0, 0] * ax[0] + ri[0, 1] * ax[1] + ri[0, 2] * ax[2]
            wy = ri[1, 0] * ax[0] + ri[1, 1] * ax[1] + ri[1, 2] * ax[2]
            wz = ri[2, 0] * ax[0] + ri[2, 1] * ax[1] + ri[2, 2] * ax[2]
            px = ee_t[0] - trans[i, 0]
            py = ee_t[1] - trans[i, 1]
            pz = ee_t[2] - trans[i, 2]
            jac[0, i] = wy * pz - wz * py
            jac[1, i] = wz * px - wx * pz
            jac[2, i] = wx * py - wy * px
            jac[3, i] = wx
            jac[4, i] = wy
            jac[5, i] = wz
        e6 = np.empty(6)
        e6[0] = e_pos[0]
        e6[1] = e_pos[1]
        e6[2] = e_pos[2]
        e6[3] = e_rot[0]
        e6[4] = e_rot[1]
        e6[5] = e_rot[2]
        jjt = jac @ jac.T
        for k in range(6):
            jjt[k, k] += lam * lam
        dq = jac.T @ np.linalg.solve(jjt, e6)
        if n > 6:
            # nullspace centering: redundant arms drift toward mid-range,
            # dodging joint limits along tracked paths
            ns = np.empty(n)
            for i in range(n):
                ns[i] = 0.1 * (0.5 * (limits[i, 0] + limits[i, 1]) - q[i])
            y = np.linalg.solve(jjt, jac @ ns)
            dq += ns - jac.T @ y
        step = 0.0
        for i in range(n):
            a = abs(dq[i])
            if a > step:
                step = a
        if step > 0.5:
            dq *= 0.5 / step
        for i in range(n):
            v = q[i] + dq[i]
            if v < limits[i, 0]:
                v = limits[i, 0]
            elif v > limits[i, 1]:
                v = limits[i, 1]
            q[i] = v
    return q, False


def _dls_solve(
    robot: RobotModel, target_r: np.ndarray, target_t: np.ndarray, q0: np.ndarray
) -> np.ndarray | None:
    if _HAVE_NUMBA:
        sol, ok = _dls_core(
            robot._chain_origin_rots,
            robot._chain_origin_trans,
            robot._chain_axes,
            robot._tool_rot,
            robot.tool.translation,
            robot._limits_arr,
            target_r,
            np.asarray(target_t, dtype=float),
            np.asarray(q0, dtype=float),
            IK_MAX_ITERS,
            IK_POS_TOL,
            IK_ROT_TOL,
            IK_DAMPING,
        )
        return sol if ok else None
    return _dls_solve_py(robot, target_r, target_t, q0)


def _dls_solve_py(
    robot: RobotModel, target_r: np.ndarray, target_t: np.ndarray, q0: np.ndarray
) -> np.ndarray | None:
    q = robot.clamp(np.array(q0, dtype=float))
    lam = IK_DAMPING
    best_err = math.inf
    stall = 0
    for _ in range(IK_MAX_ITERS):
        ee_r, ee_t, rots, trans = _ee_fast(robot, q)
        e_pos = target_t - ee_t
        e_rot = _rotation_error_vec(ee_r, target_r)
        pe = math.sqrt(float(e_pos @ e_pos))
        re = math.sqrt(float(e_rot @ e_rot))
        if pe <= IK_POS_TOL and re <= IK_ROT_TOL:
            return q
        err = pe + 0.1 * re
        if err < best_err - 1e-10:
            best_err = err
            stall = 0
            lam = max(IK_DAMPING, lam * 0.5)
        else:
            # raise damping while the error plateaus, then give up
            stall += 1
            lam = min(1.0, lam * 2.0)
            if stall >= 20:
                return None
        jac = _jacobian(robot, rots, trans, ee_t)
        e = np.concatenate([e_pos, e_rot])
        jjt = jac @ jac.T
        jjt.flat[::7] += lam * lam
        dq = jac.T @ np.linalg.solve(jjt, e)
        if robot.dof > 6:
            # nullspace centering mirrors the jit path
            ns = 0.1 * (robot.mid_range() - q)
            dq += ns - jac.T @ np.linalg.solve(jjt, jac @ ns)
        step = float(np.max(np.abs(dq)))
        if step > 0.5:
            dq *= 0.5 / step
        q = robot.clamp(q + dq)
    return None


def ik(
    robot: RobotModel,
    target: Pose,
    seed_config: np.ndarray,
    seed: int = 0,
    restarts: int = IK_RESTARTS,
) -> np.ndarray | None:
    """Damped-least-squares IK; None when unconverged within the budget.

    Results always satisfy joint limits (per-iteration clamping).
    """
    target_t = np.asarray(target.translation, dtype=float)
    if float(np.linalg.norm(target_t)) > robot.max_reach():
        return None
    target_r = quat_to_matrix(target.rotation)
    sol = _dls_solve(robot, target_r, target_t, np.asarray(seed_config, dtype=float))
    if sol is not None:
        return sol
    rng = np.random.default_rng(np.random.SeedSequence((0x1C, seed)))
    lim = robot.limits
    for attempt in range(restarts):
        q0 = robot.mid_range() if attempt == 0 else rng.uniform(lim[:, 0], lim[:, 1])
        sol = _dls_solve(robot, target_r, target_t, q0)
        if sol is not None:
            return sol
    return None


# -- collision of the arm itself ------------------------------------------------


def arm_collides(robot: RobotModel, q: np.ndarray, obstacles: list[ShapeSet]) -> bool:
    """True when any link capsule touches an obstacle or a distal capsule
    folds back onto a proximal one.

    The capsules span whole limbs and meet at joints, so self-collision only
    compares pairs at least four links apart (hand vs upper arm); nearer pairs
    legitimately approach each other whenever the wrist pitches.
    """
    rots, trans = _fk_chain(robot, np.asarray(q, dtype=float))
    world: list[tuple[int, np.ndarray, np.ndarray, float]] = []
    for link, a, b, radius in robot.link_capsules:
        r, t = rots[link], trans[link]
        world.append((link, r @ a + t, r @ b + t, radius))
    for _, a, b, radius in world:
        for obs in obstacles:
            if capsule_shapeset_distance(a, b, radius, obs) <= 0.0:
                return True
    for i in range(len(world)):
        for j in range(i + 1, len(world)):
            li, ai, bi, ri = world[i]
            lj, aj, bj, rj = world[j]
            if abs(lj - li) < 4:
                continue
            if _segment_segment_distance(ai, bi, aj, bj) - ri - rj <= 0.0:
                return True
    return False


def feasibility(
    robot: RobotModel,
    grasp: Pose,
    approach: np.ndarray,
    q: np.ndarray,
    obstacles: list[ShapeSet],
    seed: int = 0,
) -> float:
    """Kinematic-feasibility score in [0, 1].

    Zero when IK fails for the grasp or its pre-grasp retreat, or when the
    solved arm collides. Otherwise joint-limit margin times proximity to q.
    """
    return feasibility_detail(robot, grasp, approach, q, obstacles, seed)[0]


def feasibility_detail(
    robot: RobotModel,
    grasp: Pose,
    approach: np.ndarray,
    q: np.ndarray,
    obstacles: list[ShapeSet],
    seed: int = 0,
) -> tuple[float, np.ndarray | None]:
    """feasibility() plus the solved grasp configuration (None on failure)."""
    q = np.asarray(q, dtype=float)
    sol = ik(robot, grasp, q, seed=seed)
    if sol is None:
        return 0.0, None
    pre = Pose(grasp.rotation, grasp.translation - PRE_GRASP_OFFSET * np.asarray(approach, dtype=float))
    pre_sol = ik(robot, pre, sol, seed=seed + 1)
    if pre_sol is None:
        return 0.0, None
    if obstacles and (arm_collides(robot, sol, obstacles) or arm_collides(robot, pre_sol, obstacles)):
        return 0.0, None
    lim = robot.limits
    half_range = 0.5 * (lim[:, 1] - lim[:, 0])
    margin = np.minimum(sol - lim[:, 0], lim[:, 1] - sol) / half_range
    m = float(margin.min())
    d = float(np.linalg.norm(sol - q))
    score = m * (1.0 - min(d, FEASIBILITY_D_MAX) / FEASIBILITY_D_MAX)
    # reachable and collision-free implies strictly positive, even when a
    # joint is clamped exactly onto its limit
    return min(1.0, max(1e-6, score)), sol
