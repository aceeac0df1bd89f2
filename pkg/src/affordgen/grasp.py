"""Grasp candidate generation around the affordance peak and product scoring.

A candidate's total score is the mean affordance of its contact region times
the kinematic feasibility of its pose — the selection rule picks the argmax.
The gripper frame convention: +z is the approach (travel) direction, +x the
jaw closing axis; the closed-jaw sweep volume is a box spanning z in
[0, finger_length] ahead of the palm origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .affordance import AffordanceMap, peak_region
from .geometry import PointCloud, Pose, ShapeSet, invert
from .kinematics import GripperSpec, RobotModel, feasibility_detail

DEFAULT_CANDIDATES = 64
N_ROLLS = 4


class NoFeasibleGraspError(RuntimeError):
    """Every scored candidate came out at zero."""


@dataclass(frozen=True)
class GraspCandidate:
    """A hypothesized gripper pose with approach direction and scores.

    `approach` is the unit travel direction of the gripper (pointing into the
    object); the pre-grasp retreat lies along its negative.
    """

    pose: Pose
    approach: np.ndarray
    contact_indices: np.ndarray | None = None
    aff_score: float = 0.0
    kin_score: float = 0.0
    total: float = 0.0
    grasp_config: np.ndarray | None = None


def _orthonormal_frame(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Any (x, y) completing a right-handed frame with unit z."""
    ref = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(ref, z)
    x /= np.linalg.norm(x)
    return x, np.cross(z, x)


def _fibonacci_hemisphere(n: int, normal: np.ndarray) -> np.ndarray:
    """n outward directions on the hemisphere around `normal`, pole first."""
    golden = math.pi * (3.0 - math.sqrt(5.0))
    i = np.arange(n, dtype=float)
    # cos(theta) descends from 1 (the pole) toward the equator
    cos_t = 1.0 - i / max(n, 1) * 0.95
    sin_t = np.sqrt(np.clip(1.0 - cos_t**2, 0.0, 1.0))
    phi = i * golden
    local = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)
    x, y = _orthonormal_frame(normal)
    basis = np.stack([x, y, normal], axis=1)
    return local @ basis.T


def _outward_normal(cloud: PointCloud, at: np.ndarray, restrict: np.ndarray | None = None) -> np.ndarray:
    """Outward surface normal estimated at the cloud point nearest `at`.

    `restrict` limits the nearest-point search (e.g. to the peak region) so
    the anchor lies on the graspable surface rather than a closer stray face.
    """
    pts = cloud.points
    search = pts if restrict is None else pts[restrict]
    nearest = search[np.argmin(np.linalg.norm(search - at, axis=1))]
    ball = pts[np.linalg.norm(pts - nearest, axis=1) < 0.02]
    if len(ball) >= 4:
        centered = ball - ball.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        normal = vt[2]
    else:
        normal = nearest - pts.mean(axis=0)
    # orient away from the interior
    if normal @ (nearest - pts.mean(axis=0)) < 0.0:
        normal = -normal
    n = np.linalg.norm(normal)
    return normal / n if n > 1e-12 else np.array([0.0, 0.0, 1.0])


def generate_candidates(
    cloud: PointCloud,
    amap: AffordanceMap,
    k: int,
    gripper: GripperSpec,
    seed: int,
) -> list[GraspCandidate]:
    """k unscored candidate poses aimed at the peak-region centroid.

    Approach directions come from a Fibonacci-spiral hemisphere around the
    outward surface normal (the first is the normal itself with zero roll);
    wrist roll cycles uniformly; standoff equals the finger length.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(cloud) < 1:
        raise ValueError("empty cloud")
    region = peak_region(amap, cloud)
    aim = region.centroid
    normal = _outward_normal(cloud, aim, restrict=region.indices)
    n_dirs = max(1, math.ceil(k / N_ROLLS))
    outward = _fibonacci_hemisphere(n_dirs, normal)
    rng = np.random.default_rng(np.random.SeedSequence((0x6A, seed)))
    roll_offsets = rng.uniform(0.0, 2.0 * math.pi, size=n_dirs)
    candidates: list[GraspCandidate] = []
    for d in range(n_dirs):
        out = outward[d]
        approach = -out
        x0, y0 = _orthonormal_frame(approach)
        n_rolls = min(N_ROLLS, k - len(candidates))
        for j in range(n_rolls):
            # candidate 0 is the pure-normal, zero-roll grasp
            roll = 0.0 if (d == 0 and j == 0) else roll_offsets[d] + j * (math.pi / N_ROLLS)
            c, s = math.cos(roll), math.sin(roll)
            jaw = c * x0 + s * y0
            y_axis = np.cross(approach, jaw)
            rot = np.stack([jaw, y_axis, approach], axis=1)
            pose = Pose.from_matrix(
                np.block(
                    [[rot, (aim + out * gripper.finger_length)[:, None]], [np.zeros((1, 3)), np.ones((1, 1))]]
                )
            )
            candidates.append(GraspCandidate(pose=pose, approach=approach))
            if len(candidates) == k:
                return candidates
    return candidates


def contact_set(pose: Pose, cloud: PointCloud, gripper: GripperSpec) -> np.ndarray:
    """Indices of cloud points inside the closed-jaw sweep volume."""
    local = invert(pose).apply(cloud.points)
    inside = (
        (np.abs(local[:, 0]) <= gripper.jaw_max_width / 2.0)
        & (np.abs(local[:, 1]) <= gripper.palm_depth / 2.0)
        & (local[:, 2] >= 0.0)
        & (local[:, 2] <= gripper.finger_length)
    )
    return np.flatnonzero(inside)


def score_candidate(
    candidate: GraspCandidate,
    amap: AffordanceMap,
    cloud: PointCloud,
    robot: RobotModel,
    q: np.ndarray,
    obstacles: list[ShapeSet],
    seed: int = 0,
) -> GraspCandidate:
    """Attach contact set, affordance mean, feasibility, and their product."""
    contacts = contact_set(candidate.pose, cloud, robot.gripper)
    if len(contacts) == 0:
        return replace(candidate, contact_indices=contacts, aff_score=0.0, kin_score=0.0, total=0.0)
    aff = float(amap.scores[contacts].mean())
    kin, sol = feasibility_detail(robot, candidate.pose, candidate.approach, q, obstacles, seed=seed)
    return replace(
        candidate,
        contact_indices=contacts,
        aff_score=aff,
        kin_score=kin,
        total=aff * kin,
        grasp_config=sol,
    )


def select(candidates: list[GraspCandidate]) -> tuple[int, GraspCandidate]:
    """Argmax of total score; ties break to the lowest index."""
    if not candidates:
        raise ValueError("empty candidate list")
    best_i = 0
    for i, c in enumerate(candidates):
        if c.total > candidates[best_i].total:
            best_i = i
    if candidates[best_i].total <= 0.0:
        raise NoFeasibleGraspError("all candidate scores are zero")
    return best_i, candidates[best_i]
