"""Rigid-body math, primitive shapes, surface sampling, and distance queries.

Conventions: quaternions are scalar-first (w, x, y, z) and renormalized after
every composition; translations are in meters. Shape unions take the minimum
of per-primitive signed distances, which is exact outside the union and
conservative inside overlaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_QUAT_TOL = 1e-9


def _normalize_quat(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(q @ q))
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    """Unit quaternion for a rotation of `angle` radians about `axis`."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], (axis / n) * math.sin(half)))


def quat_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Intrinsic x-y-z (roll, pitch, yaw) Euler angles to quaternion."""
    qx = quat_from_axis_angle((1.0, 0.0, 0.0), roll)
    qy = quat_from_axis_angle((0.0, 1.0, 0.0), pitch)
    qz = quat_from_axis_angle((0.0, 0.0, 1.0), yaw)
    return _quat_mul(_quat_mul(qz, qy), qx)


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_angle(q: np.ndarray) -> float:
    """Rotation angle in [0, pi] encoded by a unit quaternion."""
    w = min(1.0, abs(float(q[0])))
    return 2.0 * math.acos(w)


def quat_slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Spherical interpolation between unit quaternions (shortest path)."""
    dot = float(a @ b)
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-12:
        return _normalize_quat(a + t * (b - a))
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    return _normalize_quat(
        (math.sin((1.0 - t) * theta) / s) * a + (math.sin(t * theta) / s) * b
    )


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation as a scalar-first unit quaternion + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if q.shape != (4,) or t.shape != (3,):
            raise ValueError("Pose expects quaternion (4,) and translation (3,)")
        if abs(float(q @ q) - 1.0) > 1e-6:
            q = _normalize_quat(q)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_rpy(xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(quat_from_rpy(*rpy), np.asarray(xyz, dtype=float))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=float)
        r = m[:3, :3]
        w = math.sqrt(max(0.0, 1.0 + r[0, 0] + r[1, 1] + r[2, 2])) / 2.0
        if w > 1e-6:
            x = (r[2, 1] - r[1, 2]) / (4 * w)
            y = (r[0, 2] - r[2, 0]) / (4 * w)
            z = (r[1, 0] - r[0, 1]) / (4 * w)
        else:
            # w ~ 0: pick the dominant diagonal element for stability
            d = np.diag(r)
            i = int(np.argmax(d))
            j, k = (i + 1) % 3, (i + 2) % 3
            s = math.sqrt(max(1e-18, 1.0 + r[i, i] - r[j, j] - r[k, k])) * 2.0
            comp = [0.0, 0.0, 0.0]
            comp[i] = s / 4.0
            comp[j] = (r[j, i] + r[i, j]) / s
            comp[k] = (r[k, i] + r[i, k]) / s
            w = (r[k, j] - r[j, k]) / s
            x, y, z = comp
        return Pose(np.array([w, x, y, z]), m[:3, 3].copy())

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or many points (N, 3)."""
        pts = np.asarray(points, dtype=float)
        r = quat_to_matrix(self.rotation)
        return pts @ r.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate vectors without translating."""
        return np.asarray(vectors, dtype=float) @ quat_to_matrix(self.rotation).T


def compose(a: Pose, b: Pose) -> Pose:
    """Rigid composition a∘b, quaternion renormalized."""
    q = _normalize_quat(_quat_mul(a.rotation, b.rotation))
    t = a.apply(b.translation)
    return Pose(q, t)


def invert(p: Pose) -> Pose:
    q = p.rotation * np.array([1.0, -1.0, -1.0, -1.0])
    r = quat_to_matrix(q)
    return Pose(q, -(r @ p.translation))


def pose_error(a: Pose, b: Pose) -> tuple[float, float]:
    """(position distance, rotation angle) between two poses."""
    dp = float(np.linalg.norm(a.translation - b.translation))
    dq = _quat_mul(a.rotation * np.array([1.0, -1.0, -1.0, -1.0]), b.rotation)
    return dp, quat_angle(_normalize_quat(dq))


@dataclass(frozen=True)
class PointCloud:
    """Surface samples (N, 3) with optional per-point part labels (N,)."""

    points: np.ndarray
    part_labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("PointCloud expects (N, 3) with N >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinates in point cloud")
        object.__setattr__(self, "points", pts)
        if self.part_labels is not None:
            lbl = np.asarray(self.part_labels, dtype=np.int32)
            if lbl.shape != (pts.shape[0],):
                raise ValueError("part_labels length must match points")
            object.__setattr__(self, "part_labels", lbl)

    def __len__(self) -> int:
        return self.points.shape[0]

    def transformed(self, pose: Pose) -> "PointCloud":
        return PointCloud(pose.apply(self.points), self.part_labels)


BOX = "box"
SPHERE = "sphere"
CYLINDER = "cylinder"
CAPSULE = "capsule"
TORUS_ARC = "torus_arc"

_KINDS = (BOX, SPHERE, CYLINDER, CAPSULE, TORUS_ARC)


@dataclass(frozen=True)
class Shape:
    """One geometric primitive with a local pose and a part identifier.

    dims per kind:
      box: (hx, hy, hz) half-extents
      sphere: (r,)
      cylinder: (r, half_height), axis +z
      capsule: (r, half_length), axis +z
      torus_arc: (major_r, minor_r, span) — tube around a circular arc in the
        local xy-plane centered on +x, with spherical end caps
    """

    kind: str
    dims: tuple[float, ...]
    local_pose: Pose = field(default_factory=Pose.identity)
    part_id: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        dims = tuple(float(d) for d in self.dims)
        n_expected = {BOX: 3, SPHERE: 1, CYLINDER: 2, CAPSULE: 2, TORUS_ARC: 3}[self.kind]
        if len(dims) != n_expected:
            raise ValueError(f"{self.kind} expects {n_expected} dims, got {len(dims)}")
        if any(d <= 0.0 for d in dims):
            raise ValueError("shape dimensions must be positive")
        if self.kind == TORUS_ARC and not (0.0 < dims[2] <= 2.0 * math.pi + 1e-12):
            raise ValueError("torus arc span must be in (0, 2*pi]")
        object.__setattr__(self, "dims", dims)

    # -- analytic surface area (used for area-weighted sampling) --
    def area(self) -> float:
        if self.kind == BOX:
            hx, hy, hz = self.dims
            return 8.0 * (hx * hy + hy * hz + hz * hx)
        if self.kind == SPHERE:
            return 4.0 * math.pi * self.dims[0] ** 2
        if self.kind == CYLINDER:
            r, hh = self.dims
            return 2.0 * math.pi * r * (2.0 * hh) + 2.0 * math.pi * r * r
        if self.kind == CAPSULE:
            r, hl = self.dims
            return 2.0 * math.pi * r * (2.0 * hl) + 4.0 * math.pi * r * r
        major, minor, span = self.dims
        return span * major * 2.0 * math.pi * minor + 4.0 * math.pi * minor * minor

    def bounding_capsule(self) -> tuple[np.ndarray, np.ndarray, float]:
        """(endpoint a, endpoint b, radius) in the shape's local frame."""
        if self.kind == BOX:
            hx, hy, hz = self.dims
            axis = int(np.argmax(self.dims))
            half = self.dims[axis]
            others = [d for i, d in enumerate(self.dims) if i != axis]
            r = math.hypot(*others)
            a = np.zeros(3)
            b = np.zeros(3)
            a[axis], b[axis] = -half, half
            return a, b, r
        if self.kind == SPHERE:
            return np.zeros(3), np.zeros(3), self.dims[0]
        if self.kind in (CYLINDER, CAPSULE):
            r, h = self.dims
            return np.array([0.0, 0.0, -h]), np.array([0.0, 0.0, h]), r
        major, minor, span = self.dims
        return np.zeros(3), np.zeros(3), major + minor


def _sdf_local(shape: Shape, pts: np.ndarray) -> np.ndarray:
    """Exact signed distance of local-frame points (N, 3) to one primitive."""
    if shape.kind == SPHERE:
        return np.linalg.norm(pts, axis=1) - shape.dims[0]
    if shape.kind == BOX:
        half = np.array(shape.dims)
        q = np.abs(pts) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside
    if shape.kind == CYLINDER:
        r, hh = shape.dims
        d_r = np.hypot(pts[:, 0], pts[:, 1]) - r
        d_z = np.abs(pts[:, 2]) - hh
        q = np.stack([d_r, d_z], axis=1)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside
    if shape.kind == CAPSULE:
        r, hl = shape.dims
        z = np.clip(pts[:, 2], -hl, hl)
        d = pts.copy()
        d[:, 2] -= z
        return np.linalg.norm(d, axis=1) - r
    major, minor, span = shape.dims
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    phi = np.clip(phi, -span / 2.0, span / 2.0)
    cx = major * np.cos(phi)
    cy = major * np.sin(phi)
    d = pts - np.stack([cx, cy, np.zeros(len(pts))], axis=1)
    return np.linalg.norm(d, axis=1) - minor


@dataclass(frozen=True)
class ShapeSet:
    """Union of primitives under a common world pose."""

    shapes: tuple[Shape, ...]
    world_pose: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        shapes = tuple(self.shapes)
        if not shapes:
            raise ValueError("ShapeSet must contain at least one shape")
        object.__setattr__(self, "shapes", shapes)

    def posed(self, pose: Pose) -> "ShapeSet":
        return ShapeSet(self.shapes, pose)

    def shape_world_pose(self, shape: Shape) -> Pose:
        return compose(self.world_pose, shape.local_pose)

    def lowest_z(self) -> float:
        """Exact minimum world z over the union surface (vectorized per kind)."""
        lo = math.inf
        for s in self.shapes:
            wp = self.shape_world_pose(s)
            r = quat_to_matrix(wp.rotation)
            cz = wp.translation[2]
            if s.kind == SPHERE:
                lo = min(lo, cz - s.dims[0])
            elif s.kind == BOX:
                half = np.array(s.dims)
                lo = min(lo, cz - float(np.abs(r[2]) @ half))
            elif s.kind in (CYLINDER, CAPSULE):
                rad, h = s.dims
                axis_z = abs(r[2, 2])
                lateral = math.sqrt(max(0.0, 1.0 - axis_z * axis_z))
                if s.kind == CAPSULE:
                    lo = min(lo, cz - h * axis_z - rad)
                else:
                    lo = min(lo, cz - h * axis_z - rad * lateral)
            else:
                major, minor, span = s.dims
                phis = np.linspace(-span / 2.0, span / 2.0, 64)
                centers = np.stack(
                    [major * np.cos(phis), major * np.sin(phis), np.zeros(64)], axis=1
                )
                world_z = wp.apply(centers)[:, 2]
                lo = min(lo, float(world_z.min()) - minor)
        return lo


def signed_distance(obj: ShapeSet, p) -> float:
    """Signed distance from point(s) to the union surface (min over primitives)."""
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    d = signed_distance_many(obj, pts)
    return float(d[0]) if np.asarray(p).ndim == 1 else d


def signed_distance_many(obj: ShapeSet, pts: np.ndarray) -> np.ndarray:
    best = np.full(len(pts), np.inf)
    for s in obj.shapes:
        inv = invert(compose(obj.world_pose, s.local_pose))
        np.minimum(best, _sdf_local(s, inv.apply(pts)), out=best)
    return best


# -- surface sampling ---------------------------------------------------------


def _sample_primitive(shape: Shape, n: int, rng: np.random.Generator) -> np.ndarray:
    """n area-uniform local-frame surface points of one primitive."""
    if shape.kind == SPHERE:
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * shape.dims[0]
    if shape.kind == BOX:
        hx, hy, hz = shape.dims
        areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
        face = rng.choice(6, size=n, p=areas / areas.sum())
        u = rng.uniform(-1.0, 1.0, size=n)
        v = rng.uniform(-1.0, 1.0, size=n)
        pts = np.empty((n, 3))
        signs = np.where(face % 2 == 0, 1.0, -1.0)
        ax = face // 2
        for i, (a, b) in enumerate(((1, 2), (0, 2), (0, 1))):
            m = ax == i
            pts[m, i] = signs[m] * shape.dims[i]
            pts[m, a] = u[m] * shape.dims[a]
            pts[m, b] = v[m] * shape.dims[b]
        return pts
    if shape.kind == CYLINDER:
        r, hh = shape.dims
        a_side = 2.0 * math.pi * r * 2.0 * hh
        a_cap = math.pi * r * r
        which = rng.choice(3, size=n, p=np.array([a_side, a_cap, a_cap]) / (a_side + 2 * a_cap))
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
        pts = np.empty((n, 3))
        side = which == 0
        pts[side, 0] = r * np.cos(theta[side])
        pts[side, 1] = r * np.sin(theta[side])
        pts[side, 2] = rng.uniform(-hh, hh, size=int(side.sum()))
        for w, z in ((1, hh), (2, -hh)):
            m = which == w
            rr = r * np.sqrt(rng.uniform(0.0, 1.0, size=int(m.sum())))
            pts[m, 0] = rr * np.cos(theta[m])
            pts[m, 1] = rr * np.sin(theta[m])
            pts[m, 2] = z
        return pts
    if shape.kind == CAPSULE:
        r, hl = shape.dims
        a_side = 2.0 * math.pi * r * 2.0 * hl
        a_caps = 4.0 * math.pi * r * r
        cap = rng.uniform(size=n) < a_caps / (a_side + a_caps)
        pts = np.empty((n, 3))
        n_cap = int(cap.sum())
        v = rng.normal(size=(n_cap, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        v *= r
        v[:, 2] += np.where(v[:, 2] >= 0.0, hl, -hl)
        pts[cap] = v
        n_side = n - n_cap
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n_side)
        pts[~cap, 0] = r * np.cos(theta)
        pts[~cap, 1] = r * np.sin(theta)
        pts[~cap, 2] = rng.uniform(-hl, hl, size=n_side)
        return pts
    major, minor, span = shape.dims
    a_tube = span * major * 2.0 * math.pi * minor
    a_caps = 4.0 * math.pi * minor * minor
    cap = rng.uniform(size=n) < a_caps / (a_tube + a_caps)
    pts = np.empty((n, 3))
    n_cap = int(cap.sum())
    if n_cap:
        end = rng.integers(0, 2, size=n_cap)
        sign = np.where(end == 0, -1.0, 1.0)
        phi_end = sign * span / 2.0
        v = rng.normal(size=(n_cap, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        # keep only the hemisphere outside the arc span (flip inward samples)
        tangent = np.stack([-np.sin(phi_end), np.cos(phi_end), np.zeros(n_cap)], axis=1)
        outward = tangent * sign[:, None]
        dot = np.sum(v * outward, axis=1)
        v[dot < 0.0] -= 2.0 * dot[dot < 0.0, None] * outward[dot < 0.0]
        center = np.stack(
            [major * np.cos(phi_end), major * np.sin(phi_end), np.zeros(n_cap)], axis=1
        )
        pts[cap] = center + v * minor
    n_tube = n - n_cap
    # tube sampling is uniform in (phi, psi); the r_major >> r_minor distortion
    # is corrected by rejection against the exact area density
    phi = np.empty(n_tube)
    psi = np.empty(n_tube)
    need = np.ones(n_tube, dtype=bool)
    while need.any():
        k = int(need.sum())
        cand_phi = rng.uniform(-span / 2.0, span / 2.0, size=k)
        cand_psi = rng.uniform(0.0, 2.0 * math.pi, size=k)
        density = (major + minor * np.cos(cand_psi)) / (major + minor)
        keep = rng.uniform(size=k) < density
        idx = np.flatnonzero(need)[keep]
        phi[idx] = cand_phi[keep]
        psi[idx] = cand_psi[keep]
        need[idx] = False
    ring = major + minor * np.cos(psi)
    pts[~cap] = np.stack([ring * np.cos(phi), ring * np.sin(phi), minor * np.sin(psi)], axis=1)
    return pts


def sample_surface(obj: ShapeSet, n: int, seed: int) -> PointCloud:
    """n area-weighted surface samples of the union, labeled by part_id.

    Points falling strictly inside another primitive are rejected and redrawn,
    so every returned point lies on the union boundary.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((_SAMPLE_STREAM, seed)))
    areas = np.array([s.area() for s in obj.shapes])
    probs = areas / areas.sum()
    points = np.empty((n, 3))
    labels = np.empty(n, dtype=np.int32)
    filled = 0
    attempts = 0
    while filled < n:
        attempts += 1
        if attempts > 200:
            raise RuntimeError("surface sampling failed to converge; shapes overlap badly")
        k = n - filled
        picks = rng.choice(len(obj.shapes), size=k, p=probs)
        batch = np.empty((k, 3))
        batch_lbl = np.empty(k, dtype=np.int32)
        for i, s in enumerate(obj.shapes):
            m = picks == i
            cnt = int(m.sum())
            if cnt == 0:
                continue
            local = _sample_primitive(s, cnt, rng)
            batch[m] = compose(obj.world_pose, s.local_pose).apply(local)
            batch_lbl[m] = s.part_id
        if len(obj.shapes) > 1:
            keep = signed_distance_many(obj, batch) >= -1e-9
        else:
            keep = np.ones(k, dtype=bool)
        cnt = int(keep.sum())
        points[filled : filled + cnt] = batch[keep]
        labels[filled : filled + cnt] = batch_lbl[keep]
        filled += cnt
    return PointCloud(points, labels)


_SAMPLE_STREAM = 0x5A5A


# -- collision ----------------------------------------------------------------


def _segment_segment_distance(p1, q1, p2, q2) -> float:
    """Minimum distance between segments [p1,q1] and [p2,q2]."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    if a <= 1e-18 and e <= 1e-18:
        return float(np.linalg.norm(r))
    if a <= 1e-18:
        s, t = 0.0, min(1.0, max(0.0, f / e))
    else:
        c = float(d1 @ r)
        if e <= 1e-18:
            t, s = 0.0, min(1.0, max(0.0, -c / a))
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > 1e-18 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, min(1.0, max(0.0, -c / a))
            elif t > 1.0:
                t, s = 1.0, min(1.0, max(0.0, (b - c) / a))
    closest1 = p1 + s * d1
    closest2 = p2 + t * d2
    return float(np.linalg.norm(closest1 - closest2))


def _is_round(shape: Shape) -> bool:
    return shape.kind in (SPHERE, CAPSULE)


def _world_capsule(owner: ShapeSet, s: Shape) -> tuple[np.ndarray, np.ndarray, float]:
    a, b, r = s.bounding_capsule()
    wp = compose(owner.world_pose, s.local_pose)
    return wp.apply(a), wp.apply(b), r


@dataclass(frozen=True)
class CollisionResult:
    colliding: bool
    min_distance: float


def collide(a: ShapeSet, b: ShapeSet) -> CollisionResult:
    """Pairwise union distance: exact for sphere/capsule pairs, conservative
    (bounding-capsule) otherwise — never reports a false negative.
    """
    best = math.inf
    for sa in a.shapes:
        ca = _world_capsule(a, sa)
        for sb in b.shapes:
            cb = _world_capsule(b, sb)
            d = _segment_segment_distance(ca[0], ca[1], cb[0], cb[1]) - ca[2] - cb[2]
            # exact for round pairs; conservative bound otherwise
            best = min(best, d)
    return CollisionResult(best <= 0.0, best)


def capsule_shapeset_distance(
    a: np.ndarray, b: np.ndarray, radius: float, obj: ShapeSet, step: float = 0.01
) -> float:
    """Tight distance from a capsule (world segment a-b, radius) to a shape union.

    Samples the segment at `step` spacing and evaluates the exact union SDF;
    the result is within ~step/2 of the true minimum.
    """
    length = float(np.linalg.norm(b - a))
    n = max(2, int(length / step) + 1)
    ts = np.linspace(0.0, 1.0, n)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    return float(signed_distance_many(obj, pts).min()) - radius
