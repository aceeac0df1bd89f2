from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affordgen.geometry import (
    BOX,
    CAPSULE,
    CYLINDER,
    SPHERE,
    TORUS_ARC,
    Pose,
    Shape,
    ShapeSet,
    collide,
    compose,
    invert,
    pose_error,
    quat_from_axis_angle,
    sample_surface,
    signed_distance,
    signed_distance_many,
)
from conftest import random_pose


def quats(draw):
    v = np.array(draw)
    n = np.linalg.norm(v)
    return v / n


pose_strategy = st.builds(
    lambda q, t: Pose(np.asarray(q) / np.linalg.norm(q), np.asarray(t)),
    st.lists(st.floats(-1, 1).filter(lambda x: abs(x) > 1e-3), min_size=4, max_size=4),
    st.lists(st.floats(-2, 2), min_size=3, max_size=3),
)


class TestPose:
    def test_compose_identity(self):
        rng = np.random.default_rng(0)
        p = random_pose(rng)
        out = compose(Pose.identity(), p)
        dp, dr = pose_error(out, p)
        assert dp < 1e-12 and dr < 1e-9

    def test_compose_inverse_is_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = random_pose(rng)
            ident = compose(p, invert(p))
            assert np.linalg.norm(ident.translation) < 1e-9
            assert abs(abs(ident.rotation[0]) - 1.0) < 1e-9

    def test_two_quarter_turns_is_half_turn(self):
        quarter = Pose(quat_from_axis_angle((0, 0, 1), math.pi / 2))
        half = compose(quarter, quarter)
        expected = Pose(quat_from_axis_angle((0, 0, 1), math.pi))
        dp, dr = pose_error(half, expected)
        assert dp < 1e-12 and dr < 1e-9

    def test_compose_matches_matrix_product_oracle(self):
        # independent oracle: homogeneous 4x4 multiplication
        rng = np.random.default_rng(42)
        for _ in range(100):
            a, b = random_pose(rng), random_pose(rng)
            got = compose(a, b).matrix()
            want = a.matrix() @ b.matrix()
            assert np.allclose(got, want, atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(pose_strategy, pose_strategy, pose_strategy)
    def test_associativity(self, a, b, c):
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        dp, dr = pose_error(left, right)
        assert dp < 1e-9 and dr < 1e-9

    @settings(max_examples=50, deadline=None)
    @given(pose_strategy, pose_strategy)
    def test_inverse_of_product(self, a, b):
        left = invert(compose(a, b))
        right = compose(invert(b), invert(a))
        dp, dr = pose_error(left, right)
        assert dp < 1e-9 and dr < 1e-9

    def test_quaternion_stays_unit(self):
        rng = np.random.default_rng(3)
        p = random_pose(rng)
        for _ in range(1000):
            p = compose(p, Pose(quat_from_axis_angle((0, 1, 0), 0.01)))
        assert abs(float(p.rotation @ p.rotation) - 1.0) < 1e-9


class TestSampling:
    def test_unit_sphere_samples_on_surface(self, unit_sphere):
        cloud = sample_surface(unit_sphere, 10_000, seed=0)
        r = np.linalg.norm(cloud.points, axis=1)
        assert np.abs(r - 1.0).max() < 1e-9

    def test_mug_handle_area_fraction(self):
        # body + non-intersecting arc handle: the analytic areas are exact
        mug = ShapeSet(
            (
                Shape(CYLINDER, (0.035, 0.05), Pose.from_rpy((0, 0, 0.05)), part_id=0),
                Shape(
                    TORUS_ARC,
                    (0.04, 0.0125, 4.4),
                    Pose.from_rpy((0.12, 0, 0.05), (math.pi / 2, 0, 0)),
                    part_id=1,
                ),
            )
        )
        cloud = sample_surface(mug, 20_000, seed=1)
        handle = float((cloud.part_labels == 1).mean())
        areas = {s.part_id: s.area() for s in mug.shapes}
        expected = areas[1] / (areas[0] + areas[1])
        assert handle == pytest.approx(expected, abs=0.03)

    def test_determinism(self, mug_like):
        a = sample_surface(mug_like, 512, seed=7)
        b = sample_surface(mug_like, 512, seed=7)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.part_labels, b.part_labels)

    def test_samples_lie_on_union_boundary(self, mug_like):
        cloud = sample_surface(mug_like, 4096, seed=3)
        d = signed_distance_many(mug_like, cloud.points)
        assert np.abs(d).max() <= 1e-6


class TestSignedDistance:
    def test_sphere_center(self):
        ss = ShapeSet((Shape(SPHERE, (0.5,)),))
        assert signed_distance(ss, np.zeros(3)) == pytest.approx(-0.5, abs=1e-12)

    def test_box_face(self):
        ss = ShapeSet((Shape(BOX, (1.0, 1.0, 1.0)),))
        assert signed_distance(ss, np.array([2.0, 0.0, 0.0])) == pytest.approx(1.0, abs=1e-12)

    def test_capsule_axis(self):
        ss = ShapeSet((Shape(CAPSULE, (0.1, 0.3)),))
        assert signed_distance(ss, np.array([0.0, 0.0, 0.5])) == pytest.approx(0.1, abs=1e-12)

    def test_torus_arc_vs_dense_sampling_oracle(self):
        ss = ShapeSet(
            (Shape(TORUS_ARC, (0.05, 0.015, 4.0), Pose.from_rpy((0.02, -0.01, 0.03), (0.3, 0.2, 0.1))),)
        )
        dense = sample_surface(ss, 60_000, seed=11).points
        rng = np.random.default_rng(5)
        pts = rng.uniform(-0.12, 0.12, size=(500, 3))
        d = signed_distance_many(ss, pts)
        # nearest-neighbor distance to a dense surface sampling, signed by d
        for p, di in zip(pts, d):
            nn = float(np.linalg.norm(dense - p, axis=1).min())
            assert abs(abs(di) - nn) < 2e-3


class TestCollide:
    def test_far_spheres(self):
        a = ShapeSet((Shape(SPHERE, (1.0,)),))
        b = ShapeSet((Shape(SPHERE, (1.0,)),), Pose.from_rpy((3.0, 0, 0)))
        res = collide(a, b)
        assert not res.colliding
        assert res.min_distance == pytest.approx(1.0, abs=1e-12)

    def test_concentric_spheres(self):
        a = ShapeSet((Shape(SPHERE, (1.0,)),))
        b = ShapeSet((Shape(SPHERE, (0.2,)),))
        res = collide(a, b)
        assert res.colliding and res.min_distance <= 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(9)
        kinds = [
            lambda: Shape(SPHERE, (rng.uniform(0.05, 0.3),)),
            lambda: Shape(BOX, tuple(rng.uniform(0.05, 0.3, 3))),
            lambda: Shape(CYLINDER, tuple(rng.uniform(0.05, 0.3, 2))),
            lambda: Shape(CAPSULE, tuple(rng.uniform(0.05, 0.3, 2))),
        ]
        for _ in range(50):
            a = ShapeSet((kinds[rng.integers(4)](),), random_pose(rng))
            b = ShapeSet((kinds[rng.integers(4)](),), random_pose(rng))
            assert collide(a, b).colliding == collide(b, a).colliding

    def test_no_false_negatives_vs_penetration_oracle(self):
        # oracle: surface samples of one shape inside the other's exact SDF
        rng = np.random.default_rng(13)
        kinds = [
            lambda: Shape(SPHERE, (rng.uniform(0.05, 0.25),)),
            lambda: Shape(BOX, tuple(rng.uniform(0.05, 0.25, 3))),
            lambda: Shape(CYLINDER, tuple(rng.uniform(0.05, 0.25, 2))),
            lambda: Shape(CAPSULE, tuple(rng.uniform(0.05, 0.25, 2))),
        ]
        checked = penetrating = 0
        for i in range(1000):
            a = ShapeSet((kinds[rng.integers(4)](),), Pose(translation=rng.uniform(-0.3, 0.3, 3)))
            b = ShapeSet((kinds[rng.integers(4)](),), Pose(translation=rng.uniform(-0.3, 0.3, 3)))
            pts_a = sample_surface(a, 64, seed=i).points
            pts_b = sample_surface(b, 64, seed=i + 1).points
            overlap = (
                signed_distance_many(b, pts_a).min() < -1e-9
                or signed_distance_many(a, pts_b).min() < -1e-9
            )
            checked += 1
            if overlap:
                penetrating += 1
                assert collide(a, b).colliding, "conservative check missed a true penetration"
        assert penetrating > 20, "oracle should exercise real collisions"


class TestShapeValidation:
    def test_rejects_nonpositive_dims(self):
        with pytest.raises(ValueError):
            Shape(SPHERE, (0.0,))

    def test_rejects_bad_arc_span(self):
        with pytest.raises(ValueError):
            Shape(TORUS_ARC, (0.1, 0.01, 7.0))

    def test_empty_shapeset(self):
        with pytest.raises(ValueError):
            ShapeSet(())
