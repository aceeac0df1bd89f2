from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from affordgen.geometry import BOX, Pose, Shape, ShapeSet, pose_error, quat_to_matrix
from affordgen.kinematics import (
    EMBODIMENTS,
    ConfigurationError,
    arm_collides,
    feasibility,
    feasibility_detail,
    fk,
    ik,
    load_embodiment,
)

FIXTURES = json.loads((Path(__file__).parent / "fixtures_fk_zero.json").read_text())


class TestLoadEmbodiment:
    def test_ur5e_is_six_dof(self):
        assert load_embodiment("ur5e").dof == 6

    def test_fr3_is_seven_dof(self):
        assert load_embodiment("fr3").dof == 7

    def test_unknown_arm_rejected(self):
        with pytest.raises(ConfigurationError):
            load_embodiment("ur10")

    def test_homes_within_limits(self, all_robots):
        for robot in all_robots.values():
            lim = robot.limits
            assert np.all(robot.home >= lim[:, 0]) and np.all(robot.home <= lim[:, 1])


class TestFk:
    def test_zero_config_matches_symbolic_fixture(self, all_robots):
        # fixture computed once by an independent sympy chain product
        for name, robot in all_robots.items():
            res = fk(robot, np.zeros(robot.dof))
            want_t = np.array(FIXTURES[name]["position"])
            want_r = np.array(FIXTURES[name]["rotation"])
            assert np.allclose(res.ee.translation, want_t, atol=1e-9)
            assert np.allclose(quat_to_matrix(res.ee.rotation), want_r, atol=1e-9)

    def test_dimension_mismatch(self, fr3):
        with pytest.raises(ValueError):
            fk(fr3, np.zeros(5))

    def test_chain_locality(self, fr3):
        rng = np.random.default_rng(0)
        q = rng.uniform(fr3.limits[:, 0], fr3.limits[:, 1])
        base = fk(fr3, q)
        for i in range(fr3.dof):
            q2 = q.copy()
            q2[i] = np.clip(q2[i] + 0.2, fr3.limits[i, 0], fr3.limits[i, 1])
            moved = fk(fr3, q2)
            for j in range(i):
                dp, dr = pose_error(base.link_poses[j], moved.link_poses[j])
                assert dp < 1e-12 and dr < 1e-9

    def test_lipschitz_bound(self, fr3):
        # |d ee| <= (sum of link offsets + tool) * |dq|_1 is a loose chain bound
        total_len = fr3.max_reach()
        rng = np.random.default_rng(1)
        lim = fr3.limits
        for _ in range(50):
            qa = rng.uniform(lim[:, 0], lim[:, 1])
            qb = rng.uniform(lim[:, 0], lim[:, 1])
            da = float(np.linalg.norm(fk(fr3, qa).ee.translation - fk(fr3, qb).ee.translation))
            assert da <= total_len * float(np.abs(qa - qb).sum()) + 1e-9

    def test_determinism(self, fr3):
        q = fr3.home
        a = fk(fr3, q)
        b = fk(fr3, q)
        assert np.array_equal(a.ee.translation, b.ee.translation)
        assert np.array_equal(a.ee.rotation, b.ee.rotation)


class TestIk:
    def test_already_solved(self, fr3):
        target = fk(fr3, fr3.home).ee
        sol = ik(fr3, target, fr3.home)
        assert sol is not None
        assert float(np.linalg.norm(sol - fr3.home)) <= 1e-6

    def test_unreachable_target(self, fr3):
        target = Pose(translation=np.array([10.0, 0.0, 0.0]))
        assert ik(fr3, target, fr3.home) is None

    @pytest.mark.parametrize("name", EMBODIMENTS)
    def test_roundtrip_success_rate(self, name, all_robots):
        robot = all_robots[name]
        rng = np.random.default_rng(17)
        lim = robot.limits
        n, ok = 60, 0
        for i in range(n):
            q = rng.uniform(lim[:, 0], lim[:, 1])
            target = fk(robot, q).ee
            sol = ik(robot, target, robot.home, seed=i)
            if sol is None:
                continue
            assert np.all(sol >= lim[:, 0] - 1e-12) and np.all(sol <= lim[:, 1] + 1e-12)
            dp, dr = pose_error(fk(robot, sol).ee, target)
            if dp <= 1e-3 and dr <= 1e-2:
                ok += 1
        assert ok / n >= 0.9

    def test_solutions_respect_limits(self, fr3):
        rng = np.random.default_rng(23)
        lim = fr3.limits
        for i in range(30):
            target = fk(fr3, rng.uniform(lim[:, 0], lim[:, 1])).ee
            sol = ik(fr3, target, fr3.home, seed=i)
            if sol is not None:
                assert np.all(sol >= lim[:, 0] - 1e-12) and np.all(sol <= lim[:, 1] + 1e-12)


def _table() -> ShapeSet:
    return ShapeSet((Shape(BOX, (0.4, 0.4, 0.01)),), Pose.from_rpy((0.5, 0, -0.01)))


class TestFeasibility:
    def test_unreachable_grasp_scores_zero(self, fr3):
        far = Pose(translation=np.array([5.0, 0.0, 0.5]))
        assert feasibility(fr3, far, np.array([0.0, 0.0, -1.0]), fr3.home, []) == 0.0

    def test_midrange_self_pose_scores_one(self, fr3):
        q = fr3.mid_range()
        grasp = fk(fr3, q).ee
        score = feasibility(fr3, grasp, np.array([0.0, 0.0, -1.0]), q, [])
        assert score == pytest.approx(1.0, abs=1e-12)

    def test_always_in_unit_interval(self, fr3):
        rng = np.random.default_rng(5)
        for i in range(40):
            pose = Pose(
                rng.normal(size=4) / np.linalg.norm(rng.normal(size=4) + 1e-9),
                rng.uniform([-0.2, -0.6, 0.0], [0.9, 0.6, 0.9]),
            )
            s = feasibility(fr3, pose, np.array([0.0, 0.0, -1.0]), fr3.home, [_table()], seed=i)
            assert 0.0 <= s <= 1.0

    def test_score_positive_iff_two_step_oracle(self, fr3):
        # oracle: ik success for grasp and pre-grasp, then collision freedom
        from affordgen.kinematics import PRE_GRASP_OFFSET

        rng = np.random.default_rng(31)
        obstacles = [_table()]
        agree = 0
        for i in range(60):
            q = rng.uniform(fr3.limits[:, 0], fr3.limits[:, 1])
            pose = fk(fr3, q).ee
            approach = np.array([0.0, 0.0, -1.0])
            score = feasibility(fr3, pose, approach, fr3.home, obstacles, seed=i)
            sol = ik(fr3, pose, fr3.home, seed=i)
            ok = sol is not None
            if ok:
                pre = Pose(pose.rotation, pose.translation - PRE_GRASP_OFFSET * approach)
                pre_sol = ik(fr3, pre, sol, seed=i + 1)
                ok = pre_sol is not None
                if ok:
                    ok = not (
                        arm_collides(fr3, sol, obstacles) or arm_collides(fr3, pre_sol, obstacles)
                    )
            assert (score > 0.0) == ok
            agree += 1
        assert agree == 60


class TestArmCollision:
    def test_home_clear_of_table(self, all_robots):
        for robot in all_robots.values():
            assert not arm_collides(robot, robot.home, [_table()])

    def test_wall_in_arm_collides(self, fr3):
        wall = ShapeSet((Shape(BOX, (0.05, 1.0, 1.0)),), Pose.from_rpy((0.25, 0, 0.5)))
        assert arm_collides(fr3, fr3.home, [wall])
