from __future__ import annotations

import numpy as np
import pytest

from affordgen.geometry import CYLINDER, SPHERE, TORUS_ARC, Pose, Shape, ShapeSet
from affordgen.kinematics import load_embodiment
from affordgen.world import default_library


@pytest.fixture(scope="session")
def library():
    return default_library()


@pytest.fixture(scope="session")
def fr3():
    return load_embodiment("fr3")


@pytest.fixture(scope="session")
def all_robots():
    return {name: load_embodiment(name) for name in ("fr3", "panda", "ur5e", "kinova")}


@pytest.fixture
def unit_sphere():
    return ShapeSet((Shape(SPHERE, (1.0,)),))


@pytest.fixture
def mug_like():
    """Cylinder body + arc handle, proportions matching the bundled mug."""
    return ShapeSet(
        (
            Shape(CYLINDER, (0.035, 0.05), Pose.from_rpy((0, 0, 0.05)), part_id=0),
            Shape(
                TORUS_ARC,
                (0.04, 0.0125, 4.4),
                Pose.from_rpy((0.035, 0, 0.05), (np.pi / 2, 0, 0)),
                part_id=1,
            ),
        )
    )


def random_pose(rng: np.random.Generator) -> Pose:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose(q, rng.uniform(-1.0, 1.0, size=3))
