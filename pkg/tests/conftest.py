import numpy as np
import pytest

from teleop_engine import presets, robot_model, se3
from teleop_engine.robot_model import LimbSelection, parse_robot_description


def random_pose(rng, max_angle=np.pi - 1e-3, max_translation=1.0) -> se3.Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    linear = rng.uniform(-max_translation, max_translation, size=3)
    return se3.exp_map(se3.Twist(linear, axis * angle))


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


@pytest.fixture(scope="session")
def planar2r_model():
    model, warnings = parse_robot_description(
        presets.PLANAR_2R_URDF, [LimbSelection("arm", "base", "tip")])
    return model


@pytest.fixture(scope="session")
def planar2r(planar2r_model):
    return planar2r_model.limb("arm")


@pytest.fixture(scope="session")
def arm7_model():
    model, _ = parse_robot_description(
        presets.build_single_arm_urdf("arm7"),
        {"limbs": [{"name": "limb1", "base_link": "world", "tip_link": "limb1_tool",
                    "gripper_joint": "limb1_gripper"}],
         "base_pose": {"limb1": presets.ARM7_BASE_POSE}})
    return model


@pytest.fixture(scope="session")
def arm7(arm7_model):
    return arm7_model.limb("limb1")


@pytest.fixture(scope="session")
def arm6_model():
    model, _ = parse_robot_description(
        presets.build_single_arm_urdf("arm6"),
        {"limbs": [{"name": "limb1", "base_link": "world", "tip_link": "limb1_tool",
                    "gripper_joint": "limb1_gripper"}],
         "base_pose": {"limb1": presets.ARM6_BASE_POSE}})
    return model


@pytest.fixture(scope="session")
def arm6(arm6_model):
    return arm6_model.limb("limb1")


@pytest.fixture(scope="session")
def dual_model():
    model, _ = parse_robot_description(
        presets.build_multi_arm_urdf(2),
        {"limbs": [{"name": name, "base_link": "world", "tip_link": f"{name}_tool",
                    "gripper_joint": f"{name}_gripper",
                    "collision_spheres": [dict(s) for s in presets.ARM7_COLLISION_SPHERES]}
                   for name in ("left", "right")],
         "base_pose": {"left": presets.ARM7_BASE_POSE,
                       "right": presets.ARM7_BASE_POSE}})
    return model
