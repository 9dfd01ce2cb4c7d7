import math

import numpy as np
import pytest

from teleop_engine import presets, robot_model, se3
from teleop_engine.robot_model import (ChainExtractionError, CollisionSphere,
                                       JointSpec, LimbChain, LimbSelection,
                                       StructuralError, UnsupportedJointError,
                                       UrdfParseError, parse_robot_description)

from conftest import random_pose

ARM_SELECTION = [LimbSelection("arm", "base", "tip")]


def planar_urdf(**overrides) -> str:
    lower = overrides.get("lower", -3.0)
    upper = overrides.get("upper", 3.0)
    extra = overrides.get("extra", "")
    return f"""
<robot name="planar">
  <link name="base"/>
  <link name="upper"/>{extra}
  <link name="lower"/>
  <link name="tip"/>
  <joint name="shoulder" type="revolute">
    <parent link="base"/><child link="upper"/>
    <origin xyz="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="{lower}" upper="{upper}" velocity="1.0"/>
  </joint>
  <joint name="elbow" type="revolute">
    <parent link="upper"/><child link="lower"/>
    <origin xyz="1 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-3.0" upper="3.0" velocity="1.0"/>
  </joint>
  <joint name="tip_joint" type="fixed">
    <parent link="lower"/><child link="tip"/>
    <origin xyz="1 0 0"/>
  </joint>
</robot>
"""


class TestParsing:
    def test_planar_fields(self):
        model, warnings = parse_robot_description(planar_urdf(), ARM_SELECTION)
        chain = model.limb("arm")
        assert chain.num_dof == 2
        assert [j.name for j in chain.joints] == ["shoulder", "elbow"]
        for j in chain.joints:
            assert j.kind == "revolute"
            assert j.limit_lower == -3.0 and j.limit_upper == 3.0
            assert j.velocity_limit == 1.0
            assert np.allclose(j.axis, [0, 0, 1])
        assert np.allclose(chain.joints[1].origin.translation, [1, 0, 0])
        assert np.allclose(chain.eef_frame.translation, [1, 0, 0])
        assert warnings == []

    def test_mesh_visuals_warned_and_ignored(self):
        extra = """
  <visual><geometry><mesh filename="arm.stl"/></geometry></visual>"""
        with_mesh = planar_urdf(extra="").replace(
            '<link name="upper"/>',
            f'<link name="upper">{extra}\n  </link>')
        model, warnings = parse_robot_description(with_mesh, ARM_SELECTION)
        assert model.limb("arm").num_dof == 2
        assert any("mesh" in w for w in warnings)

    def test_inverted_limits_structural_error(self):
        with pytest.raises(StructuralError, match="limits inverted"):
            parse_robot_description(planar_urdf(lower=2.0, upper=-2.0), ARM_SELECTION)

    def test_malformed_xml_reports_position(self):
        with pytest.raises(UrdfParseError, match=r"line \d+, column \d+"):
            parse_robot_description("<robot name='x'><link name='a'>", ARM_SELECTION)

    def test_unknown_link_in_selection(self):
        with pytest.raises(ChainExtractionError, match="chain extraction failed: nope"):
            parse_robot_description(planar_urdf(),
                                    [LimbSelection("arm", "base", "nope")])

    def test_unsupported_joint_kind(self):
        bad = planar_urdf().replace('type="fixed"', 'type="floating"')
        with pytest.raises(UnsupportedJointError, match="floating"):
            parse_robot_description(bad, ARM_SELECTION)

    def test_cyclic_joint_graph(self):
        urdf = """
<robot name="loop">
  <link name="base"/><link name="a"/><link name="b"/><link name="c"/>
  <joint name="ab" type="revolute">
    <parent link="a"/><child link="b"/><axis xyz="0 0 1"/>
    <limit lower="-1" upper="1" velocity="1"/>
  </joint>
  <joint name="bc" type="revolute">
    <parent link="b"/><child link="c"/><axis xyz="0 0 1"/>
    <limit lower="-1" upper="1" velocity="1"/>
  </joint>
  <joint name="ca" type="revolute">
    <parent link="c"/><child link="a"/><axis xyz="0 0 1"/>
    <limit lower="-1" upper="1" velocity="1"/>
  </joint>
</robot>
"""
        with pytest.raises(StructuralError, match="cyclic"):
            parse_robot_description(urdf, [LimbSelection("arm", "base", "a")])

    def test_continuous_maps_to_revolute_with_wide_limits(self):
        urdf = planar_urdf().replace(
            '<joint name="shoulder" type="revolute">',
            '<joint name="shoulder" type="continuous">')
        model, _ = parse_robot_description(urdf, ARM_SELECTION)
        shoulder = model.limb("arm").joints[0]
        assert shoulder.kind == "revolute"
        assert shoulder.limit_lower == -1e9 and shoulder.limit_upper == 1e9

    def test_deterministic_parse_and_fk(self):
        text = presets.build_multi_arm_urdf(2)
        sel = {"limbs": [{"name": "left", "base_link": "world", "tip_link": "left_tool"}]}
        m1, _ = parse_robot_description(text, sel)
        m2, _ = parse_robot_description(text, sel)
        q = np.array([0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7])
        fk1 = robot_model.forward_kinematics(m1.limb("left"), q)
        fk2 = robot_model.forward_kinematics(m2.limb("left"), q)
        assert (fk1.rotation == fk2.rotation).all()
        assert (fk1.translation == fk2.translation).all()

    def test_gripper_joint_excluded_from_chain(self, arm7):
        assert arm7.num_dof == 7
        assert arm7.gripper_joint is not None
        assert arm7.gripper_joint.name == "limb1_gripper"
        assert all(j.name != "limb1_gripper" for j in arm7.joints)

    def test_duplicate_limb_names_rejected(self, planar2r):
        with pytest.raises(StructuralError, match="duplicate limb names"):
            robot_model.RobotModel(limbs=(planar2r, planar2r), base_pose={})

    def test_base_pose_outside_limits_rejected(self, planar2r):
        with pytest.raises(StructuralError, match="violates joint limits"):
            robot_model.RobotModel(limbs=(planar2r,), base_pose={"arm": [5.0, 0.0]})


class TestForwardKinematics:
    def test_zero_configuration(self, planar2r):
        fk = robot_model.forward_kinematics(planar2r, [0.0, 0.0])
        assert np.allclose(fk.translation, [2, 0, 0], atol=1e-12)
        assert np.allclose(fk.rotation, np.eye(3), atol=1e-12)

    def test_first_joint_quarter_turn(self, planar2r):
        fk = robot_model.forward_kinematics(planar2r, [math.pi / 2, 0.0])
        assert np.allclose(fk.translation, [0, 2, 0], atol=1e-12)

    def test_elbow_bend(self, planar2r):
        fk = robot_model.forward_kinematics(planar2r, [math.pi / 2, -math.pi / 2])
        assert np.allclose(fk.translation, [1, 1, 0], atol=1e-12)

    def test_dimension_error(self, planar2r):
        with pytest.raises(ValueError, match="expects 2 joint values"):
            robot_model.forward_kinematics(planar2r, [0.0, 0.0, 0.0])


class TestFramePositions:
    def test_planar_frames(self, planar2r):
        frames = robot_model.frame_positions(planar2r, [0.0, 0.0])
        xs = [f.translation[0] for f in frames]
        assert xs == [0.0, 1.0, 2.0]

    def test_last_frame_is_fk(self, planar2r, rng):
        q = rng.uniform(-2, 2, size=2)
        frames = robot_model.frame_positions(planar2r, q)
        fk = robot_model.forward_kinematics(planar2r, q)
        assert np.allclose(frames[-1].translation, fk.translation)
        assert np.allclose(frames[-1].rotation, fk.rotation)

    def test_zero_length_chain_rejected(self):
        with pytest.raises(StructuralError, match="no actuated joints"):
            parse_robot_description(planar_urdf(),
                                    [LimbSelection("arm", "base", "base")])

    def test_prefix_product_consistency(self, arm7, rng):
        q = rng.uniform(arm7.limits_lower(), arm7.limits_upper())
        frames = robot_model.frame_poses(arm7, q)
        t = se3.Pose.identity()
        qi = 0
        for joint, frame in zip(arm7.joints, frames):
            t = se3.compose(t, joint.origin)
            if joint.is_actuated:
                t = se3.compose(t, se3.Pose(
                    se3.rotation_about_axis(joint.axis, q[qi]), np.zeros(3)))
                qi += 1
            assert np.abs(t.translation - frame.translation).max() < 1e-12


class TestGeometricJacobian:
    def test_planar_hand_values(self, planar2r):
        jac = robot_model.geometric_jacobian(planar2r, [0.0, 0.0])
        assert np.allclose(jac[:3, 0], [0, 2, 0], atol=1e-12)
        assert np.allclose(jac[:3, 1], [0, 1, 0], atol=1e-12)
        assert np.allclose(jac[3:, 0], [0, 0, 1], atol=1e-12)
        assert np.allclose(jac[3:, 1], [0, 0, 1], atol=1e-12)

    def test_single_prismatic_z(self):
        urdf = """
<robot name="lift">
  <link name="base"/><link name="carriage"/>
  <joint name="slide" type="prismatic">
    <parent link="base"/><child link="carriage"/>
    <axis xyz="0 0 1"/><limit lower="0" upper="1" velocity="0.5"/>
  </joint>
</robot>
"""
        model, _ = parse_robot_description(urdf, [LimbSelection("z", "base", "carriage")])
        jac = robot_model.geometric_jacobian(model.limb("z"), [0.3])
        assert np.allclose(jac[:, 0], [0, 0, 1, 0, 0, 0], atol=1e-12)

    def test_finite_difference_oracle(self, arm7, rng):
        # central differences of FK translation and of the rotation via the
        # log map, step 1e-6
        step = 1e-6
        worst = 0.0
        for _ in range(25):
            q = rng.uniform(arm7.limits_lower() + 0.1, arm7.limits_upper() - 0.1)
            jac = robot_model.geometric_jacobian(arm7, q)
            for j in range(arm7.num_dof):
                qp, qm = q.copy(), q.copy()
                qp[j] += step
                qm[j] -= step
                fp = robot_model.forward_kinematics(arm7, qp)
                fm = robot_model.forward_kinematics(arm7, qm)
                dlin = (fp.translation - fm.translation) / (2 * step)
                drot = se3._so3_log(fm.rotation.T @ fp.rotation, False) / (2 * step)
                f0 = robot_model.forward_kinematics(arm7, q)
                dang = f0.rotation @ drot  # body rate to base frame
                worst = max(worst, np.abs(jac[:3, j] - dlin).max(),
                            np.abs(jac[3:, j] - dang).max())
        assert worst < 1e-5

    def test_first_order_twist_consistency(self, arm7, rng):
        for _ in range(10):
            q = rng.uniform(arm7.limits_lower() + 0.1, arm7.limits_upper() - 0.1)
            dq = rng.normal(size=7)
            dq *= 1e-6 / np.linalg.norm(dq)
            f0 = robot_model.forward_kinematics(arm7, q)
            f1 = robot_model.forward_kinematics(arm7, q + dq)
            body = se3.log_map(se3.compose(se3.inverse(f0), f1)).as_vector()
            base = np.concatenate([f0.rotation @ body[:3], f0.rotation @ body[3:]])
            jac = robot_model.geometric_jacobian(arm7, q)
            assert np.abs(base - jac @ dq).max() < 1e-8


class TestCollisionSpheres:
    def test_world_centers_follow_frames(self, dual_model):
        chain = dual_model.limb("left")
        q = dual_model.base_pose["left"]
        centers = robot_model.sphere_centers_world(chain, q)
        assert len(centers) == len(chain.collision_spheres)
        frames = robot_model.frame_poses(chain, q)
        for (center, radius), spec in zip(centers, chain.collision_spheres):
            expected = se3.transform_point(frames[spec.joint_index], spec.center)
            assert np.allclose(center, expected)
            assert radius == spec.radius

    def test_sphere_index_out_of_range(self, planar2r):
        with pytest.raises(StructuralError, match="out of range"):
            LimbChain(name="bad", joints=planar2r.joints,
                      collision_spheres=(CollisionSphere(9, np.zeros(3), 0.1),))


def test_joint_spec_invariants():
    with pytest.raises(StructuralError, match="axis norm"):
        JointSpec("j", "revolute", np.array([0.0, 0.0, 2.0]), se3.Pose.identity())
    with pytest.raises(UnsupportedJointError):
        JointSpec("j", "spherical", np.array([0.0, 0.0, 1.0]), se3.Pose.identity())
    with pytest.raises(StructuralError, match="velocity limit"):
        JointSpec("j", "revolute", np.array([0.0, 0.0, 1.0]), se3.Pose.identity(),
                  velocity_limit=0.0)
