import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teleop_engine import se3
from teleop_engine.se3 import NearSingularRotationError, Pose, Twist

from conftest import random_pose


def pose_close(a: Pose, b: Pose, tol=1e-9) -> bool:
    return (np.abs(a.rotation - b.rotation).max() < tol
            and np.abs(a.translation - b.translation).max() < tol)


def trans(x, y, z) -> Pose:
    return Pose(np.eye(3), np.array([x, y, z], dtype=float))


twists = st.builds(
    lambda lin, ax, ang: se3.Twist(np.array(lin), np.array(ax) * ang
                                   / max(np.linalg.norm(ax), 1e-3)),
    st.tuples(*[st.floats(-2, 2) for _ in range(3)]),
    st.tuples(*[st.floats(-1, 1).filter(lambda v: abs(v) > 1e-3) for _ in range(3)]),
    st.floats(0, math.pi - 1e-2),
)
poses = st.builds(se3.exp_map, twists)


class TestCompose:
    def test_identity_left(self, rng):
        p = random_pose(rng)
        assert pose_close(se3.compose(Pose.identity(), p), p)

    def test_inverse_cancels(self, rng):
        for _ in range(20):
            p = random_pose(rng)
            assert pose_close(se3.compose(p, se3.inverse(p)), Pose.identity())

    def test_hand_multiplied_example(self):
        # rotZ(90deg) at (1,0,0) composed with trans(1,0,0): the second
        # translation is rotated into (0,1,0), landing at (1,1,0).
        a = Pose(se3.rotation_z(math.pi / 2), np.array([1.0, 0.0, 0.0]))
        b = trans(1, 0, 0)
        out = se3.compose(a, b)
        expected = Pose(se3.rotation_z(math.pi / 2), np.array([1.0, 1.0, 0.0]))
        assert pose_close(out, expected)


class TestInverse:
    def test_identity(self):
        assert pose_close(se3.inverse(Pose.identity()), Pose.identity())

    def test_pure_translation_negates(self):
        assert pose_close(se3.inverse(trans(1, 2, 3)), trans(-1, -2, -3))

    def test_double_inversion(self, rng):
        for _ in range(100):
            p = random_pose(rng)
            assert pose_close(se3.inverse(se3.inverse(p)), p)

    def test_formula(self, rng):
        p = random_pose(rng)
        inv = se3.inverse(p)
        assert np.allclose(inv.rotation, p.rotation.T)
        assert np.allclose(inv.translation, -(p.rotation.T @ p.translation))


class TestLogMap:
    def test_identity(self):
        t = se3.log_map(Pose.identity())
        assert np.abs(t.as_vector()).max() < 1e-12

    def test_pure_translation(self):
        t = se3.log_map(trans(0.1, 0, 0))
        assert np.allclose(t.linear, [0.1, 0, 0])
        assert np.abs(t.angular).max() == 0.0

    @pytest.mark.parametrize("theta", [0.1, 1.0, 3.0])
    def test_rotation_angle_matches_axis_angle(self, theta):
        # axis-angle oracle: rotating about z by theta has angular part theta*z
        p = Pose(se3.rotation_z(theta), np.zeros(3))
        t = se3.log_map(p)
        assert np.linalg.norm(t.angular) == pytest.approx(theta, abs=1e-12)
        assert np.allclose(t.angular, [0, 0, theta], atol=1e-12)

    def test_near_pi_raises(self):
        p = Pose(se3.rotation_x(math.pi - 1e-8), np.zeros(3))
        with pytest.raises(NearSingularRotationError, match="near-singular"):
            se3.log_map(p)

    def test_near_pi_total_fallback(self):
        for axis in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0]),
                     np.array([0.6, 0.8, 0.0])):
            p = Pose(se3.rotation_about_axis(axis, math.pi - 1e-8),
                     np.array([0.1, -0.2, 0.3]))
            t = se3.log_map_total(p)
            back = se3.exp_map(t)
            assert pose_close(back, p, tol=1e-6)

    def test_total_branch_deterministic(self):
        p = Pose(se3.rotation_x(math.pi - 1e-8), np.zeros(3))
        a = se3.log_map_total(p).as_vector()
        b = se3.log_map_total(p).as_vector()
        assert (a == b).all()


class TestExpMap:
    def test_zero(self):
        assert pose_close(se3.exp_map(Twist.zero()), Pose.identity())

    def test_pure_translation(self):
        p = se3.exp_map(Twist(np.array([1.0, 0, 0]), np.zeros(3)))
        assert pose_close(p, trans(1, 0, 0))

    def test_roundtrip_thousand(self, rng):
        worst = 0.0
        for _ in range(1000):
            p = random_pose(rng, max_angle=math.pi - 1e-3)
            back = se3.exp_map(se3.log_map(p))
            worst = max(worst,
                        np.abs(back.rotation - p.rotation).max(),
                        np.abs(back.translation - p.translation).max())
        assert worst < 1e-9


@given(poses, poses)
@settings(max_examples=50, deadline=None)
def test_inverse_of_composition_property(p, q):
    lhs = se3.inverse(se3.compose(p, q))
    rhs = se3.compose(se3.inverse(q), se3.inverse(p))
    assert pose_close(lhs, rhs, tol=1e-9)


@given(poses)
@settings(max_examples=50, deadline=None)
def test_exp_log_roundtrip_property(p):
    back = se3.exp_map(se3.log_map_total(p))
    assert pose_close(back, p, tol=1e-8)


def test_orthonormality_drift_over_a_million_compositions():
    step = Pose(se3.rotation_z(1e-3) @ se3.rotation_x(2e-3), np.array([1e-4, 0, 0]))
    p = Pose.identity()
    for _ in range(1_000_000):
        p = se3.compose(p, step)
    drift = np.abs(p.rotation.T @ p.rotation - np.eye(3)).max()
    assert drift < 1e-6


def test_quaternion_roundtrip(rng):
    for _ in range(200):
        p = random_pose(rng)
        q = se3.quat_from_rotation(p.rotation)
        back = se3.rotation_from_quat(q)
        assert np.abs(back - p.rotation).max() < 1e-12


def test_rpy_extrinsic_xyz_convention():
    r = se3.rpy_to_rotation(0.3, -0.2, 0.9)
    expected = se3.rotation_z(0.9) @ se3.rotation_y(-0.2) @ se3.rotation_x(0.3)
    assert np.allclose(r, expected)


def test_pose_validation_rejects_bad_rotation():
    with pytest.raises(ValueError):
        Pose(np.eye(3) * 2.0, np.zeros(3)).validate()
    with pytest.raises(ValueError):
        Pose(np.ones((2, 2)), np.zeros(3))


def test_matrix_roundtrip(rng):
    p = random_pose(rng)
    assert pose_close(se3.from_matrix(se3.to_matrix(p)), p)
