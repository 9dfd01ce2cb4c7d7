"""Bilateral feedback to the leader device.

Two layers, computed off the teleop loop in a separate thread:
  - intrinsic bias: restoring torque pulling each leader joint toward its base
    pose, so the operator keeps a natural posture
  - extrinsic tracking: the leader-follower discrepancy. Joint-space when the
    layouts match; otherwise the pose error twist is projected through the
    leader's Jacobian into its joint space. Gripper feedback is the scaled
    difference between commanded and actual gripper values.

The loop only reads latest-value snapshots and never blocks the session. When
follower snapshots go stale the tracking term fails safe to zero while the
bias term stays.
"""

from __future__ import annotations

import logging
import math
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import se3
from .ik import damped_pinv_apply
from .se3 import Pose

logger = logging.getLogger(__name__)

STALE_PERIODS = 5.0


@dataclass(frozen=True)
class FeedbackConfig:
    kp: float = 1.0  # torque units per radian of projected joint error
    bias_gain: float = 0.3
    gripper_gain: float = 1.0
    torque_clip: float = 1.0
    rate: float = 200.0  # Hz

    def __post_init__(self):
        if self.kp < 0 or self.bias_gain < 0 or self.gripper_gain < 0:
            raise ValueError("gains must be >= 0")
        if self.torque_clip <= 0:
            raise ValueError("torque_clip must be > 0")
        if self.rate <= 0:
            raise ValueError("rate must be > 0")


@dataclass(frozen=True)
class FeedbackTorques:
    """Per-leader-limb torque vectors, always finite and within the clip."""

    bias: dict  # leader limb -> joint vector
    tracking: dict  # leader limb -> joint vector
    gripper: dict = field(default_factory=dict)  # leader limb -> scalar
    timestamp: float = 0.0


def bias_torque(q_leader, q_base, gain: float, clip: float = math.inf) -> np.ndarray:
    """Restoring torque toward the base pose: gain * (q_base - q_leader)."""
    q_leader = np.asarray(q_leader, dtype=float)
    q_base = np.asarray(q_base, dtype=float)
    if q_leader.shape != q_base.shape:
        raise ValueError(f"shape mismatch {q_leader.shape} vs {q_base.shape}")
    return np.clip(gain * (q_base - q_leader), -clip, clip)


def tracking_torque_joint(q_leader, q_follower, gain: float,
                          clip: float = math.inf) -> np.ndarray:
    """Joint-space tracking torque pushing the leader toward the follower."""
    q_leader = np.asarray(q_leader, dtype=float)
    q_follower = np.asarray(q_follower, dtype=float)
    if q_leader.shape != q_follower.shape:
        raise ValueError(f"shape mismatch {q_leader.shape} vs {q_follower.shape}")
    return np.clip(-gain * (q_leader - q_follower), -clip, clip)


def tracking_torque_task(eef_actual: Pose, eef_target: Pose, jac_leader: np.ndarray,
                         kp: float, damping: float = 1e-3,
                         clip: float = math.inf) -> np.ndarray:
    """Cross-embodiment tracking torque.

    The follower's pose error is taken as a twist, projected into the leader's
    joint space through the damped pseudo-inverse of its Jacobian, and scaled
    by -kp so the torque pulls the leader toward where the follower actually is.
    """
    twist = se3.log_map_total(se3.compose(se3.inverse(eef_actual), eef_target))
    dq = damped_pinv_apply(jac_leader, twist.as_vector(), damping)
    return np.clip(-kp * dq, -clip, clip)


def gripper_torque(g_leader: float, g_follower: float, gain: float,
                   clip: float = math.inf) -> float:
    return float(np.clip(gain * (g_leader - g_follower), -clip, clip))


def compute_feedback(leader, control, state, cfg: FeedbackConfig,
                     stale: bool, now: float) -> FeedbackTorques:
    """One feedback evaluation from the freshest snapshots."""
    bias = {}
    tracking = {}
    gripper = {}

    joints = leader.joint_state()
    base = leader.base_joint_state()
    if joints is not None and base is not None:
        for limb, q in joints.items():
            bias[limb] = bias_torque(q, base[limb], cfg.bias_gain, cfg.torque_clip)

    usable = control is not None and state is not None and not stale
    if not usable:
        # Fail safe: zero tracking of the right shape, bias untouched.
        for leader_limb in leader.mapping.leader_limbs:
            if joints is not None:
                tracking[leader_limb] = np.zeros(len(joints[leader_limb]))
            else:
                jac = leader.feedback_jacobian(leader_limb)
                if jac is not None:
                    tracking[leader_limb] = np.zeros(jac.shape[1])
        return FeedbackTorques(bias=bias, tracking=tracking, gripper=gripper,
                               timestamp=now)

    joint_space = leader.command_space() == "joint"
    leader_grip = leader.gripper_state()
    for leader_limb, follower_limb in leader.mapping.pairs.items():
        if joint_space and joints is not None:
            tracking[leader_limb] = tracking_torque_joint(
                joints[leader_limb], state.q_actual[follower_limb],
                cfg.kp, cfg.torque_clip)
        else:
            jac = leader.feedback_jacobian(leader_limb)
            if jac is not None:
                tracking[leader_limb] = tracking_torque_task(
                    state.eef_actual[follower_limb],
                    state.last_commanded_pose[follower_limb],
                    jac, cfg.kp, clip=cfg.torque_clip)
        if leader_limb in leader_grip:
            gripper[leader_limb] = gripper_torque(
                leader_grip[leader_limb],
                state.gripper_actual.get(follower_limb, 0.0),
                cfg.gripper_gain, cfg.torque_clip)
    return FeedbackTorques(bias=bias, tracking=tracking, gripper=gripper, timestamp=now)


class FeedbackLoop:
    """Asynchronous feedback thread publishing to the leader and a mailbox."""

    def __init__(self, leader, control_box, state_box, cfg: FeedbackConfig,
                 loop_period: float, publish_box=None, clock=time.monotonic):
        self.leader = leader
        self.control_box = control_box
        self.state_box = state_box
        self.cfg = cfg
        self.loop_period = loop_period
        self.publish_box = publish_box
        self.clock = clock
        self.publish_times: list = []
        self._stop = threading.Event()
        self._thread = None

    def compute_once(self) -> FeedbackTorques:
        now = self.clock()
        control = self.control_box.get()
        state = self.state_box.get()
        stale = state is None or (now - state.timestamp) > STALE_PERIODS * self.loop_period
        torques = compute_feedback(self.leader, control, state, self.cfg, stale, now)
        self.leader.apply_feedback(torques)
        if self.publish_box is not None:
            self.publish_box.put(torques)
        self.publish_times.append(now)
        return torques

    def _run(self) -> None:
        period = 1.0 / self.cfg.rate
        next_tick = time.monotonic()
        while not self._stop.is_set():
            try:
                self.compute_once()
            except Exception:
                logger.exception("feedback computation failed; continuing")
            next_tick += period
            delay = next_tick - time.monotonic()
            if delay > 0:
                self._stop.wait(delay)
            else:
                next_tick = time.monotonic()

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="feedback-loop",
                                        daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None
