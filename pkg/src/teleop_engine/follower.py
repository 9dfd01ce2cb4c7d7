"""Kinematic follower: tracks filtered joint commands under actuator rate
limits and reports its state. No dynamics; position-level fidelity is the
contract. Actuator limits default to twice the safety limits so the safety
filter, not the plant, is normally the binding constraint.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import pipeline as pipeline_mod
from . import robot_model
from .pipeline import ControlSignal, SafetyConfig
from .robot_model import RobotModel


class ApproachCollisionError(Exception):
    """move_to predicted a self collision; the follower holds the last safe q."""


@dataclass(frozen=True)
class FollowerState:
    """Snapshot of the simulated robot. EEF poses are recomputed, never cached."""

    q_actual: dict  # limb -> joint vector
    gripper_actual: dict  # limb -> value in [0, 1]
    eef_actual: dict  # limb -> Pose, forward kinematics of q_actual
    last_commanded_pose: dict  # limb -> last pre-IK target Pose
    timestamp: float = 0.0


def quintic_profile(u: float) -> float:
    """Smooth 0->1 time scaling with zero boundary velocity and acceleration."""
    u = min(1.0, max(0.0, u))
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


class KinematicFollower:
    def __init__(self, model: RobotModel, safety: SafetyConfig,
                 actuator_velocity_scale: float = 2.0,
                 actuator_velocity_limits: dict | None = None,
                 gripper_time_constant: float = 0.1,
                 clock=time.monotonic):
        self.model = model
        self.safety = safety
        self.clock = clock
        self.gripper_time_constant = gripper_time_constant
        if actuator_velocity_limits is not None:
            self.actuator_limits = {
                k: np.asarray(v, dtype=float) for k, v in actuator_velocity_limits.items()}
        else:
            self.actuator_limits = {
                k: actuator_velocity_scale * v for k, v in safety.velocity_limits.items()}
        self._q = {c.name: model.base_pose[c.name].copy() for c in model.limbs}
        self._grip = {c.name: 0.0 for c in model.limbs}
        self._last_target = {
            c.name: robot_model.forward_kinematics(c, self._q[c.name])
            for c in model.limbs}

    def state(self) -> FollowerState:
        eef = {c.name: robot_model.forward_kinematics(c, self._q[c.name])
               for c in self.model.limbs}
        return FollowerState(
            q_actual={k: v.copy() for k, v in self._q.items()},
            gripper_actual=dict(self._grip),
            eef_actual=eef,
            last_commanded_pose=dict(self._last_target),
            timestamp=self.clock())

    def step(self, signal: ControlSignal, dt: float) -> FollowerState:
        """Advance toward the commanded joints, per-joint rate limited."""
        if dt <= 0:
            raise ValueError("dt must be > 0")
        gripper_alpha = 1.0 - math.exp(-dt / self.gripper_time_constant)
        for chain in self.model.limbs:
            limb = chain.name
            q_cmd = np.asarray(signal.q_cmd[limb], dtype=float)
            max_step = self.actuator_limits[limb] * dt
            self._q[limb] = self._q[limb] + np.clip(q_cmd - self._q[limb],
                                                    -max_step, max_step)
            if limb in signal.gripper_cmd:
                g_cmd = float(signal.gripper_cmd[limb])
                self._grip[limb] += gripper_alpha * (g_cmd - self._grip[limb])
            if limb in signal.target_pose:
                self._last_target[limb] = signal.target_pose[limb]
        return self.state()

    def min_move_duration(self, q_target: dict) -> float:
        """Shortest duration whose quintic profile respects actuator limits.

        The quintic's peak velocity is 15/8 * distance / duration.
        """
        worst = 0.0
        for chain in self.model.limbs:
            dist = np.abs(np.asarray(q_target[chain.name], dtype=float)
                          - self._q[chain.name])
            worst = max(worst, float((dist / self.actuator_limits[chain.name]).max()))
        return 1.875 * worst

    def move_to(self, q_target: dict, duration: float, dt: float | None = None,
                collision_check: bool = True, on_step=None, sleep_fn=None) -> None:
        """Blocking quintic interpolation from the current to the target joints.

        Raises ApproachCollisionError if a step would self-collide; the state
        holds at the last safe configuration. Targets outside joint limits are
        rejected up front.
        """
        for chain in self.model.limbs:
            q = np.asarray(q_target[chain.name], dtype=float)
            if q.shape != (chain.num_dof,):
                raise ValueError(
                    f"limb '{chain.name}' target has {q.shape[0]} joints, "
                    f"expected {chain.num_dof}")
            if ((q < chain.limits_lower() - 1e-12).any()
                    or (q > chain.limits_upper() + 1e-12).any()):
                raise ValueError(f"move_to target violates limits on limb '{chain.name}'")

        dt = dt if dt is not None else self.safety.loop_period
        total = max(duration, self.min_move_duration(q_target), dt)
        start = {k: v.copy() for k, v in self._q.items()}
        steps = max(1, math.ceil(total / dt))
        for i in range(1, steps + 1):
            s = quintic_profile(i / steps)
            q_next = {k: start[k] + s * (np.asarray(q_target[k], dtype=float) - start[k])
                      for k in start}
            if collision_check:
                hits = pipeline_mod.check_self_collision(self.model, q_next, self.safety)
                if hits:
                    raise ApproachCollisionError(
                        f"self collision predicted during approach: {hits}")
            self._q = q_next
            if on_step is not None:
                on_step(self.state())
            if sleep_fn is not None:
                sleep_fn(dt)

    def set_configuration(self, q: dict, gripper: dict | None = None) -> None:
        """Teleport for tests and resets; clamped to joint limits."""
        for chain in self.model.limbs:
            if chain.name in q:
                self._q[chain.name] = chain.clamp(np.asarray(q[chain.name], dtype=float))
        for limb, g in (gripper or {}).items():
            self._grip[limb] = float(g)
