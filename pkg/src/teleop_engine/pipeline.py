"""Command interpretation and safety filtering.

Delta-pose commands become follower EEF targets (initial follower pose times
the scaled delta) solved by IK warm-started at the current joints; joint
commands pass through. Every joint target then runs the safety gate: limit
clamp, per-joint velocity clamp, and a sphere-based self-collision hold.
Safety is total: it never raises mid-loop, it clamps and flags instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ik, robot_model, se3
from .commands import EefDelta, JointPositions, LeaderCommand
from .robot_model import RobotModel
from .se3 import Pose


class ConfigurationError(Exception):
    """Leader/follower wiring problems that must surface at session start."""


@dataclass(frozen=True)
class SafetyConfig:
    velocity_limits: dict  # limb -> per-joint limits, rad/s or m/s
    loop_period: float  # seconds
    collision_margin: float = 0.0
    collision_pairs: tuple | None = None  # explicit ((limb, i), (limb, j)) pairs

    def __post_init__(self):
        if self.loop_period <= 0:
            raise ValueError("loop_period must be > 0")
        if self.collision_margin < 0:
            raise ValueError("collision_margin must be >= 0")
        limits = {k: np.asarray(v, dtype=float) for k, v in self.velocity_limits.items()}
        for limb, v in limits.items():
            if (v <= 0).any():
                raise ValueError(f"velocity limits for limb '{limb}' must be > 0")
        object.__setattr__(self, "velocity_limits", limits)


@dataclass(frozen=True)
class ControlSignal:
    """Filtered per-limb command, the only thing a follower may execute."""

    q_cmd: dict  # limb -> joint vector, always within limits
    gripper_cmd: dict = field(default_factory=dict)
    target_pose: dict = field(default_factory=dict)  # limb -> pre-IK target Pose
    flags: dict = field(default_factory=dict)  # limb -> {limit, velocity, collision}
    timestamp: float = 0.0


def check_self_collision(model: RobotModel, q: dict, cfg: SafetyConfig) -> list:
    """Colliding sphere pairs at configuration q, canonically ordered.

    Pairs on the same or adjacent joints of one limb are skipped; everything
    else is checked, including across limbs. Explicit cfg.collision_pairs
    replaces the default pair set.
    """
    spheres = []  # (limb, sphere_index, joint_index, center, radius)
    for chain in model.limbs:
        if not chain.collision_spheres:
            continue
        world = robot_model.sphere_centers_world(chain, q[chain.name])
        for i, ((center, radius), spec) in enumerate(zip(world, chain.collision_spheres)):
            spheres.append((chain.name, i, spec.joint_index, center, radius))

    allowed = None
    if cfg.collision_pairs is not None:
        allowed = {frozenset(map(tuple, pair)) for pair in cfg.collision_pairs}

    hits = []
    for a in range(len(spheres)):
        limb_a, ia, ja, ca, ra = spheres[a]
        for b in range(a + 1, len(spheres)):
            limb_b, ib, jb, cb, rb = spheres[b]
            if limb_a == limb_b and abs(ja - jb) <= 1:
                continue
            if allowed is not None and frozenset(((limb_a, ia), (limb_b, ib))) not in allowed:
                continue
            dist = float(np.linalg.norm(ca - cb))
            if dist < ra + rb + cfg.collision_margin:
                pair = tuple(sorted(((limb_a, ia), (limb_b, ib))))
                hits.append(pair)
    return hits


def safety_filter(targets: dict, prev: dict, model: RobotModel, cfg: SafetyConfig,
                  gripper: dict | None = None, target_pose: dict | None = None,
                  timestamp: float = 0.0) -> ControlSignal:
    """Clamp targets to joint limits and per-tick velocity, then hold any limb
    whose predicted configuration self-collides. Total on all inputs."""
    q_cmd = {}
    flags = {}
    for chain in model.limbs:
        limb = chain.name
        target = np.asarray(targets[limb], dtype=float)
        p = np.asarray(prev[limb], dtype=float)
        limited = chain.clamp(target)
        max_step = cfg.velocity_limits[limb] * cfg.loop_period
        diff = limited - p
        stepped = p + np.clip(diff, -max_step, max_step)
        q_cmd[limb] = stepped
        flags[limb] = {
            "limit": bool(((target < chain.limits_lower())
                           | (target > chain.limits_upper())).any()),
            "velocity": bool((np.abs(diff) > max_step).any()),
            "collision": False,
        }

    # Hold offending limbs at their previous configuration, re-checking until
    # stable (holding one limb can expose a pair against another moved limb;
    # the all-previous configuration is safe by construction).
    for _ in range(len(model.limbs) + 1):
        hits = check_self_collision(model, q_cmd, cfg)
        if not hits:
            break
        changed = False
        for pair in hits:
            for limb, _idx in pair:
                if not flags[limb]["collision"]:
                    q_cmd[limb] = np.asarray(prev[limb], dtype=float).copy()
                    flags[limb]["collision"] = True
                    changed = True
        if not changed:
            break

    return ControlSignal(
        q_cmd=q_cmd, gripper_cmd=dict(gripper or {}),
        target_pose=dict(target_pose or {}), flags=flags, timestamp=timestamp)


class TeleopPipeline:
    """Stateful per-session interpreter owned by the session loop."""

    def __init__(self, model: RobotModel, ik_configs: dict, safety: SafetyConfig):
        self.model = model
        self.ik_configs = ik_configs
        self.safety = safety
        self.initial_pose: dict = {}  # limb -> follower EEF pose at session start
        self.last_ik_results: dict = {}

    def validate_leader(self, leader) -> None:
        """Joint-space leaders must match the follower joint layout exactly."""
        for follower_limb in leader.mapping.follower_limbs:
            if follower_limb not in self.model.limb_names:
                raise ConfigurationError(
                    f"mapping targets unknown follower limb '{follower_limb}'")
        if leader.command_space() == "joint":
            joint_state = leader.joint_state() or {}
            for leader_limb, follower_limb in leader.mapping.pairs.items():
                have = len(joint_state.get(leader_limb, ()))
                want = self.model.limb(follower_limb).num_dof
                if have != want:
                    raise ConfigurationError(
                        f"joint-space leader limb '{leader_limb}' has {have} joints "
                        f"but follower limb '{follower_limb}' expects {want}")

    def capture_session_start(self, follower_state) -> None:
        self.initial_pose = dict(follower_state.eef_actual)

    def interpret(self, cmd: LeaderCommand, follower_state) -> tuple:
        """(per-limb joint targets, per-limb pre-IK target poses)."""
        targets = {}
        poses = {}
        self.last_ik_results = {}
        for limb, payload in cmd.payloads.items():
            chain = self.model.limb(limb)
            if isinstance(payload, JointPositions):
                if payload.q.shape != (chain.num_dof,):
                    raise ConfigurationError(
                        f"joint payload for limb '{limb}' has {payload.q.shape[0]} "
                        f"values, expected {chain.num_dof}")
                targets[limb] = payload.q.copy()
                poses[limb] = robot_model.forward_kinematics(chain, chain.clamp(payload.q))
            elif isinstance(payload, EefDelta):
                t0 = self.initial_pose.get(limb)
                if t0 is None:
                    raise ConfigurationError(
                        f"no session-start pose captured for limb '{limb}'")
                target = se3.compose(t0, payload.scaled_delta)
                q0 = follower_state.q_actual[limb]
                result = ik.solve(chain, target, q0, self.ik_configs[limb])
                self.last_ik_results[limb] = result
                targets[limb] = result.q_solution
                poses[limb] = target
            else:
                raise ConfigurationError(f"unknown payload type for limb '{limb}'")
        return targets, poses

    def process(self, cmd: LeaderCommand, follower_state, prev: dict,
                timestamp: float = 0.0) -> ControlSignal:
        """interpret + safety_filter, the per-tick path of the teleop loop."""
        targets, poses = self.interpret(cmd, follower_state)
        return safety_filter(
            targets, prev, self.model, self.safety,
            gripper=dict(cmd.gripper), target_pose=poses, timestamp=timestamp)
