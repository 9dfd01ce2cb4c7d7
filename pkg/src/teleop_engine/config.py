"""Config files: one YAML document each for the leader, the follower and the
environment. Schemas are documented in CONFIG.md; builders here turn parsed
dictionaries into live engine objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import presets
from .commands import LimbMapping
from .feedback import FeedbackConfig
from .ik import IKConfig
from .leaders import (ConsoleLeader, GestureConfig, TrajectoryLeader,
                      VirtualPuppeteerLeader, load_offline_trajectory)
from .pipeline import SafetyConfig
from .robot_model import LimbSelection, RobotModel, parse_robot_description


class ConfigError(Exception):
    pass


@dataclass
class FollowerConfig:
    urdf_text: str
    limbs: list  # LimbSelection
    base_pose: dict
    ik: dict  # "default" plus per-limb override dicts
    collision_margin: float = 0.01
    velocity_limits: dict | None = None  # per-limb override, else URDF values
    actuator_velocity_scale: float = 2.0
    actuator_velocity_limits: dict | None = None
    gripper_time_constant: float = 0.1


@dataclass
class LeaderConfig:
    type: str  # puppeteer | console | trajectory
    mapping: LimbMapping
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    gestures: GestureConfig = field(default_factory=GestureConfig)
    # puppeteer only
    urdf_text: str | None = None
    limbs: list = field(default_factory=list)
    base_pose: dict = field(default_factory=dict)
    command_space: str = "auto"
    profile: dict | None = None
    gripper_range: dict = field(default_factory=dict)
    # trajectory only
    trajectory_path: str | None = None


@dataclass
class EnvConfig:
    env: str = "sim"
    rate: float = 50.0
    approach_duration: float = 1.5
    service_enabled: bool = False
    service_host: str = "127.0.0.1"
    service_port: int = 8700
    service_state_rate: float = 30.0
    service_static_dir: str | None = None


def _load_yaml(path) -> dict:
    with Path(path).open() as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return data


def _read_urdf(data: dict, base_dir: Path) -> str:
    if "urdf_text" in data:
        return data["urdf_text"]
    if "urdf" not in data:
        raise ConfigError("config needs a 'urdf' (file path) or 'urdf_text' key")
    urdf_path = Path(data["urdf"])
    if not urdf_path.is_absolute():
        urdf_path = base_dir / urdf_path
    return urdf_path.read_text()


def _limb_selections(entries) -> list:
    out = []
    for e in entries:
        out.append(LimbSelection(
            name=e["name"], base_link=e["base_link"], tip_link=e["tip_link"],
            gripper_joint=e.get("gripper_joint"),
            collision_spheres=tuple(e.get("collision_spheres", ()))))
    return out


def follower_config_from_dict(data: dict, base_dir: Path | None = None) -> FollowerConfig:
    base_dir = base_dir or Path(".")
    safety = data.get("safety", {})
    actuator = data.get("actuator", {})
    return FollowerConfig(
        urdf_text=_read_urdf(data, base_dir),
        limbs=_limb_selections(data.get("limbs", [])),
        base_pose=data.get("base_pose", {}),
        ik=data.get("ik", {}),
        collision_margin=float(safety.get("collision_margin", 0.01)),
        velocity_limits=safety.get("velocity_limits"),
        actuator_velocity_scale=float(actuator.get("velocity_scale", 2.0)),
        actuator_velocity_limits=actuator.get("velocity_limits"),
        gripper_time_constant=float(actuator.get("gripper_time_constant", 0.1)),
    )


def leader_config_from_dict(data: dict, base_dir: Path | None = None) -> LeaderConfig:
    base_dir = base_dir or Path(".")
    kind = data.get("type")
    if kind not in ("puppeteer", "console", "trajectory"):
        raise ConfigError(f"leader type {kind!r} must be puppeteer, console or trajectory")
    mapping = LimbMapping.from_config(data.get("mapping", []))
    if not mapping.pairs:
        raise ConfigError("leader config needs a non-empty 'mapping'")
    fb = data.get("feedback", {})
    ges = data.get("gestures", {})
    cfg = LeaderConfig(
        type=kind,
        mapping=mapping,
        feedback=FeedbackConfig(
            kp=float(fb.get("kp", 1.0)), bias_gain=float(fb.get("bias_gain", 0.3)),
            gripper_gain=float(fb.get("gripper_gain", 1.0)),
            torque_clip=float(fb.get("torque_clip", 1.0)),
            rate=float(fb.get("rate", 200.0))),
        gestures=GestureConfig(
            close_threshold=float(ges.get("close_threshold", 0.9)),
            hold_seconds=float(ges.get("hold_seconds", 0.5)),
            open_threshold=float(ges.get("open_threshold", 0.5))),
    )
    if kind == "puppeteer":
        cfg.urdf_text = _read_urdf(data, base_dir)
        cfg.limbs = _limb_selections(data.get("limbs", []))
        cfg.base_pose = data.get("base_pose", {})
        cfg.command_space = data.get("command_space", "auto")
        cfg.profile = data.get("profile")
        cfg.gripper_range = {k: tuple(v) for k, v in data.get("gripper_range", {}).items()}
    elif kind == "trajectory":
        path = data.get("path")
        if path is None:
            raise ConfigError("trajectory leader needs a 'path'")
        p = Path(path)
        cfg.trajectory_path = str(p if p.is_absolute() else base_dir / p)
    return cfg


def env_config_from_dict(data: dict) -> EnvConfig:
    env = data.get("env", "sim")
    if env != "sim":
        raise ConfigError(f"environment '{env}' is not available; this build ships 'sim'")
    service = data.get("service", {})
    return EnvConfig(
        env=env,
        rate=float(data.get("rate", 50.0)),
        approach_duration=float(data.get("approach_duration", 1.5)),
        service_enabled=bool(service.get("enabled", False)),
        service_host=service.get("host", "127.0.0.1"),
        service_port=int(service.get("port", 8700)),
        service_state_rate=float(service.get("state_rate", 30.0)),
        service_static_dir=service.get("static_dir"),
    )


def load_follower_config(path) -> FollowerConfig:
    path = Path(path)
    return follower_config_from_dict(_load_yaml(path), path.parent)


def load_leader_config(path) -> LeaderConfig:
    path = Path(path)
    return leader_config_from_dict(_load_yaml(path), path.parent)


def load_env_config(path) -> EnvConfig:
    return env_config_from_dict(_load_yaml(path))


# ---------------------------------------------------------------------------
# Builders: typed configs -> engine objects
# ---------------------------------------------------------------------------

def build_follower_model(cfg: FollowerConfig) -> tuple:
    """(RobotModel, parse warnings) from a follower config."""
    model, warnings = parse_robot_description(
        cfg.urdf_text, {"limbs": cfg.limbs, "base_pose": cfg.base_pose})
    return model, warnings


def build_safety(cfg: FollowerConfig, model: RobotModel, rate: float) -> SafetyConfig:
    limits = {}
    for chain in model.limbs:
        if cfg.velocity_limits and chain.name in cfg.velocity_limits:
            limits[chain.name] = np.asarray(cfg.velocity_limits[chain.name], dtype=float)
        else:
            limits[chain.name] = chain.velocity_limits()
    return SafetyConfig(velocity_limits=limits, loop_period=1.0 / rate,
                        collision_margin=cfg.collision_margin)


def build_ik_configs(cfg: FollowerConfig, model: RobotModel) -> dict:
    default = dict(cfg.ik.get("default", {}))
    out = {}
    for chain in model.limbs:
        merged = dict(default)
        merged.update(cfg.ik.get(chain.name, {}))
        weights = merged.pop("joint_weights", None)
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
        out[chain.name] = IKConfig(joint_weights=weights, **merged)
    return out


def _sine_profile(model: RobotModel, limbs: list, profile: dict):
    """Scripted puppeteer motion: sinusoidal jog on a couple of joints, with a
    gripper-close window that fires the start gesture and, after `duration`,
    the end gesture."""
    amplitude = float(profile.get("amplitude", 0.25))
    period = float(profile.get("period", 8.0))
    moving = list(profile.get("joints", [1, 3]))
    start_delay = float(profile.get("start_delay", 0.2))
    duration = float(profile.get("duration", 20.0))
    hold = 0.8

    base = {limb: model.base_pose[limb].copy() for limb in limbs}

    def joint_script(t: float) -> dict:
        out = {}
        for limb, q0 in base.items():
            q = q0.copy()
            if t > start_delay + hold:
                phase = 2.0 * math.pi * (t - start_delay - hold) / period
                for j in moving:
                    if j < len(q):
                        q[j] = q0[j] + amplitude * math.sin(phase)
            out[limb] = q
        return out

    def gripper_script(t: float) -> dict:
        closing = (start_delay <= t <= start_delay + hold
                   or duration <= t <= duration + hold)
        return {limb: 1.0 if closing else 0.2 for limb in limbs}

    return joint_script, gripper_script


def build_leader(cfg: LeaderConfig, clock):
    if cfg.type == "console":
        return ConsoleLeader(cfg.mapping, clock=clock)
    if cfg.type == "trajectory":
        return load_offline_trajectory(cfg.trajectory_path, cfg.mapping, clock=clock)

    model, _warnings = parse_robot_description(
        cfg.urdf_text, {"limbs": cfg.limbs, "base_pose": cfg.base_pose})
    joint_script = gripper_script = None
    if cfg.profile:
        kind = cfg.profile.get("kind", "hold")
        if kind == "sine":
            joint_script, gripper_script = _sine_profile(
                model, cfg.mapping.leader_limbs, cfg.profile)
        elif kind != "hold":
            raise ConfigError(f"unknown puppeteer profile kind {kind!r}")
    return VirtualPuppeteerLeader(
        model, cfg.mapping, command_space=cfg.command_space,
        gesture_cfg=cfg.gestures, joint_script=joint_script,
        gripper_script=gripper_script, gripper_range=cfg.gripper_range or None,
        clock=clock)
