"""Control-step latency benchmark.

Measures the wall-clock compute time of one teleop loop iteration (poll,
interpret, safety filter, follower step) for 1/2/4 limbs in joint pass-through
and delta-pose (IK) modes, on the built-in table rigs. The session runs on a
virtual clock so pacing sleeps never pollute the numbers; the feedback thread
is excluded, as it runs outside the measured loop.
"""

from __future__ import annotations

import math

import numpy as np

from . import config as config_mod
from . import presets
from .clocks import FakeClock
from .commands import LimbMapping
from .leaders import VirtualPuppeteerLeader
from .robot_model import parse_robot_description
from .session import TeleopSession


def _build_leader(mode: str, n_limbs: int, follower_limbs: list, clock) -> VirtualPuppeteerLeader:
    arm = "arm7" if mode == "joint" else "arm6"
    urdf = presets.build_multi_arm_urdf(n_limbs, arm=arm)
    cfg = presets.puppeteer_leader_config_dict(n_limbs, arm=arm,
                                               follower_limbs=follower_limbs)
    model, _ = parse_robot_description(
        urdf, {"limbs": config_mod._limb_selections(cfg["limbs"]),
               "base_pose": cfg["base_pose"]})
    mapping = LimbMapping.from_config(cfg["mapping"])
    base = {limb: model.base_pose[limb].copy() for limb in mapping.leader_limbs}

    def joint_script(t: float) -> dict:
        out = {}
        for limb, q0 in base.items():
            q = q0.copy()
            q[1] = q0[1] + 0.2 * math.sin(2.0 * math.pi * t / 4.0)
            q[3] = q0[3] + 0.2 * math.cos(2.0 * math.pi * t / 4.0)
            out[limb] = q
        return out

    return VirtualPuppeteerLeader(model, mapping, command_space=mode,
                                  joint_script=joint_script, clock=clock)


def run_bench(n_limbs: int, mode: str, steps: int = 300, warmup: int = 20,
              rate: float = 50.0) -> dict:
    """Benchmark one (limb count, command mode) cell. Returns timing stats in ms."""
    if mode not in ("joint", "eef"):
        raise ValueError(f"mode must be 'joint' or 'eef', got {mode!r}")
    clock = FakeClock()
    follower_cfg = config_mod.follower_config_from_dict(
        {**presets.follower_config_dict(n_limbs),
         "urdf_text": presets.build_multi_arm_urdf(n_limbs, arm="arm7")})
    env_cfg = config_mod.env_config_from_dict(presets.env_config_dict(rate=rate))
    env_cfg.approach_duration = 0.2

    model, warnings = config_mod.build_follower_model(follower_cfg)
    safety = config_mod.build_safety(follower_cfg, model, rate)
    ik_configs = config_mod.build_ik_configs(follower_cfg, model)

    from .follower import KinematicFollower
    from .pipeline import TeleopPipeline

    leader = _build_leader(mode, n_limbs, model.limb_names, clock.time)
    pipeline = TeleopPipeline(model, ik_configs, safety)
    follower = KinematicFollower(model, safety, clock=clock.time)
    session = TeleopSession(
        leader, model, pipeline, follower, feedback_cfg=None, recorder=None,
        rate=rate, approach_duration=env_cfg.approach_duration,
        clock=clock.time, sleep_fn=clock.sleep, warnings=warnings)

    leader.request_start()
    dt = 1.0 / rate
    duration = env_cfg.approach_duration + (steps + warmup + 2) * dt
    session.run(max_duration=duration)

    samples = np.asarray(session.tick_compute[warmup:], dtype=float) * 1e3
    if samples.size == 0:
        raise RuntimeError("benchmark produced no samples")
    return {
        "limbs": n_limbs,
        "mode": mode,
        "steps": int(samples.size),
        "mean_ms": float(samples.mean()),
        "median_ms": float(np.median(samples)),
        "p99_ms": float(np.percentile(samples, 99)),
        "max_ms": float(samples.max()),
    }


def format_table(results: list) -> str:
    lines = [f"{'limbs':>5}  {'mode':<6} {'steps':>5}  {'mean ms':>8}  "
             f"{'median ms':>9}  {'p99 ms':>8}"]
    for r in results:
        lines.append(f"{r['limbs']:>5}  {r['mode']:<6} {r['steps']:>5}  "
                     f"{r['mean_ms']:>8.3f}  {r['median_ms']:>9.3f}  {r['p99_ms']:>8.3f}")
    return "\n".join(lines)
