"""Built-in demo robots and configs: a 7-DoF arm, a 6-DoF arm, multi-limb
table setups. Used by the benchmark command, the demo-config writer and the
test suite. All geometry is generated as URDF text so the regular parser is
the only way models enter the engine.
"""

from __future__ import annotations

import math

# ---------------------------------------------------------------------------
# URDF builders
# ---------------------------------------------------------------------------

# (name, parent, child, type, xyz, axis, lower, upper, velocity)
_ARM7_JOINTS = [
    ("j1", "mount", "l1", "revolute", (0, 0, 0.08), (0, 0, 1), -2.96, 2.96, 2.0),
    ("j2", "l1", "l2", "revolute", (0, 0, 0.06), (0, 1, 0), -2.09, 2.09, 2.0),
    ("j3", "l2", "l3", "revolute", (0, 0, 0.20), (0, 0, 1), -2.96, 2.96, 2.5),
    ("j4", "l3", "l4", "revolute", (0, 0, 0.06), (0, 1, 0), -2.23, 2.23, 2.5),
    ("j5", "l4", "l5", "revolute", (0, 0, 0.20), (0, 0, 1), -2.96, 2.96, 3.0),
    ("j6", "l5", "l6", "revolute", (0, 0, 0.05), (0, 1, 0), -2.09, 2.09, 3.0),
    ("j7", "l6", "l7", "revolute", (0, 0, 0.12), (0, 0, 1), -3.05, 3.05, 3.0),
]

_ARM6_JOINTS = [
    ("j1", "mount", "a1", "revolute", (0, 0, 0.089), (0, 0, 1), -3.1416, 3.1416, 3.15),
    ("j2", "a1", "a2", "revolute", (0, 0.135, 0), (0, 1, 0), -3.1416, 3.1416, 3.15),
    ("j3", "a2", "a3", "revolute", (0, 0, 0.425), (0, 1, 0), -3.1416, 3.1416, 3.15),
    ("j4", "a3", "a4", "revolute", (0, -0.12, 0.392), (0, 1, 0), -3.1416, 3.1416, 3.2),
    ("j5", "a4", "a5", "revolute", (0, 0, 0.093), (0, 0, 1), -3.1416, 3.1416, 3.2),
    ("j6", "a5", "a6", "revolute", (0, 0.095, 0), (0, 1, 0), -3.1416, 3.1416, 3.2),
]

ARM7_BASE_POSE = [0.0, 0.55, 0.0, -1.1, 0.0, 0.85, 0.0]
ARM6_BASE_POSE = [0.0, -0.6, 1.2, -0.6, 0.0, 0.0]

ARM7_COLLISION_SPHERES = [
    {"joint_index": 2, "center": [0.0, 0.0, 0.03], "radius": 0.08},
    {"joint_index": 4, "center": [0.0, 0.0, 0.10], "radius": 0.07},
    {"joint_index": 6, "center": [0.0, 0.0, 0.04], "radius": 0.06},
]


def _fmt(v) -> str:
    return " ".join(f"{x:g}" for x in v)


def _emit_arm(lines: list, joints: list, prefix: str, tool_offset: float,
              gripper: tuple | None) -> None:
    for name, parent, child, kind, xyz, axis, lo, hi, vel in joints:
        lines.append(f'  <link name="{prefix}{child}"/>')
        lines.append(f'  <joint name="{prefix}{name}" type="{kind}">')
        lines.append(f'    <parent link="{prefix}{parent}"/>')
        lines.append(f'    <child link="{prefix}{child}"/>')
        lines.append(f'    <origin xyz="{_fmt(xyz)}" rpy="0 0 0"/>')
        lines.append(f'    <axis xyz="{_fmt(axis)}"/>')
        lines.append(f'    <limit lower="{lo}" upper="{hi}" velocity="{vel}"/>')
        lines.append("  </joint>")
    last_link = prefix + joints[-1][2]
    lines.append(f'  <link name="{prefix}tool"/>')
    lines.append(f'  <joint name="{prefix}tool_joint" type="fixed">')
    lines.append(f'    <parent link="{last_link}"/>')
    lines.append(f'    <child link="{prefix}tool"/>')
    lines.append(f'    <origin xyz="0 0 {tool_offset:g}" rpy="0 0 0"/>')
    lines.append("  </joint>")
    if gripper is not None:
        lo, hi, vel = gripper
        lines.append(f'  <link name="{prefix}finger"/>')
        lines.append(f'  <joint name="{prefix}gripper" type="prismatic">')
        lines.append(f'    <parent link="{prefix}tool"/>')
        lines.append(f'    <child link="{prefix}finger"/>')
        lines.append('    <origin xyz="0 0 0.02" rpy="0 0 0"/>')
        lines.append('    <axis xyz="0 1 0"/>')
        lines.append(f'    <limit lower="{lo}" upper="{hi}" velocity="{vel}"/>')
        lines.append("  </joint>")


def mount_layout(n_limbs: int) -> list:
    """(limb_name, xyz, yaw) mount placements; limbs face outward from center."""
    if n_limbs == 1:
        return [("limb1", (0.0, 0.0, 0.0), 0.0)]
    if n_limbs == 2:
        return [("left", (0.0, 0.25, 0.0), math.pi / 2),
                ("right", (0.0, -0.25, 0.0), -math.pi / 2)]
    if n_limbs == 4:
        return [("limb1", (0.3, 0.0, 0.0), 0.0),
                ("limb2", (0.0, 0.3, 0.0), math.pi / 2),
                ("limb3", (-0.3, 0.0, 0.0), math.pi),
                ("limb4", (0.0, -0.3, 0.0), -math.pi / 2)]
    raise ValueError(f"unsupported limb count {n_limbs} (use 1, 2 or 4)")


def build_multi_arm_urdf(n_limbs: int, arm: str = "arm7", robot_name: str = "table_rig") -> str:
    """URDF for n arms (1, 2 or 4) mounted on a common base, facing outward."""
    joints = {"arm7": _ARM7_JOINTS, "arm6": _ARM6_JOINTS}[arm]
    tool_offset = {"arm7": 0.06, "arm6": 0.082}[arm]
    gripper = {"arm7": (0.0, 0.04, 0.1), "arm6": (0.0, 0.05, 0.1)}[arm]
    lines = [f'<robot name="{robot_name}">', '  <link name="world"/>']
    for limb, xyz, yaw in mount_layout(n_limbs):
        prefix = f"{limb}_"
        lines.append(f'  <link name="{prefix}mount"/>')
        lines.append(f'  <joint name="{prefix}mount_joint" type="fixed">')
        lines.append('    <parent link="world"/>')
        lines.append(f'    <child link="{prefix}mount"/>')
        lines.append(f'    <origin xyz="{_fmt(xyz)}" rpy="0 0 {yaw:g}"/>')
        lines.append("  </joint>")
        _emit_arm(lines, joints, prefix, tool_offset, gripper)
    lines.append("</robot>")
    return "\n".join(lines) + "\n"


def build_single_arm_urdf(arm: str = "arm7", robot_name: str | None = None) -> str:
    """One arm with its mount at the world origin. Limb name is 'limb1'."""
    return build_multi_arm_urdf(1, arm=arm, robot_name=robot_name or arm)


PLANAR_2R_URDF = """\
<robot name="planar2r">
  <link name="base"/>
  <link name="upper"/>
  <link name="lower"/>
  <link name="tip"/>
  <joint name="shoulder" type="revolute">
    <parent link="base"/>
    <child link="upper"/>
    <origin xyz="0 0 0" rpy="0 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3.0" upper="3.0" velocity="1.0"/>
  </joint>
  <joint name="elbow" type="revolute">
    <parent link="upper"/>
    <child link="lower"/>
    <origin xyz="1 0 0" rpy="0 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3.0" upper="3.0" velocity="1.0"/>
  </joint>
  <joint name="tip_joint" type="fixed">
    <parent link="lower"/>
    <child link="tip"/>
    <origin xyz="1 0 0" rpy="0 0 0"/>
  </joint>
</robot>
"""


# ---------------------------------------------------------------------------
# Config dict builders (same shapes as the YAML files)
# ---------------------------------------------------------------------------

def follower_config_dict(n_limbs: int = 2, arm: str = "arm7",
                         with_spheres: bool = True) -> dict:
    base = {"arm7": ARM7_BASE_POSE, "arm6": ARM6_BASE_POSE}[arm]
    limbs = []
    base_pose = {}
    for limb, _xyz, _yaw in mount_layout(n_limbs):
        entry = {
            "name": limb,
            "base_link": "world",
            "tip_link": f"{limb}_tool",
            "gripper_joint": f"{limb}_gripper",
        }
        if with_spheres and arm == "arm7":
            entry["collision_spheres"] = [dict(s) for s in ARM7_COLLISION_SPHERES]
        limbs.append(entry)
        base_pose[limb] = list(base)
    return {
        "limbs": limbs,
        "base_pose": base_pose,
        "ik": {"default": {
            "damping": 1e-3, "max_iterations": 100,
            "position_tolerance": 1e-3, "orientation_tolerance": 1e-3,
            "step_scale": 1.0,
        }},
        "safety": {"collision_margin": 0.01},
        "actuator": {"velocity_scale": 2.0, "gripper_time_constant": 0.1},
    }


def puppeteer_leader_config_dict(n_limbs: int = 2, arm: str = "arm7",
                                 follower_limbs: list | None = None,
                                 scale: float = 1.0) -> dict:
    names = [m[0] for m in mount_layout(n_limbs)]
    follower_limbs = follower_limbs or names
    return {
        "type": "puppeteer",
        "limbs": [{"name": n, "base_link": "world", "tip_link": f"{n}_tool",
                   "gripper_joint": f"{n}_gripper"} for n in names],
        "base_pose": {n: list({"arm7": ARM7_BASE_POSE, "arm6": ARM6_BASE_POSE}[arm])
                      for n in names},
        "mapping": [{"leader_limb": l, "follower_limb": f, "scale": scale}
                    for l, f in zip(names, follower_limbs)],
        "gestures": {"close_threshold": 0.9, "hold_seconds": 0.5, "open_threshold": 0.5},
        "feedback": {"bias_gain": 0.3, "kp": 1.0, "gripper_gain": 1.0,
                     "torque_clip": 1.0, "rate": 200.0},
    }


def console_leader_config_dict(follower_limbs: list, scale: float = 1.0) -> dict:
    return {
        "type": "console",
        "mapping": [{"leader_limb": n, "follower_limb": n, "scale": scale}
                    for n in follower_limbs],
        "feedback": {"bias_gain": 0.0, "kp": 1.0, "gripper_gain": 1.0,
                     "torque_clip": 1.0, "rate": 200.0},
    }


def env_config_dict(rate: float = 50.0, service: bool = False, port: int = 8700) -> dict:
    return {
        "env": "sim",
        "rate": rate,
        "service": {"enabled": service, "host": "127.0.0.1", "port": port,
                    "state_rate": 30.0},
    }
