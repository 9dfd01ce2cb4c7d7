"""Kinematic robot model: URDF-subset parsing, forward kinematics, Jacobians.

The parser supports robot/link/joint elements with origin(xyz, rpy), axis and
limit(lower, upper, velocity). RPY uses the extrinsic X-Y-Z (fixed axis)
convention. Meshes, dynamics, transmissions and other unsupported elements are
skipped and reported in the warning list. Continuous joints become revolute
with limits +-1e9.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from . import se3
from .se3 import Pose

CONTINUOUS_LIMIT = 1e9
_DEFAULT_VELOCITY_LIMIT = 2.0

# Elements we knowingly skip; anything else unknown inside robot/link/joint is
# also warned about, so new URDF features never silently change behavior.
_IGNORED_TAGS = {
    "visual", "collision", "inertial", "transmission", "gazebo", "material",
    "mimic", "dynamics", "safety_controller", "calibration",
}


class ModelError(Exception):
    """Base error for robot-description problems."""


class UrdfParseError(ModelError):
    """Malformed XML; carries line/column when available."""


class StructuralError(ModelError):
    """Well-formed XML describing an invalid kinematic structure."""


class ChainExtractionError(ModelError):
    """A configured base/tip/gripper link or joint could not be resolved."""


class UnsupportedJointError(ModelError):
    """Joint kind outside revolute/prismatic/fixed/continuous."""


@dataclass(frozen=True)
class JointSpec:
    """One joint: kind, axis, fixed origin offset from the parent frame, limits."""

    name: str
    kind: str  # "revolute" | "prismatic" | "fixed"
    axis: np.ndarray
    origin: Pose
    limit_lower: float = -CONTINUOUS_LIMIT
    limit_upper: float = CONTINUOUS_LIMIT
    velocity_limit: float = _DEFAULT_VELOCITY_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float))
        if self.kind not in ("revolute", "prismatic", "fixed"):
            raise UnsupportedJointError(f"unsupported joint kind '{self.kind}' on '{self.name}'")
        if self.kind != "fixed":
            n = np.linalg.norm(self.axis)
            if abs(n - 1.0) > 1e-9:
                raise StructuralError(f"joint '{self.name}' axis norm {n} != 1")
        if self.limit_lower > self.limit_upper:
            raise StructuralError(
                f"joint '{self.name}' limits inverted: {self.limit_lower} > {self.limit_upper}")
        if self.kind != "fixed" and self.velocity_limit <= 0:
            raise StructuralError(f"joint '{self.name}' velocity limit must be > 0")

    @property
    def is_actuated(self) -> bool:
        return self.kind != "fixed"


@dataclass(frozen=True)
class CollisionSphere:
    """Sphere rigidly attached to the frame of chain joint `joint_index`."""

    joint_index: int
    center: np.ndarray  # local offset in the joint frame, meters
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius <= 0:
            raise StructuralError(f"collision sphere radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class LimbChain:
    """Serial chain base->tip for one limb, plus optional gripper joint."""

    name: str
    joints: tuple  # JointSpec, base to tip (fixed joints included)
    eef_frame: Pose = field(default_factory=Pose.identity)
    gripper_joint: JointSpec | None = None
    collision_spheres: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "collision_spheres", tuple(self.collision_spheres))
        if self.num_dof < 1:
            raise StructuralError(f"limb '{self.name}' has no actuated joints")
        for s in self.collision_spheres:
            if not 0 <= s.joint_index < len(self.joints):
                raise StructuralError(
                    f"limb '{self.name}': sphere joint index {s.joint_index} out of range")

    @property
    def num_dof(self) -> int:
        return sum(1 for j in self.joints if j.is_actuated)

    @property
    def actuated_joints(self) -> list:
        return [j for j in self.joints if j.is_actuated]

    @property
    def joint_names(self) -> list:
        return [j.name for j in self.actuated_joints]

    def limits_lower(self) -> np.ndarray:
        return np.array([j.limit_lower for j in self.actuated_joints])

    def limits_upper(self) -> np.ndarray:
        return np.array([j.limit_upper for j in self.actuated_joints])

    def velocity_limits(self) -> np.ndarray:
        return np.array([j.velocity_limit for j in self.actuated_joints])

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.limits_lower(), self.limits_upper())


@dataclass(frozen=True)
class RobotModel:
    """Parsed multi-limb robot: limb chains plus the idle base joint pose."""

    limbs: tuple
    base_pose: dict  # limb name -> joint vector

    def __post_init__(self):
        object.__setattr__(self, "limbs", tuple(self.limbs))
        names = [c.name for c in self.limbs]
        if len(set(names)) != len(names):
            raise StructuralError(f"duplicate limb names: {names}")
        base = {k: np.asarray(v, dtype=float) for k, v in self.base_pose.items()}
        object.__setattr__(self, "base_pose", base)
        for chain in self.limbs:
            q = base.get(chain.name)
            if q is None:
                base[chain.name] = np.zeros(chain.num_dof)
                continue
            if q.shape != (chain.num_dof,):
                raise StructuralError(
                    f"base pose for limb '{chain.name}' has {q.shape[0]} entries, "
                    f"expected {chain.num_dof}")
            if (q < chain.limits_lower() - 1e-12).any() or (q > chain.limits_upper() + 1e-12).any():
                raise StructuralError(f"base pose for limb '{chain.name}' violates joint limits")

    @property
    def limb_names(self) -> list:
        return [c.name for c in self.limbs]

    def limb(self, name: str) -> LimbChain:
        for c in self.limbs:
            if c.name == name:
                return c
        raise KeyError(f"no limb named '{name}'")


@dataclass(frozen=True)
class LimbSelection:
    """One configured limb: which URDF sub-chain to extract and its attachments."""

    name: str
    base_link: str
    tip_link: str
    gripper_joint: str | None = None
    collision_spheres: tuple = ()


def _check_dims(chain: LimbChain, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.num_dof,):
        raise ValueError(
            f"limb '{chain.name}' expects {chain.num_dof} joint values, got {q.shape}")
    return q


def _joint_motion(joint: JointSpec, value: float) -> Pose:
    if joint.kind == "revolute":
        return Pose(se3.rotation_about_axis(joint.axis, value), np.zeros(3))
    if joint.kind == "prismatic":
        return Pose(np.eye(3), joint.axis * value)
    return Pose.identity()


def frame_poses(chain: LimbChain, q: np.ndarray) -> list:
    """Pose of every joint frame base->tip, then the EEF frame as last element."""
    q = _check_dims(chain, q)
    frames = []
    t = Pose.identity()
    qi = 0
    for joint in chain.joints:
        t = se3.compose(t, joint.origin)
        if joint.is_actuated:
            t = se3.compose(t, _joint_motion(joint, q[qi]))
            qi += 1
        frames.append(t)
    frames.append(se3.compose(t, chain.eef_frame))
    return frames


def frame_positions(chain: LimbChain, q: np.ndarray) -> list:
    """Alias of frame_poses kept for callers that only need positions."""
    return frame_poses(chain, q)


def forward_kinematics(chain: LimbChain, q: np.ndarray) -> Pose:
    """EEF pose: product of joint transforms followed by the fixed EEF offset."""
    return frame_poses(chain, q)[-1]


def geometric_jacobian(chain: LimbChain, q: np.ndarray) -> np.ndarray:
    """6xN geometric Jacobian at the EEF origin, expressed in the base frame.

    Columns: revolute -> [z_i x (p_eef - p_i); z_i], prismatic -> [z_i; 0].
    """
    q = _check_dims(chain, q)
    frames = frame_poses(chain, q)
    p_eef = frames[-1].translation
    jac = np.zeros((6, chain.num_dof))
    col = 0
    for idx, joint in enumerate(chain.joints):
        if not joint.is_actuated:
            continue
        frame = frames[idx]
        z = frame.rotation @ joint.axis
        if joint.kind == "revolute":
            jac[:3, col] = np.cross(z, p_eef - frame.translation)
            jac[3:, col] = z
        else:
            jac[:3, col] = z
        col += 1
    return jac


def sphere_centers_world(chain: LimbChain, q: np.ndarray) -> list:
    """(world_center, radius) for each collision sphere at configuration q."""
    if not chain.collision_spheres:
        return []
    frames = frame_poses(chain, q)
    return [(se3.transform_point(frames[s.joint_index], s.center), s.radius)
            for s in chain.collision_spheres]


# ---------------------------------------------------------------------------
# URDF-subset parsing
# ---------------------------------------------------------------------------

def _parse_origin(elem) -> Pose:
    if elem is None:
        return Pose.identity()
    xyz = [float(v) for v in elem.get("xyz", "0 0 0").split()]
    rpy = [float(v) for v in elem.get("rpy", "0 0 0").split()]
    if len(xyz) != 3 or len(rpy) != 3:
        raise StructuralError("origin xyz/rpy must have 3 entries each")
    return Pose(se3.rpy_to_rotation(*rpy), np.array(xyz))


def _parse_joint_element(elem, warnings: list) -> dict:
    name = elem.get("name")
    kind = elem.get("type")
    if name is None or kind is None:
        raise StructuralError("joint element missing name or type")
    if kind not in ("revolute", "prismatic", "fixed", "continuous"):
        raise UnsupportedJointError(f"unsupported joint kind '{kind}' on joint '{name}'")

    parent = elem.find("parent")
    child = elem.find("child")
    if parent is None or child is None or "link" not in parent.attrib or "link" not in child.attrib:
        raise StructuralError(f"joint '{name}' missing parent/child link")

    axis = np.array([0.0, 0.0, 1.0])
    axis_elem = elem.find("axis")
    if axis_elem is not None:
        axis = np.array([float(v) for v in axis_elem.get("xyz", "0 0 1").split()])
        n = np.linalg.norm(axis)
        if n < 1e-12:
            raise StructuralError(f"joint '{name}' has zero axis")
        axis = axis / n

    lower, upper = -CONTINUOUS_LIMIT, CONTINUOUS_LIMIT
    velocity = _DEFAULT_VELOCITY_LIMIT
    limit_elem = elem.find("limit")
    if limit_elem is not None:
        lower = float(limit_elem.get("lower", lower))
        upper = float(limit_elem.get("upper", upper))
        velocity = float(limit_elem.get("velocity", velocity))
    elif kind == "revolute":
        warnings.append(f"joint '{name}' has no <limit>; using +-{CONTINUOUS_LIMIT:g}")

    for sub in elem:
        if sub.tag in ("parent", "child", "axis", "origin", "limit"):
            continue
        warnings.append(f"ignored <{sub.tag}> in joint '{name}'")

    if kind == "continuous":
        kind = "revolute"
        lower, upper = -CONTINUOUS_LIMIT, CONTINUOUS_LIMIT

    spec = JointSpec(
        name=name, kind=kind, axis=axis, origin=_parse_origin(elem.find("origin")),
        limit_lower=lower, limit_upper=upper, velocity_limit=velocity,
    )
    return {"spec": spec, "parent": parent.attrib["link"], "child": child.attrib["link"]}


def _walk_chain(joints_by_child: dict, links: set, base_link: str, tip_link: str) -> list:
    """Joints tip->base reversed into base->tip order; detects unknown links and cycles."""
    if tip_link not in links:
        raise ChainExtractionError(f"chain extraction failed: {tip_link}")
    if base_link not in links:
        raise ChainExtractionError(f"chain extraction failed: {base_link}")
    chain = []
    link = tip_link
    visited = {link}
    while link != base_link:
        entry = joints_by_child.get(link)
        if entry is None:
            raise ChainExtractionError(f"chain extraction failed: {base_link}")
        chain.append(entry["spec"])
        link = entry["parent"]
        if link in visited:
            raise StructuralError(f"cyclic joint graph at link '{link}'")
        visited.add(link)
    chain.reverse()
    return chain


def parse_robot_description(xml_text: str, limb_config) -> tuple:
    """Parse a URDF-subset document into a RobotModel.

    limb_config is an iterable of LimbSelection (or a dict with keys "limbs"
    and optional "base_pose"). Returns (RobotModel, warnings).
    """
    if isinstance(limb_config, dict):
        selections = [s if isinstance(s, LimbSelection) else LimbSelection(**s)
                      for s in limb_config["limbs"]]
        base_pose = limb_config.get("base_pose", {})
    else:
        selections = list(limb_config)
        base_pose = {}

    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise UrdfParseError(f"malformed XML at line {line}, column {col}: {exc.msg}") from exc

    if root.tag != "robot":
        raise StructuralError(f"expected <robot> root element, got <{root.tag}>")

    warnings: list = []
    links: set = set()
    joints: dict = {}
    joints_by_child: dict = {}

    for elem in root:
        if elem.tag == "link":
            name = elem.get("name")
            if name is None:
                raise StructuralError("link element missing name")
            links.add(name)
            for sub in elem.iter():
                if sub.tag in ("mesh",) or (sub is not elem and sub.tag in _IGNORED_TAGS):
                    warnings.append(f"ignored <{sub.tag}> in link '{name}'")
        elif elem.tag == "joint":
            entry = _parse_joint_element(elem, warnings)
            jname = entry["spec"].name
            if jname in joints:
                raise StructuralError(f"duplicate joint name '{jname}'")
            if entry["child"] in joints_by_child:
                raise StructuralError(f"link '{entry['child']}' has two parent joints")
            joints[jname] = entry
            joints_by_child[entry["child"]] = entry
        else:
            warnings.append(f"ignored <{elem.tag}> element")

    for entry in joints.values():
        for link in (entry["parent"], entry["child"]):
            if link not in links:
                raise StructuralError(
                    f"joint '{entry['spec'].name}' references undeclared link '{link}'")

    limbs = []
    for sel in selections:
        chain_joints = _walk_chain(joints_by_child, links, sel.base_link, sel.tip_link)
        gripper = None
        if sel.gripper_joint is not None:
            if sel.gripper_joint not in joints:
                raise ChainExtractionError(f"chain extraction failed: {sel.gripper_joint}")
            gripper = joints[sel.gripper_joint]["spec"]
            chain_joints = [j for j in chain_joints if j.name != gripper.name]
        # Trailing fixed joints carry no state; fold them into the EEF offset.
        eef_frame = Pose.identity()
        while chain_joints and not chain_joints[-1].is_actuated:
            eef_frame = se3.compose(chain_joints[-1].origin, eef_frame)
            chain_joints = chain_joints[:-1]
        spheres = tuple(
            s if isinstance(s, CollisionSphere) else CollisionSphere(**s)
            for s in sel.collision_spheres)
        limbs.append(LimbChain(
            name=sel.name, joints=chain_joints, eef_frame=eef_frame,
            gripper_joint=gripper, collision_spheres=spheres))

    model = RobotModel(limbs=tuple(limbs), base_pose=dict(base_pose))
    return model, warnings
