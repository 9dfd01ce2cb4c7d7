"""Leader command payloads and limb mapping.

A leader emits one payload per follower limb: either joint positions (only
valid when leader and follower share the joint layout) or a scaled delta pose
relative to the leader pose captured at session start.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import se3
from .se3 import Pose


@dataclass(frozen=True)
class JointPositions:
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))

    @property
    def kind(self) -> str:
        return "joint"


@dataclass(frozen=True)
class EefDelta:
    scaled_delta: Pose

    @property
    def kind(self) -> str:
        return "eef"


@dataclass(frozen=True)
class LeaderCommand:
    """Per-tick leader output, keyed by follower limb name."""

    payloads: dict  # limb -> JointPositions | EefDelta
    gripper: dict = field(default_factory=dict)  # limb -> value in [0, 1]
    start_requested: bool = False
    end_requested: bool = False
    timestamp: float = 0.0

    def restamped(self, timestamp: float) -> "LeaderCommand":
        return LeaderCommand(self.payloads, self.gripper, self.start_requested,
                             self.end_requested, timestamp)


@dataclass(frozen=True)
class LimbMapping:
    """leader limb -> follower limb, with a per-limb translation scale."""

    pairs: dict
    scale: dict = field(default_factory=dict)

    def __post_init__(self):
        followers = list(self.pairs.values())
        if len(set(followers)) != len(followers):
            raise ValueError(f"limb mapping is not injective: {self.pairs}")
        scale = {k: float(self.scale.get(k, 1.0)) for k in self.pairs}
        for k, s in scale.items():
            if s <= 0:
                raise ValueError(f"scale for limb '{k}' must be > 0, got {s}")
        object.__setattr__(self, "scale", scale)

    @property
    def leader_limbs(self) -> list:
        return list(self.pairs.keys())

    @property
    def follower_limbs(self) -> list:
        return list(self.pairs.values())

    def leader_for(self, follower_limb: str) -> str:
        for leader, follower in self.pairs.items():
            if follower == follower_limb:
                return leader
        raise KeyError(f"no leader limb mapped to '{follower_limb}'")

    @staticmethod
    def from_config(entries) -> "LimbMapping":
        pairs = {e["leader_limb"]: e["follower_limb"] for e in entries}
        if len(pairs) != len(entries):
            raise ValueError("duplicate leader limbs in mapping")
        scale = {e["leader_limb"]: float(e.get("scale", 1.0)) for e in entries}
        return LimbMapping(pairs=pairs, scale=scale)


def compute_delta(t0: Pose, tt: Pose, s: float) -> Pose:
    """Relative pose from t0 to tt with translation scaled by s (rotation never is)."""
    if s <= 0:
        raise ValueError(f"scale must be > 0, got {s}")
    rel = se3.compose(se3.inverse(t0), tt)
    return Pose(rel.rotation, s * rel.translation)
