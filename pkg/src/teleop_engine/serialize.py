"""JSON-friendly encoding of poses and command payloads.

Shared by the recording format and the wire protocol. Rotations travel as
unit quaternions [x, y, z, w]; all values round-trip field-exactly.
"""

from __future__ import annotations

import numpy as np

from . import se3
from .commands import EefDelta, JointPositions
from .se3 import Pose


def pose_to_wire(p: Pose) -> dict:
    return {"t": [float(v) for v in p.translation],
            "q": [float(v) for v in se3.quat_from_rotation(p.rotation)]}


def pose_from_wire(d: dict) -> Pose:
    return Pose(se3.rotation_from_quat(np.asarray(d["q"], dtype=float)),
                np.asarray(d["t"], dtype=float))


def payload_to_wire(payload) -> dict:
    if isinstance(payload, JointPositions):
        return {"kind": "joint", "q": [float(v) for v in payload.q]}
    if isinstance(payload, EefDelta):
        return {"kind": "eef", "delta": pose_to_wire(payload.scaled_delta)}
    raise TypeError(f"unknown payload type {type(payload).__name__}")


def payload_from_wire(d: dict):
    kind = d.get("kind")
    if kind == "joint":
        return JointPositions(np.asarray(d["q"], dtype=float))
    if kind == "eef":
        return EefDelta(pose_from_wire(d["delta"]))
    raise ValueError(f"unknown payload kind {kind!r}")


def vector_to_wire(v) -> list:
    return [float(x) for x in np.asarray(v).ravel()]
