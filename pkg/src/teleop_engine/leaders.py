"""Leader devices: a uniform source of commands for the teleop loop.

Three built-in devices cover the taxonomy at desk scale:
  - VirtualPuppeteerLeader: a simulated joint-state stream with its own
    kinematic model. Emits joint positions when its chain matches the
    follower, otherwise delta poses via forward kinematics.
  - ConsoleLeader: pose-space input pushed over the service protocol; its
    reference pose starts at identity and drags accumulate.
  - TrajectoryLeader: replays a recorded JSONL stream against the session
    clock.

Every leader is a producer behind a poll() with hold-last semantics: the
session loop always gets the freshest command, re-stamped when nothing new
arrived.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import robot_model, se3, serialize
from .commands import EefDelta, JointPositions, LeaderCommand, LimbMapping, compute_delta
from .recording import SCHEMA_VERSION, read_recording
from .se3 import Pose


class LeaderError(Exception):
    pass


class LeaderDisconnectedError(LeaderError):
    """Device went away; carries the last known command for a graceful stop."""

    def __init__(self, last_command: LeaderCommand | None):
        super().__init__("leader device disconnected")
        self.last_command = last_command


@dataclass(frozen=True)
class GestureConfig:
    close_threshold: float = 0.9
    hold_seconds: float = 0.5
    open_threshold: float = 0.5


class GripGestureDetector:
    """Fires once when every gripper stays above close_threshold for the hold
    window; re-arms only after all grippers drop below open_threshold."""

    def __init__(self, cfg: GestureConfig):
        self.cfg = cfg
        self._armed = True
        self._hold_start = None

    def update(self, values, now: float) -> bool:
        values = list(values)
        closed = bool(values) and all(v > self.cfg.close_threshold for v in values)
        released = not values or all(v < self.cfg.open_threshold for v in values)
        if not self._armed:
            if released:
                self._armed = True
            return False
        if not closed:
            self._hold_start = None
            return False
        if self._hold_start is None:
            self._hold_start = now
        if now - self._hold_start >= self.cfg.hold_seconds:
            self._armed = False
            self._hold_start = None
            return True
        return False


class LeaderHandle:
    """Base interface shared by all leader devices."""

    def __init__(self, mapping: LimbMapping, clock=time.monotonic):
        self.mapping = mapping
        self.clock = clock
        self.active = False
        self.last_feedback = None
        self._last_command: LeaderCommand | None = None

    # -- session lifecycle -------------------------------------------------
    def start_signal_check(self) -> bool:
        raise NotImplementedError

    def on_session_start(self) -> None:
        self.active = True

    def on_running_start(self) -> None:
        pass

    def on_session_end(self) -> None:
        self.active = False

    def is_exhausted(self) -> bool:
        return False

    # -- command production --------------------------------------------------
    def poll(self) -> LeaderCommand:
        raise NotImplementedError

    def command_space(self) -> str:
        """"joint" or "eef"."""
        raise NotImplementedError

    # -- feedback delivery ----------------------------------------------------
    def apply_feedback(self, torques) -> None:
        self.last_feedback = torques

    def joint_state(self) -> dict | None:
        """Current per-leader-limb joint vectors, when the device has joints."""
        return None

    def base_joint_state(self) -> dict | None:
        return None

    def gripper_state(self) -> dict:
        return {}

    def feedback_jacobian(self, leader_limb: str) -> np.ndarray | None:
        """Jacobian projecting task-space feedback into the device's input space."""
        return None


class VirtualPuppeteerLeader(LeaderHandle):
    """Simulated puppeteer: joint states from scripted profiles or setters.

    command space "auto" resolves to joint-space when every mapped pair has
    equal DoF counts, else to delta poses computed from the leader's own FK.
    """

    def __init__(self, model: robot_model.RobotModel, mapping: LimbMapping,
                 command_space: str = "auto", gesture_cfg: GestureConfig | None = None,
                 joint_script=None, gripper_script=None, gripper_range=None,
                 clock=time.monotonic):
        super().__init__(mapping, clock)
        self.model = model
        self._space = command_space
        self.gesture_cfg = gesture_cfg or GestureConfig()
        self._start_detector = GripGestureDetector(self.gesture_cfg)
        self._end_detector = GripGestureDetector(self.gesture_cfg)
        self.joint_script = joint_script
        self.gripper_script = gripper_script
        self.gripper_range = gripper_range or {}
        self._t_ref = self.clock()
        self._q = {name: model.base_pose[name].copy() for name in mapping.leader_limbs}
        self._grip_raw = {name: 0.0 for name in mapping.leader_limbs}
        self._t0: dict = {}
        self._start_pending = False
        self._end_pending = False
        self._disconnected = False

    def bind_follower(self, follower_model: robot_model.RobotModel) -> None:
        if self._space != "auto":
            return
        same = all(
            self.model.limb(l).num_dof == follower_model.limb(f).num_dof
            for l, f in self.mapping.pairs.items())
        self._space = "joint" if same else "eef"

    def command_space(self) -> str:
        if self._space == "auto":
            raise LeaderError("puppeteer not bound to a follower yet")
        return self._space

    # -- device input -------------------------------------------------------
    def set_joints(self, leader_limb: str, q) -> None:
        chain = self.model.limb(leader_limb)
        self._q[leader_limb] = chain.clamp(np.asarray(q, dtype=float))

    def set_gripper(self, leader_limb: str, value: float) -> None:
        self._grip_raw[leader_limb] = float(value)

    def request_start(self) -> None:
        self._start_pending = True

    def request_end(self) -> None:
        self._end_pending = True

    def disconnect(self) -> None:
        self._disconnected = True

    def _sample(self, now: float) -> None:
        t = now - self._t_ref
        if self.joint_script is not None:
            for limb, q in self.joint_script(t).items():
                self.set_joints(limb, q)
        if self.gripper_script is not None:
            for limb, g in self.gripper_script(t).items():
                self._grip_raw[limb] = float(g)

    def _gripper_normalized(self) -> dict:
        out = {}
        for limb, raw in self._grip_raw.items():
            lo, hi = self.gripper_range.get(limb, (0.0, 1.0))
            out[limb] = float(np.clip((raw - lo) / (hi - lo), 0.0, 1.0))
        return out

    def joint_state(self) -> dict:
        return {k: v.copy() for k, v in self._q.items()}

    def base_joint_state(self) -> dict:
        return {k: self.model.base_pose[k].copy() for k in self.mapping.leader_limbs}

    def gripper_state(self) -> dict:
        return self._gripper_normalized()

    def feedback_jacobian(self, leader_limb: str) -> np.ndarray:
        return robot_model.geometric_jacobian(
            self.model.limb(leader_limb), self._q[leader_limb])

    # -- leader interface -----------------------------------------------------
    def start_signal_check(self) -> bool:
        now = self.clock()
        self._sample(now)
        if self._start_detector.update(self._gripper_normalized().values(), now):
            self._start_pending = True
        return self._start_pending

    def on_session_start(self) -> None:
        super().on_session_start()
        self._start_pending = False
        self._end_pending = False
        now = self.clock()
        self._sample(now)
        self._t0 = {limb: robot_model.forward_kinematics(self.model.limb(limb), q)
                    for limb, q in self._q.items()}
        # start gesture leaves grippers closed; require a release before an
        # end gesture can arm
        self._end_detector = GripGestureDetector(self.gesture_cfg)
        self._end_detector._armed = False

    def poll(self) -> LeaderCommand:
        if self._disconnected:
            raise LeaderDisconnectedError(self._last_command)
        now = self.clock()
        self._sample(now)
        grippers = self._gripper_normalized()
        if self.active and self._end_detector.update(grippers.values(), now):
            self._end_pending = True

        payloads = {}
        gripper = {}
        for leader_limb, follower_limb in self.mapping.pairs.items():
            if self.command_space() == "joint":
                payloads[follower_limb] = JointPositions(self._q[leader_limb].copy())
            else:
                chain = self.model.limb(leader_limb)
                tt = robot_model.forward_kinematics(chain, self._q[leader_limb])
                t0 = self._t0.get(leader_limb, tt)
                payloads[follower_limb] = EefDelta(
                    compute_delta(t0, tt, self.mapping.scale[leader_limb]))
            gripper[follower_limb] = grippers[leader_limb]

        cmd = LeaderCommand(
            payloads=payloads, gripper=gripper,
            start_requested=self._start_pending, end_requested=self._end_pending,
            timestamp=now)
        self._last_command = cmd
        return cmd


class ConsoleLeader(LeaderHandle):
    """Pose-space leader fed by the operator console over the service.

    The virtual device pose starts at identity; drags accumulate as
    world-frame increments. Start/end arrive as explicit events.
    """

    def __init__(self, mapping: LimbMapping, clock=time.monotonic):
        super().__init__(mapping, clock)
        self._acc = {limb: Pose.identity() for limb in mapping.leader_limbs}
        self._grip = {limb: 0.0 for limb in mapping.leader_limbs}
        self._t0 = {limb: Pose.identity() for limb in mapping.leader_limbs}
        self._start_pending = False
        self._end_pending = False

    def command_space(self) -> str:
        return "eef"

    def push_drag(self, leader_limb: str, translation=None, rotation_quat=None,
                  gripper=None) -> None:
        if leader_limb not in self._acc:
            raise KeyError(f"input for unmapped limb '{leader_limb}'")
        pose = self._acc[leader_limb]
        r, t = pose.rotation, pose.translation
        if translation is not None:
            t = t + np.asarray(translation, dtype=float)
        if rotation_quat is not None:
            r = se3.rotation_from_quat(np.asarray(rotation_quat, dtype=float)) @ r
        self._acc[leader_limb] = Pose(r, t)
        if gripper is not None:
            self._grip[leader_limb] = float(np.clip(gripper, 0.0, 1.0))

    def request_start(self) -> None:
        self._start_pending = True

    def request_end(self) -> None:
        self._end_pending = True

    def start_signal_check(self) -> bool:
        return self._start_pending

    def on_session_start(self) -> None:
        super().on_session_start()
        self._start_pending = False
        self._end_pending = False
        self._t0 = dict(self._acc)

    def gripper_state(self) -> dict:
        return dict(self._grip)

    def feedback_jacobian(self, leader_limb: str) -> np.ndarray:
        # No joints to project onto; feedback is rendered in twist space.
        return np.eye(6)

    def poll(self) -> LeaderCommand:
        now = self.clock()
        payloads = {}
        gripper = {}
        for leader_limb, follower_limb in self.mapping.pairs.items():
            payloads[follower_limb] = EefDelta(compute_delta(
                self._t0[leader_limb], self._acc[leader_limb],
                self.mapping.scale[leader_limb]))
            gripper[follower_limb] = self._grip[leader_limb]
        cmd = LeaderCommand(
            payloads=payloads, gripper=gripper,
            start_requested=self._start_pending, end_requested=self._end_pending,
            timestamp=now)
        self._last_command = cmd
        return cmd


class TrajectoryLeader(LeaderHandle):
    """Replays a recorded command stream by timestamp against the session clock.

    Sample due-times are rebased to active-loop start, so the approach phase
    cannot eat into the stream. The final sample carries the end signal.
    """

    def __init__(self, samples: list, payload_kind: str, mapping: LimbMapping,
                 clock=time.monotonic):
        super().__init__(mapping, clock)
        self.samples = samples
        self.payload_kind = payload_kind
        self._cursor = 0
        self._run_ref = None
        self._exhausted = False

    def command_space(self) -> str:
        return self.payload_kind

    def start_signal_check(self) -> bool:
        return not self._exhausted

    def is_exhausted(self) -> bool:
        return self._exhausted

    def on_session_start(self) -> None:
        super().on_session_start()
        self._cursor = 0
        self._run_ref = None

    def on_running_start(self) -> None:
        self._run_ref = self.clock()

    def _payload_for(self, sample_payloads: dict) -> dict:
        out = {}
        for leader_limb, follower_limb in self.mapping.pairs.items():
            payload = sample_payloads[leader_limb]
            s = self.mapping.scale[leader_limb]
            if isinstance(payload, EefDelta) and s != 1.0:
                d = payload.scaled_delta
                payload = EefDelta(Pose(d.rotation, s * d.translation))
            out[follower_limb] = payload
        return out

    def poll(self) -> LeaderCommand:
        now = self.clock()
        t_first = self.samples[0][0]
        if self._run_ref is None:
            idx = 0
        else:
            elapsed = now - self._run_ref
            while (self._cursor + 1 < len(self.samples)
                   and self.samples[self._cursor + 1][0] - t_first <= elapsed + 1e-9):
                self._cursor += 1
            idx = self._cursor
        t, payloads, gripper = self.samples[idx]
        at_end = idx == len(self.samples) - 1 and self._run_ref is not None
        if at_end:
            self._exhausted = True
        cmd = LeaderCommand(
            payloads=self._payload_for(payloads),
            gripper={self.mapping.pairs[k]: gripper.get(k, 0.0)
                     for k in self.mapping.pairs},
            start_requested=False, end_requested=at_end, timestamp=now)
        self._last_command = cmd
        return cmd


def load_offline_trajectory(path, mapping: LimbMapping | None = None,
                            clock=time.monotonic) -> TrajectoryLeader:
    """Build a replay leader from a JSONL recording written by this engine."""
    header, records = read_recording(path)
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unknown schema version {version!r} (expected {SCHEMA_VERSION})")
    if not records:
        raise ValueError(f"{path}: trajectory has no samples")
    payload_kind = header.get("payload_kind")
    if payload_kind not in ("joint", "eef"):
        raise ValueError(f"header payload_kind {payload_kind!r} must be 'joint' or 'eef'")
    file_limbs = list(header.get("limbs", []))
    if not file_limbs:
        raise ValueError("header lists no limbs")

    if mapping is None:
        mapping = LimbMapping(pairs={limb: limb for limb in file_limbs})
    missing = set(file_limbs) - set(mapping.leader_limbs)
    extra = set(mapping.leader_limbs) - set(file_limbs)
    if missing or extra:
        raise ValueError(
            f"trajectory limbs {file_limbs} do not match mapping limbs "
            f"{mapping.leader_limbs}")

    samples = []
    last_t = None
    for i, rec in enumerate(records):
        if "timestamp" not in rec or "leader" not in rec:
            raise ValueError(f"record {i} missing timestamp or leader fields")
        t = float(rec["timestamp"])
        if last_t is not None and t <= last_t:
            raise ValueError(f"non-monotonic timestamp at index {i}")
        last_t = t
        payloads = {}
        gripper = {}
        for limb in file_limbs:
            entry = rec["leader"].get(limb)
            if entry is None:
                raise ValueError(f"record {i} missing limb '{limb}'")
            payload = serialize.payload_from_wire(entry["payload"])
            if payload.kind != payload_kind:
                raise ValueError(
                    f"record {i} limb '{limb}' payload kind {payload.kind!r} "
                    f"does not match header {payload_kind!r}")
            payloads[limb] = payload
            gripper[limb] = float(entry.get("gripper", 0.0))
        samples.append((t, payloads, gripper))

    return TrajectoryLeader(samples, payload_kind, mapping, clock)
