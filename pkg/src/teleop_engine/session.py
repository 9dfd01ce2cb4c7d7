"""Teleoperation session: initialization, start-gesture wait, mirrored-pose
approach, the paced control loop, reset cycles and step recording.

The session loop is the single owner of the pipeline and the follower. Leader
producers, the feedback thread and the service broadcaster couple to it only
through latest-value mailboxes. A gym-like observe()/act() pair is exposed for
programmatic stepping.
"""

from __future__ import annotations

import enum
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import serialize
from .feedback import FeedbackLoop
from .follower import ApproachCollisionError, KinematicFollower
from .leaders import LeaderDisconnectedError
from .mailbox import LatestValueMailbox
from .pipeline import ConfigurationError, TeleopPipeline
from .recording import StepRecorder

logger = logging.getLogger(__name__)


class SessionState(enum.Enum):
    INITIALIZING = "Initializing"
    AT_BASE_POSE = "AtBasePose"
    WAITING_FOR_START = "WaitingForStart"
    APPROACHING = "Approaching"
    RUNNING = "Running"
    RESETTING = "Resetting"
    SHUTDOWN = "Shutdown"


# Shutdown is reachable from everywhere; Approaching falls back to
# WaitingForStart when the approach path would collide.
LEGAL_TRANSITIONS = {
    SessionState.INITIALIZING: {SessionState.AT_BASE_POSE, SessionState.SHUTDOWN},
    SessionState.AT_BASE_POSE: {SessionState.WAITING_FOR_START, SessionState.SHUTDOWN},
    SessionState.WAITING_FOR_START: {SessionState.APPROACHING, SessionState.SHUTDOWN},
    SessionState.APPROACHING: {SessionState.RUNNING, SessionState.WAITING_FOR_START,
                               SessionState.SHUTDOWN},
    SessionState.RUNNING: {SessionState.RESETTING, SessionState.SHUTDOWN},
    SessionState.RESETTING: {SessionState.WAITING_FOR_START, SessionState.SHUTDOWN},
    SessionState.SHUTDOWN: set(),
}


class IllegalTransitionError(Exception):
    pass


@dataclass
class SessionConfig:
    cfg_leader: str
    cfg_follower: str
    cfg_env: str
    rate: float | None = None  # overrides the env config when set
    record_path: str | None = None
    record_fields: list | None = None


class TeleopSession:
    def __init__(self, leader, model, pipeline: TeleopPipeline,
                 follower: KinematicFollower, feedback_cfg=None,
                 recorder: StepRecorder | None = None, rate: float = 50.0,
                 approach_duration: float = 1.5, clock=time.monotonic,
                 sleep_fn=time.sleep, warnings=None):
        self.leader = leader
        self.model = model
        self.pipeline = pipeline
        self.follower = follower
        self.recorder = recorder
        self.rate = rate
        self.dt = 1.0 / rate
        self.approach_duration = approach_duration
        self.clock = clock
        self.sleep = sleep_fn
        self.warnings = list(warnings or [])

        self.control_box = LatestValueMailbox()
        self.state_box = LatestValueMailbox()
        self.feedback_box = LatestValueMailbox()

        self._state = SessionState.INITIALIZING
        self._state_lock = threading.Lock()
        self._event_listeners: list = []
        self._shutdown = threading.Event()

        self.feedback_loop = None
        if feedback_cfg is not None:
            self.feedback_loop = FeedbackLoop(
                leader, self.control_box, self.state_box, feedback_cfg,
                loop_period=self.dt, publish_box=self.feedback_box, clock=clock)

        self._session_t0 = 0.0
        self._prev_cmd: dict = {}
        self._last_timestamp = None
        self.sessions_completed = 0
        self.records_written = 0
        self.tick_periods: list = []
        self.tick_compute: list = []

        self.pipeline.validate_leader(leader)
        self.state_box.put(self.follower.state())

    # -- state machine -------------------------------------------------------
    @property
    def state(self) -> SessionState:
        with self._state_lock:
            return self._state

    def _set_state(self, new: SessionState, info: str = "") -> None:
        with self._state_lock:
            old = self._state
            if new not in LEGAL_TRANSITIONS[old]:
                raise IllegalTransitionError(f"{old.value} -> {new.value}")
            self._state = new
        if self.recorder is not None:
            self.recorder.flush()
        for listener in list(self._event_listeners):
            try:
                listener(old, new, info)
            except Exception:
                logger.exception("session event listener failed")

    def add_event_listener(self, fn) -> None:
        """fn(old_state, new_state, info), called from the session thread."""
        self._event_listeners.append(fn)

    def stop(self) -> None:
        self._shutdown.set()

    # -- gym-like stepper ------------------------------------------------------
    def observe(self) -> tuple:
        """(session state, freshest follower state)."""
        return self.state, self.state_box.get() or self.follower.state()

    def act(self, cmd) -> tuple:
        """Run one pipeline pass for `cmd`: interpret, filter, step, record.

        Returns (ControlSignal, FollowerState). This is the only path by which
        joint targets reach the follower; the safety filter cannot be bypassed.
        """
        now = self.clock() - self._session_t0
        state = self.follower.state()
        signal = self.pipeline.process(cmd, state, self._prev_cmd, timestamp=now)
        new_state = self.follower.step(signal, self.dt)
        self._prev_cmd = signal.q_cmd
        self.control_box.put(signal)
        self.state_box.put(new_state)
        self._record_step(now, cmd, signal, new_state)
        return signal, new_state

    # -- recording -------------------------------------------------------------
    def _recording_header(self) -> dict:
        return {
            "limbs": list(self.leader.mapping.follower_limbs),
            "joint_names": {c.name: c.joint_names for c in self.model.limbs},
            "payload_kind": self.leader.command_space(),
            "rate": self.rate,
            "session_index": self.sessions_completed + 1,
        }

    def _record_step(self, now: float, cmd, signal, state) -> None:
        if self.recorder is None or not self.recorder.enabled:
            return
        if self._last_timestamp is not None and now <= self._last_timestamp:
            # Clock did not advance (can happen with coarse fake clocks);
            # recording timestamps must stay strictly increasing.
            now = self._last_timestamp + 1e-9
        self._last_timestamp = now
        record = {
            "timestamp": now,
            "leader": {
                limb: {"payload": serialize.payload_to_wire(p),
                       "gripper": float(cmd.gripper.get(limb, 0.0))}
                for limb, p in cmd.payloads.items()},
            "q_cmd": {k: serialize.vector_to_wire(v) for k, v in signal.q_cmd.items()},
            "q_actual": {k: serialize.vector_to_wire(v) for k, v in state.q_actual.items()},
            "gripper_cmd": {k: float(v) for k, v in signal.gripper_cmd.items()},
            "gripper_actual": {k: float(v) for k, v in state.gripper_actual.items()},
            "eef_cmd": {k: serialize.pose_to_wire(v) for k, v in signal.target_pose.items()},
            "eef_actual": {k: serialize.pose_to_wire(v) for k, v in state.eef_actual.items()},
            "flags": signal.flags,
        }
        fb = self.feedback_box.get()
        if fb is not None:
            record["feedback"] = {
                "bias": {k: serialize.vector_to_wire(v) for k, v in fb.bias.items()},
                "tracking": {k: serialize.vector_to_wire(v) for k, v in fb.tracking.items()},
                "gripper": {k: float(v) for k, v in fb.gripper.items()},
            }
        self.recorder.write(record)
        self.records_written += 1

    # -- workflow phases -------------------------------------------------------
    def approach_mirror(self, cmd) -> None:
        """Interpret the first command and move smoothly to the mirrored pose."""
        state = self.follower.state()
        targets, _poses = self.pipeline.interpret(cmd, state)
        results = self.pipeline.last_ik_results
        for limb, result in results.items():
            if not result.converged:
                logger.warning(
                    "approach target for limb '%s' unreachable; best-effort "
                    "residual %.4f m", limb, result.residual_position)
        self.follower.move_to(
            targets, self.approach_duration, dt=self.dt,
            on_step=self.state_box.put,
            sleep_fn=self.sleep if self._paced_moves else None)
        self._prev_cmd = {k: v.copy() for k, v in
                          self.follower.state().q_actual.items()}

    @property
    def _paced_moves(self) -> bool:
        return self.sleep is time.sleep

    def _move_to_base(self) -> None:
        base = {k: v.copy() for k, v in self.model.base_pose.items()}
        try:
            self.follower.move_to(base, self.approach_duration, dt=self.dt,
                                  on_step=self.state_box.put,
                                  sleep_fn=self.sleep if self._paced_moves else None)
        except ApproachCollisionError:
            logger.warning("collision predicted on the way to base pose; "
                           "retrying without the collision gate")
            self.follower.move_to(base, self.approach_duration, dt=self.dt,
                                  collision_check=False)
        self.state_box.put(self.follower.state())

    def _begin_session(self) -> bool:
        """Start signal accepted: capture references and approach. True on success."""
        self.leader.on_session_start()
        self._session_t0 = self.clock()
        self._last_timestamp = None
        self.pipeline.capture_session_start(self.follower.state())
        self._set_state(SessionState.APPROACHING)
        try:
            cmd = self.leader.poll()
            self.approach_mirror(cmd)
        except ApproachCollisionError as exc:
            logger.warning("approach aborted: %s", exc)
            self.leader.on_session_end()
            self._set_state(SessionState.WAITING_FOR_START, info="approach collision")
            return False
        except LeaderDisconnectedError:
            self.leader.on_session_end()
            self._set_state(SessionState.WAITING_FOR_START, info="leader disconnected")
            return False
        self.leader.on_running_start()
        if self.recorder is not None:
            self.recorder.start_segment(self._recording_header())
        self._set_state(SessionState.RUNNING)
        return True

    def _end_session(self, info: str = "") -> None:
        self._set_state(SessionState.RESETTING, info=info)
        if self.recorder is not None:
            self.recorder.close_segment()
        self._move_to_base()
        self.leader.on_session_end()
        self.sessions_completed += 1
        self._set_state(SessionState.WAITING_FOR_START)

    # -- main loop ---------------------------------------------------------------
    def run(self, max_duration: float | None = None,
            max_sessions: int | None = None) -> int:
        """Run the full workflow until shutdown. Returns sessions completed."""
        deadline = None if max_duration is None else self.clock() + max_duration
        if self.feedback_loop is not None:
            self.feedback_loop.start()
        try:
            self._set_state(SessionState.AT_BASE_POSE)
            self._move_to_base()
            self._set_state(SessionState.WAITING_FOR_START)

            next_tick = self.clock()
            while not self._shutdown.is_set():
                if deadline is not None and self.clock() >= deadline:
                    break
                state = self.state
                if state == SessionState.WAITING_FOR_START:
                    if max_sessions is not None and self.sessions_completed >= max_sessions:
                        break
                    if self.leader.is_exhausted():
                        break
                    if self.leader.start_signal_check():
                        if self._begin_session():
                            next_tick = self.clock()
                        continue
                    self.state_box.put(self.follower.state())
                    self.sleep(self.dt)
                elif state == SessionState.RUNNING:
                    tick_start = self.clock()
                    compute_start = time.perf_counter()
                    try:
                        cmd = self.leader.poll()
                    except LeaderDisconnectedError as exc:
                        if exc.last_command is not None:
                            self.act(exc.last_command.restamped(tick_start))
                        self._end_session(info="leader disconnected")
                        continue
                    self.act(cmd)
                    self.tick_compute.append(time.perf_counter() - compute_start)
                    self.tick_periods.append(tick_start)
                    if cmd.end_requested:
                        self._end_session()
                        continue
                    next_tick += self.dt
                    delay = next_tick - self.clock()
                    if delay > 0:
                        self.sleep(delay)
                    else:
                        next_tick = self.clock()
                else:  # pragma: no cover - defensive
                    self.sleep(self.dt)
        finally:
            if self.recorder is not None:
                self.recorder.close_segment()
            if self.feedback_loop is not None:
                self.feedback_loop.stop()
            if self.state != SessionState.SHUTDOWN:
                self._set_state(SessionState.SHUTDOWN)
                self._move_to_base()
            if self.recorder is not None:
                self.recorder.close()
        return self.sessions_completed

    # -- construction ------------------------------------------------------------
    @staticmethod
    def from_configs(leader_cfg: config_mod.LeaderConfig,
                     follower_cfg: config_mod.FollowerConfig,
                     env_cfg: config_mod.EnvConfig,
                     record_path=None, record_fields=None,
                     clock=time.monotonic, sleep_fn=time.sleep,
                     rate: float | None = None) -> "TeleopSession":
        rate = rate or env_cfg.rate
        model, warnings = config_mod.build_follower_model(follower_cfg)
        safety = config_mod.build_safety(follower_cfg, model, rate)
        ik_configs = config_mod.build_ik_configs(follower_cfg, model)
        pipeline = TeleopPipeline(model, ik_configs, safety)
        follower = KinematicFollower(
            model, safety,
            actuator_velocity_scale=follower_cfg.actuator_velocity_scale,
            actuator_velocity_limits=follower_cfg.actuator_velocity_limits,
            gripper_time_constant=follower_cfg.gripper_time_constant,
            clock=clock)
        leader = config_mod.build_leader(leader_cfg, clock)
        if hasattr(leader, "bind_follower"):
            leader.bind_follower(model)
        recorder = None
        if record_path is not None:
            recorder = StepRecorder(record_path, fields=record_fields)
        return TeleopSession(
            leader, model, pipeline, follower,
            feedback_cfg=leader_cfg.feedback, recorder=recorder, rate=rate,
            approach_duration=env_cfg.approach_duration, clock=clock,
            sleep_fn=sleep_fn, warnings=warnings)


def run_session(cfg: SessionConfig, clock=time.monotonic, sleep_fn=time.sleep,
                max_duration: float | None = None,
                max_sessions: int | None = None) -> int:
    """Load the config triplet, run the workflow, return sessions completed.

    Config inconsistencies surface here, before the loop starts.
    """
    leader_cfg = config_mod.load_leader_config(cfg.cfg_leader)
    follower_cfg = config_mod.load_follower_config(cfg.cfg_follower)
    env_cfg = config_mod.load_env_config(cfg.cfg_env)
    session = TeleopSession.from_configs(
        leader_cfg, follower_cfg, env_cfg, record_path=cfg.record_path,
        record_fields=cfg.record_fields, clock=clock, sleep_fn=sleep_fn,
        rate=cfg.rate)

    server = None
    if env_cfg.service_enabled:
        from . import service
        server = service.serve(EngineHandle(session),
                               host=env_cfg.service_host,
                               port=env_cfg.service_port,
                               state_rate=env_cfg.service_state_rate,
                               static_dir=env_cfg.service_static_dir)
    try:
        return session.run(max_duration=max_duration, max_sessions=max_sessions)
    finally:
        if server is not None:
            server.stop()


class EngineHandle:
    """Read-mostly view of a session for the network service."""

    def __init__(self, session: TeleopSession):
        self.session = session

    @property
    def model(self):
        return self.session.model

    @property
    def rate(self) -> float:
        return self.session.rate

    @property
    def state_box(self):
        return self.session.state_box

    @property
    def control_box(self):
        return self.session.control_box

    @property
    def feedback_box(self):
        return self.session.feedback_box

    def session_state(self) -> str:
        return self.session.state.value

    def add_event_listener(self, fn) -> None:
        self.session.add_event_listener(fn)

    def console_leader(self):
        from .leaders import ConsoleLeader
        return self.session.leader if isinstance(self.session.leader, ConsoleLeader) else None
