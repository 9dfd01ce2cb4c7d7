"""Network boundary: JSON-over-WebSocket state streaming plus console-leader
input. One authoritative engine; clients are thin and all safety stays
server-side.

Protocol (documented with examples in PROTOCOL.md): every frame is
{"kind": ..., "seq": ..., "payload": {...}} with seq strictly increasing per
connection per direction. The first server frame is always model_info.
State updates broadcast at a fixed rate with latest-wins semantics; a slow
client drops frames, it never backpressures the engine.
"""

from __future__ import annotations

import asyncio
import collections
import json
import logging
import threading
from dataclasses import dataclass

import numpy as np
import uvicorn
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import robot_model, serialize

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = ("state_update", "leader_input", "session_event", "feedback_update",
         "model_info", "error")


@dataclass(frozen=True)
class WireMessage:
    kind: str
    seq: int
    payload: dict

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")
        if self.seq < 0:
            raise ValueError("seq must be >= 0")

    def encode(self) -> str:
        return json.dumps({"kind": self.kind, "seq": self.seq, "payload": self.payload})

    @staticmethod
    def decode(text: str) -> "WireMessage":
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise ValueError("message must be a JSON object")
        for key in ("kind", "seq", "payload"):
            if key not in obj:
                raise ValueError(f"message missing '{key}'")
        return WireMessage(kind=obj["kind"], seq=int(obj["seq"]), payload=obj["payload"])


def model_info_payload(handle) -> dict:
    limbs = []
    for chain in handle.model.limbs:
        limbs.append({
            "name": chain.name,
            "joint_names": chain.joint_names,
            "limits_lower": serialize.vector_to_wire(chain.limits_lower()),
            "limits_upper": serialize.vector_to_wire(chain.limits_upper()),
            "velocity_limits": serialize.vector_to_wire(chain.velocity_limits()),
            "has_gripper": chain.gripper_joint is not None,
            "spheres": [{"joint_index": s.joint_index,
                         "center": serialize.vector_to_wire(s.center),
                         "radius": s.radius}
                        for s in chain.collision_spheres],
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "rate": handle.rate,
        "limbs": limbs,
        "session_state": handle.session_state(),
    }


def state_update_payload(handle, state, control) -> dict:
    limbs = {}
    for chain in handle.model.limbs:
        name = chain.name
        q = state.q_actual[name]
        frames = robot_model.frame_poses(chain, q)
        entry = {
            "q_actual": serialize.vector_to_wire(q),
            "gripper_actual": float(state.gripper_actual.get(name, 0.0)),
            "eef_actual": serialize.pose_to_wire(state.eef_actual[name]),
            "frames": [serialize.vector_to_wire(f.translation) for f in frames],
            "sphere_centers": [serialize.vector_to_wire(c)
                               for c, _r in robot_model.sphere_centers_world(chain, q)],
        }
        if control is not None and name in control.q_cmd:
            entry["q_cmd"] = serialize.vector_to_wire(control.q_cmd[name])
            entry["flags"] = control.flags.get(name, {})
            if name in control.target_pose:
                entry["eef_cmd"] = serialize.pose_to_wire(control.target_pose[name])
            if name in control.gripper_cmd:
                entry["gripper_cmd"] = float(control.gripper_cmd[name])
        limbs[name] = entry
    return {
        "session_state": handle.session_state(),
        "t": state.timestamp,
        "limbs": limbs,
    }


def feedback_update_payload(torques) -> dict:
    return {
        "t": torques.timestamp,
        "limbs": {
            limb: {
                "bias": serialize.vector_to_wire(torques.bias.get(limb, [])),
                "tracking": serialize.vector_to_wire(torques.tracking.get(limb, [])),
                "gripper": float(torques.gripper.get(limb, 0.0)),
            }
            for limb in set(torques.bias) | set(torques.tracking) | set(torques.gripper)
        },
    }


def handle_leader_input(handle, payload: dict) -> None:
    """Apply a console drag or start/end event to the session's console leader.

    Raises ValueError with an operator-readable message on any bad input; the
    caller turns that into an error frame for that client only.
    """
    console = handle.console_leader()
    if console is None:
        raise ValueError("console leader not configured for this session")
    event = payload.get("event")
    if event is not None:
        if event == "start":
            console.request_start()
        elif event == "end":
            console.request_end()
        else:
            raise ValueError(f"unknown event {event!r}")
        return
    limb = payload.get("limb")
    if limb is None:
        raise ValueError("leader_input needs a 'limb' or an 'event'")
    try:
        console.push_drag(
            limb,
            translation=payload.get("delta_translation"),
            rotation_quat=payload.get("delta_rotation_quat"),
            gripper=payload.get("gripper"))
    except KeyError as exc:
        raise ValueError(str(exc.args[0])) from exc


class _EventRing:
    """Bounded transition log; the broadcaster drains it per connection."""

    def __init__(self, maxlen: int = 128):
        self.items = collections.deque(maxlen=maxlen)
        self._next_id = 0
        self._lock = threading.Lock()

    def push(self, old, new, info) -> None:
        with self._lock:
            self.items.append((self._next_id, old.value, new.value, info))
            self._next_id += 1

    def since(self, last_id: int) -> list:
        with self._lock:
            return [item for item in self.items if item[0] > last_id]


def build_app(handle, state_rate: float = 30.0, static_dir=None) -> FastAPI:
    app = FastAPI()
    events = _EventRing()
    handle.add_event_listener(events.push)

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        seq = 0

        async def send(kind: str, payload: dict):
            nonlocal seq
            await ws.send_text(WireMessage(kind, seq, payload).encode())
            seq += 1

        await send("model_info", model_info_payload(handle))

        stop = asyncio.Event()

        async def broadcaster():
            state_period = 1.0 / state_rate
            poll_period = min(state_period, 1.0 / 60.0)
            last_state_sent = 0.0
            last_fb_version = 0
            last_event_id = -1
            loop = asyncio.get_running_loop()
            while not stop.is_set():
                for ev_id, old, new, info in events.since(last_event_id):
                    last_event_id = ev_id
                    await send("session_event", {"old": old, "new": new, "info": info})
                now = loop.time()
                if now - last_state_sent >= state_period:
                    state = handle.state_box.get()
                    if state is not None:
                        control = handle.control_box.get()
                        await send("state_update",
                                   state_update_payload(handle, state, control))
                        last_state_sent = now
                fb_version, fb = handle.feedback_box.get_versioned()
                if fb is not None and fb_version != last_fb_version:
                    last_fb_version = fb_version
                    await send("feedback_update", feedback_update_payload(fb))
                await asyncio.sleep(poll_period)

        task = asyncio.create_task(broadcaster())
        last_client_seq = -1
        try:
            while True:
                text = await ws.receive_text()
                try:
                    msg = WireMessage.decode(text)
                except (ValueError, json.JSONDecodeError) as exc:
                    await send("error", {"message": f"malformed message: {exc}"})
                    continue
                if msg.seq <= last_client_seq:
                    await send("error", {
                        "message": f"seq {msg.seq} not increasing "
                                   f"(last {last_client_seq})"})
                    continue
                last_client_seq = msg.seq
                if msg.kind != "leader_input":
                    await send("error", {"message": f"unsupported kind {msg.kind!r}"})
                    continue
                try:
                    handle_leader_input(handle, msg.payload)
                except ValueError as exc:
                    await send("error", {"message": str(exc)})
        except WebSocketDisconnect:
            pass
        finally:
            stop.set()
            task.cancel()
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app


class ServiceServer:
    """uvicorn in a daemon thread; stop() shuts it down cooperatively."""

    def __init__(self, app: FastAPI, host: str, port: int):
        self.config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        self.server = uvicorn.Server(self.config)
        self.thread = threading.Thread(target=self.server.run, name="teleop-service",
                                       daemon=True)

    def start(self) -> "ServiceServer":
        self.thread.start()
        import time as _time
        for _ in range(200):
            if self.server.started:
                break
            _time.sleep(0.01)
        else:
            raise RuntimeError("service failed to start (bind error?)")
        return self

    def stop(self) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=5.0)


def serve(handle, host: str = "127.0.0.1", port: int = 8700,
          state_rate: float = 30.0, static_dir=None) -> ServiceServer:
    app = build_app(handle, state_rate=state_rate, static_dir=static_dir)
    return ServiceServer(app, host, port).start()
