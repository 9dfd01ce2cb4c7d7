import json

import numpy as np
import pytest

from teleop_engine import presets, robot_model, se3, serialize
from teleop_engine.clocks import FakeClock
from teleop_engine.commands import (EefDelta, JointPositions, LimbMapping,
                                    compute_delta)
from teleop_engine.leaders import (ConsoleLeader, GestureConfig,
                                   GripGestureDetector, LeaderDisconnectedError,
                                   VirtualPuppeteerLeader,
                                   load_offline_trajectory)
from teleop_engine.recording import StepRecorder

from conftest import random_pose


def identity_mapping(*limbs, scale=1.0):
    return LimbMapping(pairs={l: l for l in limbs},
                       scale={l: scale for l in limbs})


class TestComputeDelta:
    def test_same_pose_gives_identity(self, rng):
        for s in (0.5, 1.0, 3.0):
            t = random_pose(rng)
            d = compute_delta(t, t, s)
            assert np.abs(d.rotation - np.eye(3)).max() < 1e-9
            assert np.abs(d.translation).max() < 1e-9

    def test_unit_scale_is_relative_pose(self, rng):
        t0, tt = random_pose(rng), random_pose(rng)
        d = compute_delta(t0, tt, 1.0)
        rel = se3.compose(se3.inverse(t0), tt)
        assert np.abs(d.rotation - rel.rotation).max() < 1e-12
        assert np.abs(d.translation - rel.translation).max() < 1e-12

    def test_translation_scaled_rotation_not(self):
        t0 = se3.Pose.identity()
        tt = se3.Pose(np.eye(3), np.array([0.1, 0.0, 0.0]))
        d = compute_delta(t0, tt, 2.0)
        assert np.allclose(d.translation, [0.2, 0, 0])
        assert np.allclose(d.rotation, np.eye(3))

    def test_scale_linearity(self, rng):
        t0, tt = random_pose(rng), random_pose(rng)
        for s in (0.25, 1.0, 2.0):
            d1 = compute_delta(t0, tt, s)
            d2 = compute_delta(t0, tt, 2 * s)
            assert np.abs(d2.translation - 2 * d1.translation).max() < 1e-12
            assert np.abs(d2.rotation - d1.rotation).max() == 0.0

    def test_nonpositive_scale_rejected(self, rng):
        t = random_pose(rng)
        with pytest.raises(ValueError):
            compute_delta(t, t, 0.0)


class TestLimbMapping:
    def test_injective_required(self):
        with pytest.raises(ValueError, match="injective"):
            LimbMapping(pairs={"a": "x", "b": "x"})

    def test_positive_scale_required(self):
        with pytest.raises(ValueError, match="scale"):
            LimbMapping(pairs={"a": "x"}, scale={"a": -1.0})

    def test_from_config(self):
        m = LimbMapping.from_config([
            {"leader_limb": "a", "follower_limb": "x", "scale": 2.0},
            {"leader_limb": "b", "follower_limb": "y"}])
        assert m.pairs == {"a": "x", "b": "y"}
        assert m.scale == {"a": 2.0, "b": 1.0}


class TestGestures:
    def test_closed_long_enough_fires(self):
        det = GripGestureDetector(GestureConfig())
        t, fired = 0.0, False
        while t <= 0.6:
            fired = det.update([0.95, 0.97], t) or fired
            t += 0.05
        assert fired

    def test_closed_too_short_then_open(self):
        det = GripGestureDetector(GestureConfig())
        t, fired = 0.0, False
        while t <= 0.3:
            fired = det.update([0.95, 0.97], t) or fired
            t += 0.05
        fired = det.update([0.1, 0.1], 0.35) or fired
        fired = det.update([0.1, 0.1], 1.0) or fired
        assert not fired

    def test_rearm_requires_release(self):
        det = GripGestureDetector(GestureConfig())
        t = 0.0
        fired = 0
        while t <= 2.0:  # held closed the whole time: fires exactly once
            fired += det.update([1.0], t)
            t += 0.05
        assert fired == 1
        det.update([0.1], 2.1)  # release re-arms
        t = 2.2
        while t <= 3.0:
            fired += det.update([1.0], t)
            t += 0.05
        assert fired == 2


def make_puppeteer(arm="arm7", clock=None, **kwargs):
    clock = clock or FakeClock()
    model, _ = robot_model.parse_robot_description(
        presets.build_single_arm_urdf(arm),
        {"limbs": [{"name": "limb1", "base_link": "world",
                    "tip_link": "limb1_tool", "gripper_joint": "limb1_gripper"}],
         "base_pose": {"limb1": presets.ARM7_BASE_POSE if arm == "arm7"
                       else presets.ARM6_BASE_POSE}})
    leader = VirtualPuppeteerLeader(model, identity_mapping("limb1"),
                                    clock=clock.time, **kwargs)
    return leader, model, clock


class TestVirtualPuppeteer:
    def test_identical_chain_emits_joint_positions(self, arm7_model):
        leader, model, _ = make_puppeteer("arm7")
        leader.bind_follower(arm7_model)
        assert leader.command_space() == "joint"
        cmd = leader.poll()
        payload = cmd.payloads["limb1"]
        assert isinstance(payload, JointPositions)
        assert np.allclose(payload.q, presets.ARM7_BASE_POSE)

    def test_different_chain_emits_deltas_via_fk(self, arm7_model):
        leader, model, clock = make_puppeteer("arm6")
        leader.bind_follower(arm7_model)  # 6 DoF leader onto 7 DoF follower
        assert leader.command_space() == "eef"
        leader.on_session_start()
        chain = model.limb("limb1")
        q0 = np.array(presets.ARM6_BASE_POSE)
        q1 = q0 + np.array([0.2, 0, 0, 0, 0, 0])
        leader.set_joints("limb1", q1)
        cmd = leader.poll()
        payload = cmd.payloads["limb1"]
        assert isinstance(payload, EefDelta)
        expected = compute_delta(robot_model.forward_kinematics(chain, q0),
                                 robot_model.forward_kinematics(chain, q1), 1.0)
        assert np.abs(payload.scaled_delta.rotation - expected.rotation).max() < 1e-12
        assert np.abs(payload.scaled_delta.translation - expected.translation).max() < 1e-12

    def test_start_gesture_through_polling(self):
        leader, _, clock = make_puppeteer("arm7")
        assert not leader.start_signal_check()
        leader.set_gripper("limb1", 1.0)
        for _ in range(14):  # 0.7 s at 50 ms steps
            clock.advance(0.05)
            fired = leader.start_signal_check()
        assert fired

    def test_hold_last_payloads_identical(self, arm7_model):
        leader, _, clock = make_puppeteer("arm7")
        leader.bind_follower(arm7_model)
        cmds = []
        for _ in range(5):
            clock.advance(0.02)
            cmds.append(leader.poll())
        qs = [c.payloads["limb1"].q for c in cmds]
        for q in qs[1:]:
            assert (q == qs[0]).all()
        stamps = [c.timestamp for c in cmds]
        assert stamps == sorted(stamps) and stamps[0] != stamps[-1]

    def test_disconnect_carries_last_command(self, arm7_model):
        leader, _, clock = make_puppeteer("arm7")
        leader.bind_follower(arm7_model)
        last = leader.poll()
        leader.disconnect()
        with pytest.raises(LeaderDisconnectedError) as exc:
            leader.poll()
        assert exc.value.last_command is last


class TestConsoleLeader:
    def test_drag_passthrough(self):
        clock = FakeClock()
        leader = ConsoleLeader(identity_mapping("right"), clock=clock.time)
        leader.request_start()
        assert leader.start_signal_check()
        leader.on_session_start()
        leader.push_drag("right", translation=[0.05, 0, 0])
        cmd = leader.poll()
        d = cmd.payloads["right"].scaled_delta
        assert np.allclose(d.translation, [0.05, 0, 0])
        assert np.allclose(d.rotation, np.eye(3))

    def test_scale_applies_to_drags(self):
        leader = ConsoleLeader(identity_mapping("right", scale=2.0))
        leader.on_session_start()
        leader.push_drag("right", translation=[0.05, 0, 0])
        cmd = leader.poll()
        assert np.allclose(cmd.payloads["right"].scaled_delta.translation,
                           [0.1, 0, 0])

    def test_unmapped_limb_rejected(self):
        leader = ConsoleLeader(identity_mapping("right"))
        with pytest.raises(KeyError, match="unmapped"):
            leader.push_drag("left", translation=[0, 0, 0])

    def test_reference_reset_each_session(self):
        leader = ConsoleLeader(identity_mapping("right"))
        leader.on_session_start()
        leader.push_drag("right", translation=[0.3, 0, 0])
        leader.on_session_end()
        leader.on_session_start()  # new reference absorbs the old drag
        cmd = leader.poll()
        assert np.abs(cmd.payloads["right"].scaled_delta.translation).max() < 1e-12


def write_recording(path, timestamps, limbs=("a",), kind="eef", gripper=0.0):
    rec = StepRecorder(path)
    rec.start_segment({"limbs": list(limbs), "payload_kind": kind,
                       "joint_names": {}, "rate": 50.0})
    for t in timestamps:
        leader_field = {}
        for limb in limbs:
            if kind == "eef":
                payload = {"kind": "eef",
                           "delta": {"t": [t, 0.0, 0.0], "q": [0, 0, 0, 1]}}
            else:
                payload = {"kind": "joint", "q": [t, 0.0]}
            leader_field[limb] = {"payload": payload, "gripper": gripper}
        rec.write({"timestamp": t, "leader": leader_field})
    rec.close()


class TestTrajectoryLeader:
    def test_replay_against_clock(self, tmp_path):
        path = tmp_path / "traj.jsonl"
        write_recording(path, [0.02 * k for k in range(5)])
        clock = FakeClock()
        leader = load_offline_trajectory(path, clock=clock.time)
        assert leader.start_signal_check()
        leader.on_session_start()
        first = leader.poll()  # approach consumes the first sample
        assert np.allclose(first.payloads["a"].scaled_delta.translation[0], 0.0)
        leader.on_running_start()
        seen = []
        for _ in range(5):
            cmd = leader.poll()
            seen.append(cmd.payloads["a"].scaled_delta.translation[0])
            clock.advance(0.02)
        assert seen == [0.0, 0.02, 0.04, 0.06, 0.08]
        assert leader.is_exhausted()

    def test_end_signal_on_last_sample(self, tmp_path):
        path = tmp_path / "traj.jsonl"
        write_recording(path, [0.0, 0.02])
        clock = FakeClock()
        leader = load_offline_trajectory(path, clock=clock.time)
        leader.on_session_start()
        leader.poll()
        leader.on_running_start()
        assert not leader.poll().end_requested
        clock.advance(0.02)
        assert leader.poll().end_requested
        assert not leader.start_signal_check()

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(ValueError, match="empty"):
            load_offline_trajectory(path)

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "header.jsonl"
        rec = StepRecorder(path)
        rec.start_segment({"limbs": ["a"], "payload_kind": "eef",
                           "joint_names": {}, "rate": 50.0})
        rec.close()
        with pytest.raises(ValueError, match="no samples"):
            load_offline_trajectory(path)

    def test_unknown_schema_version(self, tmp_path):
        path = tmp_path / "schema.jsonl"
        write_recording(path, [0.0, 0.02])
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["schema_version"] = 99
        path.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
        with pytest.raises(ValueError, match="schema version"):
            load_offline_trajectory(path)

    def test_non_monotonic_timestamps_name_index(self, tmp_path):
        path = tmp_path / "mono.jsonl"
        lines = [json.dumps({"kind": "header", "schema_version": 1,
                             "limbs": ["a"], "payload_kind": "eef"})]
        for t in (0.0, 0.02, 0.01):
            lines.append(json.dumps({
                "timestamp": t,
                "leader": {"a": {"payload": {
                    "kind": "eef", "delta": {"t": [0, 0, 0], "q": [0, 0, 0, 1]}},
                    "gripper": 0.0}}}))
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="non-monotonic timestamp at index 2"):
            load_offline_trajectory(path)

    def test_limb_count_mismatch_at_load(self, tmp_path):
        path = tmp_path / "two.jsonl"
        write_recording(path, [0.0, 0.02], limbs=("a", "b"))
        with pytest.raises(ValueError, match="do not match"):
            load_offline_trajectory(path, mapping=identity_mapping("a"))

    def test_roundtrip_payload_equality(self, tmp_path, rng):
        # synthetic file -> leader -> re-serialize payload stream
        path = tmp_path / "round.jsonl"
        write_recording(path, [0.02 * k for k in range(10)])
        clock = FakeClock()
        leader = load_offline_trajectory(path, clock=clock.time)
        leader.on_session_start()
        leader.poll()
        leader.on_running_start()
        replayed = []
        for _ in range(10):
            cmd = leader.poll()
            replayed.append(serialize.payload_to_wire(cmd.payloads["a"]))
            clock.advance(0.02)
        original = [json.loads(line)["leader"]["a"]["payload"]
                    for line in path.read_text().splitlines()[1:]]
        assert replayed == original
