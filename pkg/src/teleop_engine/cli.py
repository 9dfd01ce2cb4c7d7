"""Command-line interface.

Subcommands:
  run             full teleoperation workflow from a config triplet
  replay          stream a recorded trajectory onto a follower
  validate-model  parse a robot description and report chains and warnings
  bench           control-step latency benchmark
  init-demo       write a ready-to-run demo config set
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import bench as bench_mod
from . import config as config_mod
from . import presets
from .robot_model import ModelError
from .session import SessionConfig, run_session


def _cmd_run(args) -> int:
    cfg = SessionConfig(
        cfg_leader=args.leader, cfg_follower=args.follower, cfg_env=args.env,
        rate=args.rate, record_path=args.record,
        record_fields=args.record_fields.split(",") if args.record_fields else None)
    sessions = run_session(cfg, max_duration=args.duration,
                           max_sessions=args.max_sessions)
    print(f"completed {sessions} session(s)")
    return 0


def _cmd_replay(args) -> int:
    follower_cfg = config_mod.load_follower_config(args.follower)
    env_cfg = (config_mod.load_env_config(args.env) if args.env
               else config_mod.env_config_from_dict(presets.env_config_dict()))
    model, _ = config_mod.build_follower_model(follower_cfg)
    leader_cfg = config_mod.LeaderConfig(
        type="trajectory",
        mapping=config_mod.LimbMapping(pairs={n: n for n in model.limb_names}),
        trajectory_path=args.recording)
    from .session import TeleopSession
    session = TeleopSession.from_configs(
        leader_cfg, follower_cfg, env_cfg, record_path=args.record,
        rate=args.rate)
    sessions = session.run(max_sessions=1)
    print(f"replayed {sessions} session(s), {session.records_written} steps recorded"
          if args.record else f"replayed {sessions} session(s)")
    return 0


def _cmd_validate_model(args) -> int:
    data = yaml.safe_load(Path(args.limbs).read_text())
    data["urdf"] = args.urdf
    data.pop("urdf_text", None)
    follower_cfg = config_mod.follower_config_from_dict(data, Path(args.urdf).parent)
    try:
        model, warnings = config_mod.build_follower_model(follower_cfg)
    except ModelError as exc:
        print(f"INVALID: {exc}", file=sys.stderr)
        return 1
    for chain in model.limbs:
        eef = None
        try:
            from . import robot_model
            eef = robot_model.forward_kinematics(chain, model.base_pose[chain.name])
        except Exception as exc:  # pragma: no cover - diagnostic path
            print(f"  FK failed: {exc}", file=sys.stderr)
            return 1
        spheres = len(chain.collision_spheres)
        print(f"limb '{chain.name}': {chain.num_dof} DoF, joints "
              f"{chain.joint_names}, gripper "
              f"{chain.gripper_joint.name if chain.gripper_joint else 'none'}, "
              f"{spheres} collision sphere(s)")
        print(f"  EEF at base pose: {eef.translation.round(4).tolist()}")
    if warnings:
        print(f"{len(warnings)} warning(s):")
        for w in warnings:
            print(f"  - {w}")
    print("OK")
    return 0


def _cmd_bench(args) -> int:
    limb_counts = [int(v) for v in args.limbs.split(",")]
    modes = args.mode.split(",")
    results = []
    for mode in modes:
        for n in limb_counts:
            results.append(bench_mod.run_bench(n, mode, steps=args.steps))
    print(bench_mod.format_table(results))
    if args.json:
        print(json.dumps(results))
    return 0


def _cmd_init_demo(args) -> int:
    out = Path(args.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "follower_dual_arm.urdf").write_text(presets.build_multi_arm_urdf(2))
    follower = presets.follower_config_dict(2)
    follower["urdf"] = "follower_dual_arm.urdf"
    (out / "follower.yaml").write_text(yaml.safe_dump(follower, sort_keys=False))

    console = presets.console_leader_config_dict(["left", "right"])
    (out / "leader_console.yaml").write_text(yaml.safe_dump(console, sort_keys=False))

    puppeteer = presets.puppeteer_leader_config_dict(2)
    puppeteer["urdf"] = "follower_dual_arm.urdf"
    puppeteer["profile"] = {"kind": "sine", "amplitude": 0.25, "period": 8.0,
                            "start_delay": 0.5, "duration": 20.0}
    (out / "leader_puppeteer.yaml").write_text(yaml.safe_dump(puppeteer, sort_keys=False))

    env = presets.env_config_dict(rate=50.0, service=True)
    (out / "env_sim.yaml").write_text(yaml.safe_dump(env, sort_keys=False))
    print(f"demo configs written to {out}/")
    print("run:    teleop-engine run --leader leader_console.yaml "
          "--follower follower.yaml --env env_sim.yaml")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="teleop-engine",
                                     description="Plug-and-play teleoperation engine")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a teleoperation session workflow")
    p.add_argument("--leader", required=True)
    p.add_argument("--follower", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--record", default=None, help="JSONL output path")
    p.add_argument("--record-fields", default=None,
                   help="comma-separated record field allowlist")
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--duration", type=float, default=None,
                   help="stop after this many seconds")
    p.add_argument("--max-sessions", type=int, default=None)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("replay", help="replay a recording onto a follower")
    p.add_argument("recording")
    p.add_argument("--follower", required=True)
    p.add_argument("--env", default=None)
    p.add_argument("--record", default=None)
    p.add_argument("--rate", type=float, default=None)
    p.set_defaults(fn=_cmd_replay)

    p = sub.add_parser("validate-model", help="check a robot description file")
    p.add_argument("urdf")
    p.add_argument("--limbs", required=True,
                   help="YAML with the limb-selection block (a follower config works)")
    p.set_defaults(fn=_cmd_validate_model)

    p = sub.add_parser("bench", help="control-step latency benchmark")
    p.add_argument("--limbs", default="1,2,4", help="comma-separated limb counts")
    p.add_argument("--mode", default="joint,eef", help="joint, eef or both")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--json", action="store_true", help="also print JSON results")
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("init-demo", help="write demo configs into a directory")
    p.add_argument("directory")
    p.set_defaults(fn=_cmd_init_demo)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
