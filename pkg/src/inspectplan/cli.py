"""Command line entry point: plan, validate, export, report, stub-oracle."""

from __future__ import annotations

import argparse
import json
import sys
import time

from .config import PlannerConfig, load_config
from .errors import InputError, PlannerError

EXIT_OK = 0


def _config(args) -> PlannerConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "oracle", None):
        cfg.oracle.mode = args.oracle
    if getattr(args, "oracle_url", None):
        cfg.oracle.url = args.oracle_url
    return cfg.validate()


def cmd_plan(args) -> int:
    from .pipeline import plan
    cfg = _config(args)
    res = plan(args.scene, args.task, cfg, args.out, smoothing=not args.no_smoothing)
    m = res.metrics
    print(f"wrote {args.out}: {m.steps} steps, {m.distance:.3f} m, "
          f"mean curvature {m.mean_curvature:.4f} 1/m, jerk {m.jerk:.4f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .pipeline import validate
    cfg = _config(args)
    report = validate(args.traj, args.scene, args.task, cfg)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    print(json.dumps(report.to_json()))
    return EXIT_OK if report.passed else 1


def cmd_export(args) -> int:
    from .pipeline import export
    path = export(args.traj, args.format, args.rate, args.out)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import render
    for path in render(args.run, args.scene, args.out):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_stub(args) -> int:
    from .pipeline import open_workspace
    from .stub_oracle import start_stub
    ws = None
    cfg = load_config(args.config)
    if args.mode == "mirror":
        if not (args.scene and args.task):
            raise InputError("mirror mode needs --scene and --task")
        ws = open_workspace(args.scene, args.task, cfg, oracle=object())
    server = start_stub(args.mode, ws, cfg, args.host, args.port)
    print(f"serving {args.mode} oracle at {server.url}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.shutdown()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inspectplan", description="Offline inspection trajectory planner.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", help="plan a trajectory")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--task", required=True)
    sp.add_argument("--config")
    sp.add_argument("--oracle", choices=("geometric", "remote"))
    sp.add_argument("--oracle-url")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-smoothing", action="store_true", help="skip midpoint smoothing (ablation)")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("validate", help="re-check a trajectory against scene and task")
    sp.add_argument("--traj", required=True)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--task", required=True)
    sp.add_argument("--config")
    sp.add_argument("--oracle", choices=("geometric", "remote"))
    sp.add_argument("--oracle-url")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("export", help="sample a trajectory to csv, ply or json")
    sp.add_argument("--traj", required=True)
    sp.add_argument("--format", required=True)
    sp.add_argument("--rate", type=float, default=10.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("report", help="render figures for a plan output directory")
    sp.add_argument("--run", required=True, help="directory written by plan")
    sp.add_argument("--scene", help="scene file, to draw the occupancy shadow")
    sp.add_argument("--out", help="output directory (default: the run directory)")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("stub-oracle", help="serve the remote-oracle protocol locally")
    sp.add_argument("--mode", choices=("mirror", "malformed"), default="mirror")
    sp.add_argument("--scene")
    sp.add_argument("--task")
    sp.add_argument("--config")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8765)
    sp.set_defaults(func=cmd_stub)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PlannerError as exc:
        where = f"[{exc.stage}] " if exc.stage else ""
        print(f"error: {where}{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
