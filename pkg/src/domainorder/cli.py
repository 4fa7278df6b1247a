"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 numeric failure. Progress goes
to stderr; a one-line JSON summary goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

from .commutator import optimality_scan
from .domain import combine_domains
from .errors import ArgumentError, NumericError
from .experiments import (
    EXPERIMENTS,
    VIOLATION_SCHEMA,
    ExperimentConfig,
    apply_override,
    build_domains,
    calibrate,
    load_config,
    run_experiment,
)
from .flow import Trajectory, read_checkpoints, read_trajectory_csv
from .reports import write_csv_report
from .schedule import WeightSchedule, validate_schedule

log = logging.getLogger("domainorder")

OUTPUT_ENV = "DOMAINORDER_OUTPUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def shipped_config(name: str) -> Path:
    """Path of a config bundled with the package, e.g. ``table1.json``."""
    return Path(str(resources.files("domainorder") / "configs" / name))


def _resolve_config(path: str) -> Path:
    p = Path(path)
    if not p.exists() and shipped_config(path).exists():
        return shipped_config(path)
    return p


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True), flush=True)


def _output_dir(args, cfg: ExperimentConfig | None = None) -> Path:
    if args.output:
        return Path(args.output)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(OUTPUT_ENV, "results"))


def cmd_run(args) -> int:
    cfg = load_config(_resolve_config(args.config), args.set)
    out = _output_dir(args, cfg)
    if (out / "manifest.json").exists() and not args.force:
        msg = f"{out} already holds a manifest; pass --force to overwrite"
        log.error("%s", msg)
        _emit({"status": "config-error", "error": msg})
        return EXIT_CONFIG
    log.info("running %s into %s", cfg.experiment, out)
    manifest = run_experiment(cfg, out, progress=lambda msg: log.info(msg))
    _emit({"status": "ok", "experiment": cfg.experiment, "output_dir": str(out),
           "content_hash": manifest["content_hash"], "failure_count": manifest["failure_count"],
           "summary": manifest["summary"]})
    return EXIT_OK


def cmd_validate(args) -> int:
    data = json.loads(_resolve_config(args.config).read_text())
    for item in args.set:
        apply_override(data, item)
    if isinstance(data, dict) and "breakpoints" in data and "experiment" not in data:
        problems = [str(v) for v in validate_schedule(WeightSchedule.from_dict(data))]
    else:
        try:
            ExperimentConfig.from_dict(data)
            problems = []
        except ArgumentError as exc:
            problems = [str(exc)]
    for p in problems:
        log.error("%s", p)
    _emit({"status": "ok" if not problems else "invalid", "violations": problems})
    return EXIT_OK if not problems else EXIT_CONFIG


def cmd_list(args) -> int:
    for name, desc in EXPERIMENTS.items():
        print(f"{name:18s} {desc}", file=sys.stderr)
    _emit({"experiments": sorted(EXPERIMENTS)})
    return EXIT_OK


def cmd_scan(args) -> int:
    run_dir = Path(args.run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    cfg = ExperimentConfig.from_dict(manifest["config"])
    domains = build_domains(cfg)
    stem = args.stem
    times, losses = read_trajectory_csv(run_dir / f"{stem}.csv")
    points = read_checkpoints(run_dir / f"{stem}.gcm")
    schedule = WeightSchedule.from_dict(json.loads((run_dir / f"{stem}_schedule.json").read_text()))
    if points.shape[0] != times.shape[0]:
        raise ArgumentError(f"{stem}: {points.shape[0]} checkpoints but {times.shape[0]} times")
    traj = Trajectory(times, points, losses, schedule)
    weights = [float(w) for w in schedule.weights[0]]
    target = domains[args.target] if args.target is not None else combine_domains(weights, domains)
    hcfg = cfg.hvp_config()
    if not all(d.supports_exact_hvp for d in domains):
        hcfg = type(hcfg)("fd", hcfg.fd_step)
    violations = optimality_scan(traj, domains, schedule, target, args.tol, hcfg)
    path = Path(args.output) if args.output else run_dir / f"{stem}_violations.csv"
    write_csv_report([v.__dict__ for v in violations], VIOLATION_SCHEMA, path)
    _emit({"status": "ok", "violations": len(violations), "checked_times": int(times.shape[0]), "output": str(path)})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(_resolve_config(args.config), args.set)
    result = calibrate(cfg, num_seeds=args.seeds)
    log.info("fitted coefficient %.6f from eps ratios %s", result["coefficient"], result["eps_ratios"])
    _emit({"status": "ok", **result})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="domainorder", description="Training-order analysis via Lie brackets of gradient flows")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config", help="config JSON path or name of a shipped config")
    p.add_argument("-o", "--output", help=f"output directory (default: config output_dir, ${OUTPUT_ENV}, ./results)")
    p.add_argument("--force", action="store_true", help="overwrite an existing manifest")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted-key override")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate-config", help="check an experiment config or a schedule JSON")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("list-experiments", help="list experiment names")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("scan", help="optimality scan over a stored trajectory")
    p.add_argument("run_dir", help="output directory of a previous run")
    p.add_argument("--stem", default="baseline", help="trajectory file stem (baseline, trajectory_00, ...)")
    p.add_argument("--target", type=int, default=None, help="zero-based domain index; default is the scheduled mixture")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("calibrate", help="fit the excess-loss prediction coefficient")
    p.add_argument("config", nargs="?", default="table1.json")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_calibrate)
    return parser


def _configure_logging(verbose: bool) -> None:
    pkg = logging.getLogger("domainorder")
    for h in [h for h in pkg.handlers if getattr(h, "_domainorder_cli", False)]:
        pkg.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    handler._domainorder_cli = True
    pkg.addHandler(handler)
    pkg.setLevel(logging.DEBUG if verbose else logging.INFO)
    pkg.propagate = False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except (ArgumentError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        log.error("%s", exc)
        _emit({"status": "config-error", "error": str(exc)})
        return EXIT_CONFIG
    except NumericError as exc:
        log.error("%s", exc)
        _emit({"status": "numeric-error", "error": str(exc)})
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
