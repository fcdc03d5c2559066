"""Command line entry point: ``okadapt {run,bench,converge,plotdata}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .adaptivity import preset
from .bench import bench, format_table
from .config import ConfigError, parse_config
from .driver import FixedStep, RunAborted, RunConfig, observed_orders, run, temporal_convergence
from .io import COLUMNS, TimeSeriesWriter, format_value, read_timeseries, write_snapshot
from .solver import SolverSettings

EXIT_CONFIG = 2
EXIT_ABORTED = 3


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, ic=replace(cfg.ic, seed=args.seed))
    if getattr(args, "snapshots", None):
        cfg = replace(cfg, snapshot_times=tuple(sorted(_floats(args.snapshots))))
    controller = getattr(args, "controller", None)
    if controller == "fixed":
        dt = args.dt if args.dt is not None else getattr(cfg.gains, "dt", None)
        if dt is None:
            raise ConfigError("--controller fixed requires --dt")
        cfg = replace(cfg, gains=FixedStep(dt))
    elif controller is not None:
        cfg = replace(cfg, gains=preset(controller, getattr(cfg.gains, "rho", 0.9)))
    elif getattr(args, "dt", None) is not None:
        cfg = replace(cfg, gains=FixedStep(args.dt))
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    snapshots = []

    def on_snapshot(requested, actual, phi):
        path = out / f"snapshot_{len(snapshots):04d}.okf"
        write_snapshot(phi, actual, path)
        snapshots.append({"requested": requested, "time": actual, "file": path.name})

    code = 0
    with TimeSeriesWriter(out / "timeseries.csv") as writer:
        try:
            report = run(cfg, on_record=writer, on_snapshot=on_snapshot)
        except RunAborted as exc:
            print(f"run aborted: {exc}", file=sys.stderr)
            report, code = exc.report, EXIT_ABORTED
    if report.final_state is not None:
        write_snapshot(report.final_state.phi, report.final_state.time, out / "final.okf")
    summary = {"controller": cfg.controller_name, **report.summary(), "snapshots": snapshots}
    (out / "report.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps({k: v for k, v in summary.items() if k != "snapshots"}, indent=2))
    return code


def cmd_bench(args) -> int:
    configs = [(Path(p).stem, _apply_overrides(parse_config(p), args)) for p in args.config]
    controllers = [c.strip() for c in args.controllers.split(",") if c.strip()]
    for name in controllers:
        preset(name)
    rows = bench(configs, controllers, jobs=args.jobs)
    print(format_table(rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bench.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(asdict(rows[0])))
            writer.writeheader()
            for row in rows:
                writer.writerow(asdict(row))
    return EXIT_ABORTED if any(r.status.startswith("failed") for r in rows) else 0


def cmd_converge(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    if not args.keep_solver:
        # tight enough that the solver error sits well below the finest time-step error
        cfg = replace(cfg, solver=SolverSettings(newton_rtol=1e-9, lin_rtol=1e-10, lin_atol=1e-12,
                                                 newton_stol=1e-12))
    divisions = [int(x) for x in args.divisions.split(",")]
    try:
        errors = temporal_convergence(cfg, args.horizon, divisions, args.reference)
    except RunAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    orders = [float("nan")] + observed_orders(errors)
    print(f"{'dt':>14}{'l2 error':>16}{'order':>8}")
    for (dt, err), order in zip(errors, orders):
        print(f"{dt:>14.6e}{err:>16.6e}{order:>8.3f}")
    return 0


def cmd_plotdata(args) -> int:
    records = read_timeseries(args.input)
    columns = args.columns.split(",") if args.columns else COLUMNS
    unknown = [c for c in columns if c not in COLUMNS]
    if unknown:
        raise ConfigError(f"unknown column(s): {', '.join(unknown)}")
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for rec in records:
            if args.accepted_only and not rec.accepted:
                continue
            writer.writerow([format_value(getattr(rec, c)) for c in columns])
    finally:
        if args.out:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="okadapt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, multi_config=False):
        if multi_config:
            p.add_argument("--config", action="append", required=True, help="TOML config (repeatable)")
        else:
            p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--dt", type=float, help="fixed step size (fixed mode)")
        p.add_argument("--snapshots", help="comma separated snapshot times")

    p = sub.add_parser("run", help="run one simulation")
    common(p)
    p.add_argument("--controller", choices=["i", "pid", "pc11", "fixed"])
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="compare step-size controllers")
    common(p, multi_config=True)
    p.add_argument("--controllers", "--controller", default="i,pid,pc11")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("converge", help="temporal order study with fixed steps")
    common(p)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--divisions", default="32,64,128,256,512")
    p.add_argument("--reference", type=int, default=4096)
    p.add_argument("--keep-solver", action="store_true", help="use the config's solver tolerances")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("plotdata", help="extract time-series columns")
    p.add_argument("--input", required=True)
    p.add_argument("--columns")
    p.add_argument("--accepted-only", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
