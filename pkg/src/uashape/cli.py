"""Command line entry point: ``uashape run|suite|report``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from typing import Optional, Sequence

from uashape import experiment as ex

# flags with a dedicated spelling; every other config field gets --<field-name>
_SHORTCUTS = {"room_width", "room_height", "out_dir"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--room", help="room size, e.g. 4x4")
    p.add_argument("--out", dest="out_dir", help="output directory")
    for f in dataclasses.fields(ex.ExperimentConfig):
        if f.name in _SHORTCUTS:
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar="VALUE")


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    for f in dataclasses.fields(ex.ExperimentConfig):
        raw = getattr(args, f.name, None)
        if raw is not None and f.name != "out_dir":
            out[f.name] = ex._coerce(f.name, str(raw))
    if args.room:
        out["room_width"], out["room_height"] = ex.parse_room(args.room)
    if args.out_dir:
        out["out_dir"] = args.out_dir
    return out


def _settings(args: argparse.Namespace, base: Optional[dict] = None) -> dict:
    merged = dict(base or {})
    if args.config:
        merged.update(ex.load_config_file(args.config))
    merged.update(_overrides(args))
    for key in ("repeats", "jobs"):
        if getattr(args, key, None) is not None:
            merged[key] = getattr(args, key)
    return merged


def _split(settings: dict) -> tuple[dict, dict]:
    extras = {k: settings.pop(k) for k in ("conditions", "repeats", "jobs") if k in settings}
    return settings, extras


def cmd_run(args: argparse.Namespace) -> int:
    fields, _ = _split(_settings(args))
    config = ex.ExperimentConfig(**fields)
    out_dir = config.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    res = ex.run_condition(config, checkpoint_dir=out_dir)
    ex.emit_run(res, out_dir)
    print(f"{config.tag}: {res.duration:.1f}s, {res.advisor_queries} advisor queries")
    for key, value in res.summary.items():
        print(f"  {key:16s} {value}")
    return 0


def cmd_suite(args: argparse.Namespace) -> int:
    base = dict(ex.DESK_PRESET, repeats=ex.DESK_REPEATS) if args.desk else {}
    fields, extras = _split(_settings(args, base))
    conditions = extras.get("conditions") or list(ex.CONDITIONS)
    configs = [ex.ExperimentConfig(**dict(fields, condition=c)) for c in conditions]
    out_dir = fields.get("out_dir") or "results"
    rows, results = ex.run_suite(configs, extras.get("repeats", 1), out_dir, extras.get("jobs", 1))
    _print_tables(rows)
    failed = len(configs) * extras.get("repeats", 1) - len(results)
    if failed:
        print(f"{failed} run(s) failed; see {os.path.join(out_dir, 'runs.csv')}", file=sys.stderr)
    return 1 if failed else 0


def _num(x, digits=3) -> str:
    if x in (None, ""):
        return "-"
    return f"{float(x):.{digits}f}"


def _print_tables(rows: Sequence[dict]) -> None:
    print("AUC by condition")
    for r in rows:
        print(f"  {r['condition']:26s} {_num(r['auc_mean'], 2):>10s} +- {_num(r['auc_std'], 2)}  (n={r['runs']})")
    by_cond = {r["condition"]: r for r in rows}
    lines = [(label, by_cond[c]) for c, _, label in ex.TABLE2_ROWS if c in by_cond]
    if lines:
        print("Calibration of advice")
        print(f"  {'method':40s} {'ECE':>7s} {'BS':>7s} {'disc':>7s}")
        for (cond, key, label) in ex.TABLE2_ROWS:
            if cond in by_cond:
                r = by_cond[cond]
                print(f"  {label:40s} {_num(r[f'ece_{key}_mean']):>7s} {_num(r[f'bs_{key}_mean']):>7s}"
                      f" {_num(r[f'disc_{key}_mean']):>7s}")


def cmd_report(args: argparse.Namespace) -> int:
    path = os.path.join(args.in_dir, "summary.csv")
    if not os.path.exists(path):
        print(f"no summary.csv in {args.in_dir}", file=sys.stderr)
        return 2
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    _print_tables(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uashape",
                                     description="Uncertainty-aware advice shaping for PPO in a two-room gridworld.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one condition for one seed")
    _add_config_flags(run)
    run.set_defaults(func=cmd_run)

    suite = sub.add_parser("suite", help="all conditions over several seeds, with tables")
    _add_config_flags(suite)
    suite.add_argument("--repeats", type=int)
    suite.add_argument("--jobs", type=int, help="worker processes")
    suite.add_argument("--desk", action="store_true", help="small preset: 3x3 rooms, 1500 episodes, 3 seeds")
    suite.set_defaults(func=cmd_suite)

    report = sub.add_parser("report", help="print tables from a suite directory")
    report.add_argument("--in", dest="in_dir", required=True)
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, ex.ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
