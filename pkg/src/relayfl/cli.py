"""Command-line entry points.

  relayfl run <config.json>        run the experiment matrix
  relayfl schedule <timings.json>  solve one round's relay schedule
  relayfl report <dir>             aggregate traces into per-scheme CSVs
  relayfl compare <dir>            emit the time-aligned comparison CSV

Exit codes: 0 on success, 2 on configuration errors, 3 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .channel import RoundTimings
from .config import load_config
from .errors import ConfigError, RelayFLError
from .scheduler import RIGHT, LEFT, exhaustive_oracle, schedule_round


def _load_timings(path: Path, t_max_override: float | None) -> tuple[RoundTimings, np.ndarray]:
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"timings file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"timings file is not valid JSON: {exc}") from exc
    try:
        t_cast = np.asarray(data["t_cast"], dtype=float)
        t_comp = np.asarray(data["t_comp"], dtype=float)
        t_com_right = np.asarray(data["t_com_right"], dtype=float)
        t_com_left = np.asarray(data["t_com_left"], dtype=float)
        volumes = np.asarray(data["volumes"], dtype=float)
    except KeyError as exc:
        raise ConfigError(f"timings file missing field {exc}") from exc
    L = t_cast.shape[0]
    if t_comp.shape[0] != L or volumes.shape[0] != L:
        raise ConfigError("t_cast, t_comp and volumes must share one entry per cell")
    if t_com_right.shape[0] != max(L - 1, 0) or t_com_left.shape[0] != max(L - 1, 0):
        raise ConfigError("link arrays must have one entry per adjacent pair")
    if t_max_override is not None:
        t_max = float(t_max_override)
    elif "t_max" in data:
        t_max = float(data["t_max"])
    else:
        t_max = 0.0
        for l in range(L):
            out = []
            if l < L - 1:
                out.append(t_com_right[l])
            if l > 0:
                out.append(t_com_left[l - 1])
            t_max = max(t_max, t_cast[l] + t_comp[l] + (max(out) if out else 0.0))
    timings = RoundTimings(
        t_cast=t_cast,
        t_comp=t_comp,
        t_com_right=t_com_right,
        t_com_left=t_com_left,
        t_max=t_max,
    )
    return timings, volumes


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out = harness.run_experiment(cfg)
    print(f"wrote results to {out}")
    return 0


def _cmd_schedule(args: argparse.Namespace) -> int:
    timings, volumes = _load_timings(Path(args.timings), args.tmax_override)
    if args.oracle:
        result = exhaustive_oracle(timings, volumes, conflict=args.conflict)
    else:
        result = schedule_round(timings, volumes, conflict=args.conflict)
    doc = {
        "plan": result.plan.to_json_dict(),
        "participation": result.participation.tolist(),
        "utility": float(result.utility),
        "paths": {
            RIGHT: [list(p.node_list) for p in result.paths_right],
            LEFT: [list(p.node_list) for p in result.paths_left],
        },
    }
    if args.direction != "both":
        keep = args.direction
        doc["paths"] = {keep: doc["paths"][keep]}
    text = json.dumps(doc, sort_keys=True, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    paths = harness.write_report(Path(args.dir))
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    path = harness.compare_schemes(Path(args.dir))
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relayfl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment matrix from a config file")
    p_run.add_argument("config", help="path to the experiment config JSON")
    p_run.set_defaults(func=_cmd_run)

    p_sched = sub.add_parser("schedule", help="solve one round's relay schedule")
    p_sched.add_argument("timings", help="path to a timings JSON file")
    p_sched.add_argument("--direction", choices=[RIGHT, LEFT, "both"], default="both")
    p_sched.add_argument("--oracle", action="store_true", help="use exhaustive search")
    p_sched.add_argument("--conflict", choices=["link", "node"], default="link")
    p_sched.add_argument("--tmax-override", type=float, default=None)
    p_sched.add_argument("--output", default=None, help="write JSON here instead of stdout")
    p_sched.set_defaults(func=_cmd_schedule)

    p_rep = sub.add_parser("report", help="aggregate traces into per-scheme CSVs")
    p_rep.add_argument("dir", help="directory holding *.jsonl traces")
    p_rep.set_defaults(func=_cmd_report)

    p_cmp = sub.add_parser("compare", help="emit the time-aligned comparison CSV")
    p_cmp.add_argument("dir", help="directory holding *.jsonl traces")
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RelayFLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
