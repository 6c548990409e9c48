"""Experiment orchestration and result persistence.

Each (scheme, seed) pair produces one JSONL trace file with one record per
round, plus a shared summary CSV. Outputs are a pure function of the
resolved config and seed: records carry no timestamps or environment
state, and files are written via temp-and-rename.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .baselines import SchemeRun, build_task, run_scheme
from .config import ExperimentConfig, config_hash, resolved_dict
from .errors import IOFailure, MissingTraces
from .rngtools import substream
from .topology import build_chain_topology, partition_labels

OUTPUT_ROOT_ENV = "RELAYFL_OUTPUT"

SUMMARY_COLUMNS = [
    "scheme",
    "seed",
    "rounds",
    "total_wall",
    "final_gap_mean",
    "final_loss_mean",
    "final_f_mean",
    "avg_clients",
    "config_hash",
]

REPORT_COLUMNS = ["round", "wall_clock", "gap", "F_mean", "A1_mean", "avg_clients"]


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    out = Path(cfg.output_dir)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def trace_lines(run: SchemeRun) -> str:
    return "".join(
        json.dumps(t.to_record(), sort_keys=True) + "\n" for t in run.traces
    )


def build_experiment_topology(cfg: ExperimentConfig, seed: int):
    topo = build_chain_topology(cfg.topology, substream(seed, "topology"))
    topo, _ = partition_labels(cfg.partition, topo, substream(seed, "partition"))
    return topo


def run_single(cfg: ExperimentConfig, scheme: str, seed: int) -> SchemeRun:
    topology = build_experiment_topology(cfg, seed)
    task = build_task(cfg, topology, seed)
    return run_scheme(
        scheme,
        topology,
        task,
        cfg.channel,
        cfg.training,
        root_seed=seed,
        conflict=cfg.scheduler.conflict,
        sweeps=cfg.scheduler.local_search_sweeps,
        t_max_override=cfg.scheduler.t_max_override,
    )


def run_experiment(cfg: ExperimentConfig, out_dir: Path | None = None) -> Path:
    """Run the full (scheme x seed) matrix and persist traces and summary."""
    cfg.validate()
    out = resolve_output_dir(cfg) if out_dir is None else Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create output dir {out}: {exc}") from exc

    chash = config_hash(cfg)
    summary_rows = []
    for scheme in cfg.schemes:
        for seed in cfg.seeds:
            run = run_single(cfg, scheme, seed)
            _atomic_write(out / f"{scheme}_{seed}.jsonl", trace_lines(run))
            last = run.traces[-1]
            summary_rows.append(
                {
                    "scheme": scheme,
                    "seed": seed,
                    "rounds": len(run.traces),
                    "total_wall": sum(t.wall_clock for t in run.traces),
                    "final_gap_mean": last.gap_mean,
                    "final_loss_mean": last.loss_mean,
                    "final_f_mean": last.f_mean,
                    "avg_clients": float(np.mean([t.avg_clients for t in run.traces])),
                    "config_hash": chash,
                }
            )
    _atomic_write(out / "summary.csv", _csv_text(SUMMARY_COLUMNS, summary_rows))
    _atomic_write(
        out / "config.resolved.json",
        json.dumps(resolved_dict(cfg), sort_keys=True, indent=2) + "\n",
    )
    return out


def _csv_text(columns: list[str], rows: list[dict]) -> str:
    import io

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in columns})
    return buf.getvalue()


def _load_traces(result_dir: Path) -> dict[tuple[str, int], list[dict]]:
    runs: dict[tuple[str, int], list[dict]] = {}
    for path in sorted(Path(result_dir).glob("*.jsonl")):
        stem = path.stem
        scheme, _, seed = stem.rpartition("_")
        if not scheme or not seed.isdigit():
            continue
        records = [json.loads(line) for line in path.read_text().splitlines() if line]
        runs[(scheme, int(seed))] = records
    return runs


def write_report(result_dir: Path) -> list[Path]:
    """Aggregate traces into one CSV per scheme, averaged over seeds."""
    runs = _load_traces(result_dir)
    if not runs:
        raise MissingTraces(f"no trace files in {result_dir}")
    schemes = sorted({scheme for scheme, _ in runs})
    written = []
    for scheme in schemes:
        seed_runs = [recs for (s, _), recs in sorted(runs.items()) if s == scheme]
        n_rounds = min(len(recs) for recs in seed_runs)
        rows = []
        for r in range(n_rounds):
            recs = [sr[r] for sr in seed_runs]
            gaps = [x["gap_mean"] for x in recs if x["gap_mean"] is not None]
            rows.append(
                {
                    "round": r,
                    "wall_clock": float(np.mean([x["wall_clock"] for x in recs])),
                    "gap": float(np.mean(gaps)) if gaps else "",
                    "F_mean": float(np.mean([x["f_mean"] for x in recs])),
                    "A1_mean": float(np.mean([x["a1_mean"] for x in recs])),
                    "avg_clients": float(np.mean([x["avg_clients"] for x in recs])),
                }
            )
        path = Path(result_dir) / f"{scheme}_report.csv"
        _atomic_write(path, _csv_text(REPORT_COLUMNS, rows))
        written.append(path)
    return written


def compare_schemes(result_dir: Path) -> Path:
    """Align every scheme's quality metric on cumulative simulated time.

    Emits one row per (scheme, seed, round) with the cumulative wall clock
    as the x axis, mirroring quality-versus-training-time plots.
    """
    runs = _load_traces(result_dir)
    schemes = {scheme for scheme, _ in runs}
    if len(schemes) < 2:
        raise MissingTraces(
            f"comparison needs traces from at least two schemes, found {sorted(schemes)}"
        )
    columns = ["scheme", "seed", "round", "cum_wall", "gap_mean", "loss_mean", "accuracy_mean"]
    rows = []
    for (scheme, seed), recs in sorted(runs.items()):
        cum = 0.0
        for rec in recs:
            cum += rec["wall_clock"]
            rows.append(
                {
                    "scheme": scheme,
                    "seed": seed,
                    "round": rec["round"],
                    "cum_wall": cum,
                    "gap_mean": "" if rec["gap_mean"] is None else rec["gap_mean"],
                    "loss_mean": rec["loss_mean"],
                    "accuracy_mean": ""
                    if rec.get("accuracy_mean") is None
                    else rec["accuracy_mean"],
                }
            )
    path = Path(result_dir) / "comparison.csv"
    _atomic_write(path, _csv_text(columns, rows))
    return path


def gap_at_equal_budget(runs: dict[str, list[dict]]) -> dict[str, float]:
    """Final gap per scheme at the largest common simulated-time budget.

    The budget is the smallest total wall clock across schemes; each
    scheme's gap is read at its last round finishing within the budget.
    """
    budgets = {}
    for scheme, recs in runs.items():
        budgets[scheme] = sum(r["wall_clock"] for r in recs)
    budget = min(budgets.values())
    gaps = {}
    for scheme, recs in runs.items():
        cum = 0.0
        last = None
        for rec in recs:
            cum += rec["wall_clock"]
            if cum > budget + 1e-12:
                break
            last = rec
        if last is None:
            last = recs[0]
        gaps[scheme] = last["gap_mean"]
    return gaps
