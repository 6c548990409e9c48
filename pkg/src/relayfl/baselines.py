"""Comparison schemes sharing one round driver.

All schemes consume the same topology, channel draws, initial model and
per-client SGD streams; they differ only in who uploads where, what model
a client trains on, what an overlapping client uploads, and which relay
plan (if any) moves edge models between cells.

  proposed  scheduled multi-hop relays through lens relay clients
  fedoc     immediate one-hop relays on every feasible link
  hfl       intra-cell aggregation only, every client bound to its home
  fedmes    overlapping clients train on the average of accessible edge
            models and upload to all of them
  fl_eocd   fedmes-style training, but uploads mix in the edge models
            cached one round earlier
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, compute_round_timings, draw_fading
from .config import ExperimentConfig, TrainingConfig
from .core import RoundResult, learning_rates, run_round
from .diagnostics import (
    CentralizedReference,
    avg_clients_aggregated,
    round_A1,
    round_F,
)
from .errors import ConfigError
from .rngtools import substream
from .scheduler import ScheduleResult, empty_schedule, fedoc_schedule, schedule_round
from .tasks import (
    ClassificationTask,
    QuadraticTask,
    evaluate_global_loss,
    global_label_distribution,
    quadratic_global_optimum,
)
from .topology import Topology

PROPOSED = "proposed"
FEDOC = "fedoc"
HFL = "hfl"
FEDMES = "fedmes"
FL_EOCD = "fl_eocd"


@dataclass
class RoundTrace:
    round: int
    wall_clock: float
    t_max: float
    t_agg: list[float]
    participation: list[list[int]]
    utility: float
    gap: list[float] | None
    gap_mean: float | None
    loss: list[float]
    loss_mean: float
    accuracy_mean: float | None
    f: list[float]
    f_mean: float
    a1: list[float]
    a1_mean: float
    avg_clients: float
    expansion_residual: float | None

    def to_record(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SchemeRun:
    scheme: str
    seed: int
    traces: list[RoundTrace]
    final_models: list[np.ndarray]
    participations: list[np.ndarray] = field(default_factory=list)
    model_history: list[list[np.ndarray]] = field(default_factory=list)


def scheme_uploader_sets(scheme: str, topology: Topology) -> list[list[int]]:
    if scheme in (PROPOSED, FEDOC):
        return [list(s) for s in topology.uploader_sets]
    if scheme == HFL:
        return [
            sorted(c.id for c in topology.clients if c.home_cell == l)
            for l in range(topology.num_cells)
        ]
    if scheme in (FEDMES, FL_EOCD):
        return [sorted(topology.covered_client_ids(l)) for l in range(topology.num_cells)]
    raise ConfigError(f"unknown scheme {scheme!r}")


def _overlap_start_models(
    topology: Topology, es_models: list[np.ndarray]
) -> dict[int, np.ndarray]:
    starts = {}
    for c in topology.clients:
        if len(c.covering_cells) == 2:
            a, b = c.covering_cells
            starts[c.id] = 0.5 * (es_models[a] + es_models[b])
    return starts


class _EocdCache:
    """Per overlapping client: edge models seen one round earlier."""

    def __init__(self, topology: Topology, volumes: list[int]):
        self._volumes = volumes
        self._prev: dict[int, list[tuple[np.ndarray, int]]] = {
            c.id: [] for c in topology.clients if len(c.covering_cells) == 2
        }
        self._topology = topology

    def upload_override(self, cid: int, cell: int, local: np.ndarray) -> np.ndarray:
        cached = self._prev.get(cid)
        if not cached:
            return local
        n_local = self._topology.clients[cid].data_volume
        total = n_local + sum(n for _, n in cached)
        acc = n_local * local
        for w, n in cached:
            acc = acc + n * w
        return acc / total

    def refresh(self, es_models: list[np.ndarray]) -> None:
        for cid in self._prev:
            a, b = self._topology.clients[cid].covering_cells
            self._prev[cid] = [
                (np.array(es_models[a], copy=True), self._volumes[a]),
                (np.array(es_models[b], copy=True), self._volumes[b]),
            ]


def plan_for_scheme(
    scheme: str,
    timings,
    volumes: np.ndarray,
    conflict: str = "link",
    sweeps: int = 1,
) -> ScheduleResult:
    if scheme == PROPOSED:
        return schedule_round(timings, volumes, conflict=conflict, sweeps=sweeps)
    if scheme == FEDOC:
        return fedoc_schedule(timings, volumes)
    return empty_schedule(timings, volumes)


def build_task(cfg: ExperimentConfig, topology: Topology, root_seed: int):
    tcfg = cfg.task
    if tcfg.kind == "quadratic":
        return QuadraticTask.with_basis_centers(
            num_classes=cfg.partition.num_classes,
            dimension=tcfg.dimension,
            scale=tcfg.center_scale,
            gradient_noise=tcfg.gradient_noise,
            init_scale=tcfg.init_scale,
        )
    if tcfg.dataset_path is not None:
        from .tasks import load_dataset_task

        return load_dataset_task(tcfg.dataset_path)
    task = ClassificationTask.synthetic(
        num_classes=cfg.partition.num_classes,
        num_features=tcfg.num_features,
        rng=substream(root_seed, "task"),
        samples_per_class=tcfg.samples_per_class,
    )
    return ClassificationTask(banks=task.banks, init_scale=tcfg.init_scale * 0.01)


def run_scheme(
    scheme: str,
    topology: Topology,
    task,
    channel: ChannelParams,
    training: TrainingConfig,
    root_seed: int,
    rounds: int | None = None,
    conflict: str = "link",
    sweeps: int = 1,
    t_max_override: float | None = None,
) -> SchemeRun:
    """Run one scheme for a full experiment under one seed."""
    if scheme not in (PROPOSED, FEDOC, HFL, FEDMES, FL_EOCD):
        raise ConfigError(f"unknown scheme {scheme!r}")
    R = training.rounds if rounds is None else rounds
    L = topology.num_cells
    uploads = scheme_uploader_sets(scheme, topology)
    hat_volumes = topology.hat_volumes()
    scheme_volumes = [
        sum(topology.clients[k].data_volume for k in ids) for ids in uploads
    ]

    global_dist = global_label_distribution(topology)
    w_star = task.optimum(global_dist)
    w0 = task.init_model(substream(root_seed, "init"))
    es_models = [np.array(w0, copy=True) for _ in range(L)]
    reference = CentralizedReference(topology=topology, task=task, w_c=np.array(w0, copy=True))
    cache = _EocdCache(topology, scheme_volumes) if scheme == FL_EOCD else None

    traces: list[RoundTrace] = []
    participations: list[np.ndarray] = []
    model_history: list[list[np.ndarray]] = []
    for r in range(R):
        fading = draw_fading(topology, channel, substream(root_seed, "channel", r))
        timings = compute_round_timings(
            topology,
            channel,
            training.epochs,
            uploader_sets=uploads,
            fading_draw=fading,
            t_max_override=t_max_override,
        )
        sched = plan_for_scheme(scheme, timings, hat_volumes, conflict=conflict, sweeps=sweeps)
        lr_values = learning_rates(
            training.lr_schedule, r, training.epochs, training.initial_lr, training.lr_decay
        )
        start_models = (
            _overlap_start_models(topology, es_models) if scheme in (FEDMES, FL_EOCD) else None
        )
        upload_override = cache.upload_override if cache is not None else None

        result = run_round(
            es_models,
            topology,
            task,
            sched.plan,
            sched.participation,
            timings,
            lr_values,
            train_rng=lambda cid: substream(root_seed, "train", r, cid),
            batch_size=training.batch_size,
            exact=training.exact_gradients,
            start_models=start_models,
            upload_override=upload_override,
            uploader_sets=uploads,
        )
        if cache is not None:
            cache.refresh(es_models)  # models broadcast this round feed round r+1 uploads
        es_models = result.es_models

        w_c = reference.step(lr_values)
        losses = [evaluate_global_loss(w, task, topology) for w in es_models]
        if w_star is not None:
            loss_star = evaluate_global_loss(w_star, task, topology)
            gaps = [v - loss_star for v in losses]
        else:
            gaps = None
        f_vals = round_F(result, topology)
        a1_vals = round_A1(es_models, w_c)
        acc = (
            float(np.mean([task.accuracy(w, global_dist) for w in es_models]))
            if hasattr(task, "accuracy")
            else None
        )
        traces.append(
            RoundTrace(
                round=r,
                wall_clock=result.wall_clock,
                t_max=float(timings.t_max),
                t_agg=[float(x) for x in result.t_agg],
                participation=result.realized_participation.tolist(),
                utility=float(sched.utility),
                gap=None if gaps is None else [float(g) for g in gaps],
                gap_mean=None if gaps is None else float(np.mean(gaps)),
                loss=[float(v) for v in losses],
                loss_mean=float(np.mean(losses)),
                accuracy_mean=acc,
                f=[float(x) for x in f_vals],
                f_mean=float(np.mean(f_vals)),
                a1=[float(x) for x in a1_vals],
                a1_mean=float(np.mean(a1_vals)),
                avg_clients=float(avg_clients_aggregated(result.realized_participation, topology)),
                expansion_residual=result.expansion_residual,
            )
        )
        participations.append(result.realized_participation)
        model_history.append([np.array(w, copy=True) for w in es_models])
    return SchemeRun(
        scheme=scheme,
        seed=root_seed,
        traces=traces,
        final_models=es_models,
        participations=participations,
        model_history=model_history,
    )
