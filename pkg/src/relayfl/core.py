"""Learning pipeline: local SGD, aggregation stages and round execution.

One round runs four stages: clients train on their server's broadcast
model and upload, servers aggregate within their cell, relay streams carry
aggregates across cells per the schedule (each relay client folds its own
model in on the way), and every server performs a final volume-weighted
merge. The expanded-form recomputation in `verify_expansion` provides an
independent algebraic check of the whole pipeline.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .channel import RoundTimings
from .errors import DivergenceError, DoubleMerge, EmptyCell, TraceMismatch
from .scheduler import SchedulePlan
from .topology import ClientProfile, Topology


def learning_rates(
    schedule: str, round_idx: int, epochs: int, initial_lr: float = 0.01, decay: float = 0.995
) -> list[float]:
    """Per-epoch step sizes for one round.

    "exponential": initial_lr * decay^round, constant within the round.
    "harmonic": 1 / ((round+1) * (epochs-1)), decaying with the round index.
    """
    if schedule == "exponential":
        return [initial_lr * decay**round_idx] * epochs
    if schedule == "harmonic":
        if epochs < 2:
            raise DivergenceError("harmonic schedule needs at least 2 epochs")
        return [1.0 / ((round_idx + 1) * (epochs - 1))] * epochs
    raise DivergenceError(f"unknown lr schedule {schedule!r}")


def local_sgd(
    w0: np.ndarray,
    client: ClientProfile,
    task,
    lr_values: list[float],
    rng: np.random.Generator | None = None,
    batch_size: int = 20,
    exact: bool = True,
) -> np.ndarray:
    """Run the client's update epochs from the broadcast model."""
    dist = client.label_distribution
    w = np.array(w0, dtype=float, copy=True)
    for lr in lr_values:
        if lr < 0:
            raise DivergenceError("learning rates must be nonnegative")
        g = task.gradient(w, dist) if exact else task.batch_gradient(w, dist, batch_size, rng)
        w -= lr * g
        if not np.all(np.isfinite(w)):
            raise DivergenceError(f"client {client.id}: non-finite model entries")
    return w


def intra_cell_aggregate(models: list[tuple[np.ndarray, int]]) -> tuple[np.ndarray, int]:
    """Volume-weighted mean of uploaded models and the pooled volume."""
    if not models:
        raise EmptyCell("no models to aggregate")
    volume = sum(n for _, n in models)
    if any(n <= 0 for _, n in models):
        raise EmptyCell("client data volumes must be positive")
    acc = np.zeros_like(models[0][0])
    for w, n in models:
        acc += n * w
    return acc / volume, volume


@dataclass(frozen=True)
class RelayStream:
    """A model in transit, with its pooled volume and provenance."""

    model: np.ndarray
    volume: int
    cells: frozenset[int]
    merged_rocs: frozenset[int] = frozenset()


def roc_relay_merge(
    stream: RelayStream, roc_model: np.ndarray, roc_volume: int, roc_id: int
) -> RelayStream:
    """Fold the relay client's own trained model into a passing stream."""
    if roc_volume <= 0:
        raise EmptyCell(f"relay client {roc_id} has non-positive volume")
    if roc_id in stream.merged_rocs:
        raise DoubleMerge(f"relay client {roc_id} already merged into this stream")
    total = stream.volume + roc_volume
    return RelayStream(
        model=(stream.volume * stream.model + roc_volume * roc_model) / total,
        volume=total,
        cells=stream.cells,
        merged_rocs=stream.merged_rocs | {roc_id},
    )


@dataclass
class CellState:
    """One server's aggregation inputs at the end of a round."""

    intra_model: np.ndarray
    intra_volume: int
    bundles: list[tuple[np.ndarray, int]] = field(default_factory=list)


def es_final_aggregate(state: CellState) -> np.ndarray:
    """Final edge model: intra-cell aggregate merged with received bundles."""
    total = state.intra_volume + sum(n for _, n in state.bundles)
    acc = state.intra_volume * state.intra_model
    for w, n in state.bundles:
        acc = acc + n * w
    return acc / total


@dataclass
class RoundResult:
    es_models: list[np.ndarray]
    client_models: dict[int, np.ndarray]
    intra_models: list[np.ndarray]
    intra_volumes: list[int]
    realized_participation: np.ndarray
    t_agg: np.ndarray
    wall_clock: float
    expansion_residual: float | None


def execute_relays(
    plan: SchedulePlan,
    timings: RoundTimings,
    topology: Topology,
    intra_models: list[np.ndarray],
    intra_volumes: list[int],
    client_models: dict[int, np.ndarray],
) -> tuple[list[CellState], np.ndarray]:
    """Event-driven replay of the relay plan on actual model vectors.

    Each direction runs its own stream lattice: a departure snapshots the
    sending cell's intra aggregate merged with any same-direction stream
    already delivered there, the lens relay client folds its model in
    during the hop, and the delivery becomes both an aggregation input and
    forwardable content downstream. Returns per-cell aggregation inputs
    and the realized participation matrix.
    """
    L = topology.num_cells
    states = [CellState(intra_models[l], intra_volumes[l]) for l in range(L)]
    realized = np.eye(L, dtype=int)

    for step in (1, -1):
        delivered: list[RelayStream | None] = [None] * L
        events: list = []
        seq = itertools.count()
        for (u, v), start in sorted(plan.start_times.items()):
            if v - u == step:
                heapq.heappush(events, (start, 1, next(seq), (u, v), None))
        while events:
            time, kind, _, (u, v), payload = heapq.heappop(events)
            if kind == 0:
                delivered[v] = payload
                states[v].bundles.append((payload.model, payload.volume))
                for j in payload.cells:
                    realized[j, v] = 1
            else:
                stream = RelayStream(
                    model=intra_models[u], volume=intra_volumes[u], cells=frozenset({u})
                )
                upstream = delivered[u]
                if upstream is not None:
                    total = stream.volume + upstream.volume
                    stream = RelayStream(
                        model=(stream.volume * stream.model + upstream.volume * upstream.model)
                        / total,
                        volume=total,
                        cells=stream.cells | upstream.cells,
                        merged_rocs=upstream.merged_rocs,
                    )
                lens = (u, v) if step == 1 else (v, u)
                roc_id = topology.roc_of[lens]
                stream = roc_relay_merge(
                    stream, client_models[roc_id], topology.clients[roc_id].data_volume, roc_id
                )
                heapq.heappush(
                    events, (time + timings.com(u, v), 0, next(seq), (u, v), stream)
                )
    return states, realized


def verify_expansion(
    client_models: dict[int, np.ndarray],
    topology: Topology,
    participation: np.ndarray,
    es_models: list[np.ndarray],
) -> float:
    """Recompute every edge model directly from the participation expansion.

    For each destination the expansion is the volume-weighted mean of the
    participating cells' pooled client models (relay clients counted with
    the sending side per the destination's viewpoint). Returns the largest
    relative deviation from the pipeline's output.
    """
    worst = 0.0
    for l in range(topology.num_cells):
        sets = topology.destination_client_sets(l)
        num = None
        den = 0.0
        for j, ids in enumerate(sets):
            if not participation[j, l]:
                continue
            n_j = sum(topology.clients[k].data_volume for k in ids)
            w_j = sum(topology.clients[k].data_volume * client_models[k] for k in ids) / n_j
            term = n_j * w_j
            num = term if num is None else num + term
            den += n_j
        expansion = num / den
        rel = float(
            np.linalg.norm(es_models[l] - expansion) / max(np.linalg.norm(expansion), 1e-12)
        )
        worst = max(worst, rel)
    return worst


def run_round(
    es_models: list[np.ndarray],
    topology: Topology,
    task,
    plan: SchedulePlan,
    predicted_participation: np.ndarray,
    timings: RoundTimings,
    lr_values: list[float],
    train_rng,
    batch_size: int = 20,
    exact: bool = True,
    start_models: dict[int, np.ndarray] | None = None,
    upload_override=None,
    uploader_sets: list[list[int]] | None = None,
) -> RoundResult:
    """Execute one full round under a relay plan.

    ``train_rng`` maps a client id to that client's SGD stream for the
    round. ``start_models`` and ``upload_override`` let baseline schemes
    reinterpret what a client trains on and uploads without touching the
    stage machinery. The realized participation must match the scheduler's
    prediction exactly; any disagreement raises.
    """
    uploads = topology.uploader_sets if uploader_sets is None else uploader_sets

    client_models: dict[int, np.ndarray] = {}
    for c in topology.clients:
        w0 = (
            start_models[c.id]
            if start_models is not None and c.id in start_models
            else es_models[c.home_cell]
        )
        client_models[c.id] = local_sgd(
            w0, c, task, lr_values, rng=train_rng(c.id), batch_size=batch_size, exact=exact
        )

    intra_models: list[np.ndarray] = []
    intra_volumes: list[int] = []
    for l in range(topology.num_cells):
        pairs = []
        for cid in uploads[l]:
            w = client_models[cid] if upload_override is None else upload_override(cid, l, client_models[cid])
            pairs.append((w, topology.clients[cid].data_volume))
        w_tilde, n_tilde = intra_cell_aggregate(pairs)
        intra_models.append(w_tilde)
        intra_volumes.append(n_tilde)

    states, realized = execute_relays(
        plan, timings, topology, intra_models, intra_volumes, client_models
    )
    if not np.array_equal(realized, predicted_participation):
        raise TraceMismatch(
            "realized participation differs from the scheduled prediction:\n"
            f"realized=\n{realized}\npredicted=\n{predicted_participation}"
        )

    new_models = [es_final_aggregate(s) for s in states]
    # The expanded-form identity only describes the standard upload pipeline.
    standard = upload_override is None and [list(s) for s in uploads] == [
        list(s) for s in topology.uploader_sets
    ]
    residual = (
        verify_expansion(client_models, topology, realized, new_models) if standard else None
    )
    return RoundResult(
        es_models=new_models,
        client_models=client_models,
        intra_models=intra_models,
        intra_volumes=intra_volumes,
        realized_participation=realized,
        t_agg=plan.t_agg,
        wall_clock=float(plan.t_agg.max()),
        expansion_residual=residual,
    )
