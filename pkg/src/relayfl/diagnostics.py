"""Theory-facing metrics: aggregation deviation, reference trajectory, dissemination.

The aggregation-deviation term measures how far a cell's realized
aggregation weights sit from the full-population weights; it vanishes
exactly when every cell's model reached the destination. The
cell-centralized reference is the idealized trajectory where each cell
trains on its pooled distribution with exact gradients and a virtual
center aggregates every round.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RoundResult
from .errors import ConfigError
from .topology import Topology


def compute_F(
    participation_row: np.ndarray, volumes: np.ndarray, model_norms: np.ndarray
) -> float:
    """Aggregation-deviation term for one destination cell.

    sum_j | p_j N_j / sum(p N) - N_j / sum(N) | * ||w_j||, zero exactly
    when the row is all ones.
    """
    p = np.asarray(participation_row, dtype=float)
    v = np.asarray(volumes, dtype=float)
    if p.sum() <= 0:
        raise ConfigError("participation row must include the destination itself")
    realized = p * v / float(np.dot(p, v))
    full = v / float(v.sum())
    return float(np.sum(np.abs(realized - full) * np.asarray(model_norms, dtype=float)))


def hat_cell_models(
    client_models: dict[int, np.ndarray], topology: Topology
) -> tuple[list[np.ndarray], np.ndarray]:
    """Pooled per-cell client models and volumes, left-relay convention."""
    models = []
    volumes = topology.hat_volumes()
    for ids, n in zip(topology.hat_client_sets(), volumes):
        acc = sum(topology.clients[k].data_volume * client_models[k] for k in ids)
        models.append(acc / n)
    return models, volumes


def cell_class_distributions(topology: Topology) -> np.ndarray:
    """Per-cell pooled label distributions, left-relay convention."""
    rows = []
    for ids in topology.hat_client_sets():
        acc = None
        total = 0
        for k in ids:
            c = topology.clients[k]
            term = c.data_volume * c.label_distribution
            acc = term if acc is None else acc + term
            total += c.data_volume
        rows.append(acc / total)
    return np.vstack(rows)


@dataclass
class CentralizedReference:
    """Virtual trajectory of cell-pooled exact SGD with full aggregation."""

    topology: Topology
    task: object
    w_c: np.ndarray

    def __post_init__(self) -> None:
        self._cell_dists = cell_class_distributions(self.topology)
        self._volumes = self.topology.hat_volumes()

    def step(self, lr_values: list[float]) -> np.ndarray:
        per_cell = []
        for l in range(self.topology.num_cells):
            w = np.array(self.w_c, copy=True)
            for lr in lr_values:
                w -= lr * self.task.gradient(w, self._cell_dists[l])
            per_cell.append(w)
        num = sum(n * w for n, w in zip(self._volumes, per_cell))
        self.w_c = num / self._volumes.sum()
        return self.w_c


def centralized_reference_step(
    ref: CentralizedReference, lr_values: list[float]
) -> np.ndarray:
    return ref.step(lr_values)


def round_F(result: RoundResult, topology: Topology) -> np.ndarray:
    """Aggregation-deviation term per destination cell for one round."""
    models, volumes = hat_cell_models(result.client_models, topology)
    norms = np.array([float(np.linalg.norm(w)) for w in models])
    return np.array(
        [
            compute_F(result.realized_participation[:, l], volumes, norms)
            for l in range(topology.num_cells)
        ]
    )


def round_A1(es_models: list[np.ndarray], w_c: np.ndarray) -> np.ndarray:
    """Distance of each edge model from the centralized reference."""
    return np.array([float(np.linalg.norm(w - w_c)) for w in es_models])


def avg_clients_aggregated(participation: np.ndarray, topology: Topology) -> float:
    """Average, over cells, of how many clients fed each final aggregate.

    Counts the client sets of every participating cell from the
    destination's viewpoint, so full dissemination counts the whole
    population at every cell.
    """
    L = topology.num_cells
    total = 0.0
    for l in range(L):
        sets = topology.destination_client_sets(l)
        total += sum(len(ids) for j, ids in enumerate(sets) if participation[j, l])
    return total / L


def table2_metric(participations: list[np.ndarray], topology: Topology) -> float:
    """Average clients aggregated per cell across a run's rounds."""
    if not participations:
        raise ConfigError("need at least one round")
    return float(
        np.mean([avg_clients_aggregated(p, topology) for p in participations])
    )
