"""Desk-scale learning tasks with checkable structure.

Both tasks evaluate losses and gradients against a client's label
distribution, so the same federated pipeline drives a quadratic problem
with a closed-form optimum and a softmax classifier over finite per-class
sample banks.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .topology import Topology


def global_label_distribution(topology: Topology) -> np.ndarray:
    """Volume-weighted mixture of all client label distributions."""
    acc = None
    for c in topology.clients:
        if c.label_distribution is None:
            raise ConfigError("clients have no label distributions; partition first")
        term = c.data_volume * c.label_distribution
        acc = term if acc is None else acc + term
    return acc / topology.total_volume


@dataclass(frozen=True)
class QuadraticTask:
    """Mixture of squared distances to per-class target centers.

    Loss for distribution P: sum_i P_i * 0.5 ||w - mu_i||^2. The optimum of
    any mixture is the mixed center, so every convergence claim has a
    closed-form reference.
    """

    centers: np.ndarray  # (C, d)
    gradient_noise: float = 0.0
    init_scale: float = 1.0

    @property
    def dimension(self) -> int:
        return int(self.centers.shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.centers.shape[0])

    @staticmethod
    def with_basis_centers(
        num_classes: int,
        dimension: int | None = None,
        scale: float = 1.0,
        gradient_noise: float = 0.0,
        init_scale: float = 1.0,
    ) -> "QuadraticTask":
        d = num_classes if dimension is None else dimension
        centers = np.zeros((num_classes, d))
        for i in range(num_classes):
            centers[i, i % d] = scale
        return QuadraticTask(
            centers=centers, gradient_noise=gradient_noise, init_scale=init_scale
        )

    def loss(self, w: np.ndarray, dist: np.ndarray) -> float:
        diffs = w[None, :] - self.centers
        return float(np.dot(dist, 0.5 * np.sum(diffs * diffs, axis=1)))

    def gradient(self, w: np.ndarray, dist: np.ndarray) -> np.ndarray:
        return w - dist @ self.centers

    def batch_gradient(
        self, w: np.ndarray, dist: np.ndarray, batch_size: int, rng: np.random.Generator
    ) -> np.ndarray:
        g = self.gradient(w, dist)
        if self.gradient_noise > 0.0:
            g = g + self.gradient_noise * rng.standard_normal(self.dimension)
        return g

    def optimum(self, dist: np.ndarray) -> np.ndarray:
        return dist @ self.centers

    def init_model(self, rng: np.random.Generator) -> np.ndarray:
        return self.init_scale * rng.standard_normal(self.dimension)


@dataclass(frozen=True)
class ClassificationTask:
    """Linear softmax over fixed per-class sample banks, cross-entropy loss.

    The model is a flat vector packing a (C, m) weight matrix and a bias of
    length C. Per-class banks make the population finite, so the exact
    class-weighted gradient is a full-bank average and mini-batches are
    draws from the banks.
    """

    banks: tuple[np.ndarray, ...]  # per class: (n_i, m) features
    init_scale: float = 0.01

    def __post_init__(self) -> None:
        if not self.banks:
            raise ConfigError("classification task needs at least one class bank")
        m = self.banks[0].shape[1]
        if any(b.ndim != 2 or b.shape[1] != m or b.shape[0] == 0 for b in self.banks):
            raise ConfigError("class banks must be nonempty with equal feature width")

    @property
    def num_classes(self) -> int:
        return len(self.banks)

    @property
    def num_features(self) -> int:
        return int(self.banks[0].shape[1])

    @property
    def dimension(self) -> int:
        return self.num_classes * (self.num_features + 1)

    @staticmethod
    def synthetic(
        num_classes: int,
        num_features: int,
        rng: np.random.Generator,
        samples_per_class: int = 40,
        center_spread: float = 2.0,
        noise: float = 0.6,
    ) -> "ClassificationTask":
        centers = center_spread * rng.standard_normal((num_classes, num_features))
        banks = tuple(
            centers[i] + noise * rng.standard_normal((samples_per_class, num_features))
            for i in range(num_classes)
        )
        return ClassificationTask(banks=banks)

    def _unpack(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        C, m = self.num_classes, self.num_features
        return w[: C * m].reshape(C, m), w[C * m :]

    def _log_probs(self, weights: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
        logits = x @ weights.T + bias[None, :]
        logits -= logits.max(axis=1, keepdims=True)
        return logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))

    def loss(self, w: np.ndarray, dist: np.ndarray) -> float:
        weights, bias = self._unpack(w)
        total = 0.0
        for i, bank in enumerate(self.banks):
            if dist[i] == 0.0:
                continue
            lp = self._log_probs(weights, bias, bank)
            total += dist[i] * float(-lp[:, i].mean())
        return total

    def _grad_on(self, w: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        weights, bias = self._unpack(w)
        probs = np.exp(self._log_probs(weights, bias, xs))
        probs[np.arange(xs.shape[0]), ys] -= 1.0
        gw = probs.T @ xs / xs.shape[0]
        gb = probs.mean(axis=0)
        return np.concatenate([gw.ravel(), gb])

    def gradient(self, w: np.ndarray, dist: np.ndarray) -> np.ndarray:
        g = np.zeros(self.dimension)
        for i, bank in enumerate(self.banks):
            if dist[i] == 0.0:
                continue
            ys = np.full(bank.shape[0], i)
            g += dist[i] * self._grad_on(w, bank, ys)
        return g

    def batch_gradient(
        self, w: np.ndarray, dist: np.ndarray, batch_size: int, rng: np.random.Generator
    ) -> np.ndarray:
        classes = rng.choice(self.num_classes, size=batch_size, p=dist)
        xs = np.empty((batch_size, self.num_features))
        for b, cls in enumerate(classes):
            bank = self.banks[cls]
            xs[b] = bank[rng.integers(bank.shape[0])]
        return self._grad_on(w, xs, classes)

    def optimum(self, dist: np.ndarray) -> None:
        return None  # no closed form

    def accuracy(self, w: np.ndarray, dist: np.ndarray) -> float:
        weights, bias = self._unpack(w)
        correct = 0.0
        for i, bank in enumerate(self.banks):
            if dist[i] == 0.0:
                continue
            pred = (bank @ weights.T + bias[None, :]).argmax(axis=1)
            correct += dist[i] * float((pred == i).mean())
        return correct

    def init_model(self, rng: np.random.Generator) -> np.ndarray:
        return self.init_scale * rng.standard_normal(self.dimension)


def quadratic_global_optimum(task: QuadraticTask, topology: Topology) -> np.ndarray:
    """Closed-form minimizer of the population loss."""
    return task.optimum(global_label_distribution(topology))


def evaluate_global_loss(w: np.ndarray, task, topology: Topology) -> float:
    """Population loss: volume-weighted average of per-client losses."""
    total = 0.0
    for c in topology.clients:
        total += c.data_volume * task.loss(w, c.label_distribution)
    return total / topology.total_volume


def load_dataset_task(path: str | Path) -> ClassificationTask:
    """Build a classification task from an external dataset file.

    Accepted formats: ``.npz`` with arrays ``features`` (n, m) and
    ``labels`` (n,), or headerless ``.csv`` whose last column is the
    integer label. Rows are grouped into per-class banks; classes are the
    sorted distinct labels and must be 0..C-1.
    """
    path = Path(path)
    if path.suffix == ".npz":
        data = np.load(path)
        feats, labels = np.asarray(data["features"], dtype=float), np.asarray(data["labels"])
    elif path.suffix == ".csv":
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
        feats, labels = raw[:, :-1], raw[:, -1]
    else:
        raise ConfigError(f"dataset {path.name}: expected .npz or .csv")
    labels = labels.astype(int)
    classes = np.unique(labels)
    if not np.array_equal(classes, np.arange(classes.size)):
        raise ConfigError("dataset labels must be 0..C-1 with every class present")
    banks = tuple(feats[labels == i] for i in classes)
    return ClassificationTask(banks=banks)
