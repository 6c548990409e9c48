"""Chain-of-cells geometry, client placement, roles and label partitioning.

A deployment is a row of L circular cells whose adjacent discs intersect in
lens-shaped overlap regions. Clients inside exactly one disc are local
clients (LC); clients inside a lens are overlapping clients, of which
exactly one per lens is designated the relay (ROC) and the rest are normal
overlapping clients (NOC).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, EmptyRegion

LC = "LC"
NOC = "NOC"
ROC = "ROC"


@dataclass(frozen=True)
class TopologyConfig:
    num_cells: int
    num_clients: int
    cell_radius_m: float = 600.0
    cell_spacing_m: float | None = None  # default: one radius between centers
    samples_per_client: int = 100
    sample_overrides: dict[int, int] = field(default_factory=dict)
    epoch_time_range_s: tuple[float, float] = (0.1, 0.2)
    epoch_time_constant_s: float | None = None
    max_placement_retries: int = 100

    @property
    def spacing(self) -> float:
        return self.cell_radius_m if self.cell_spacing_m is None else self.cell_spacing_m

    def validate(self) -> None:
        if self.num_cells < 1:
            raise ConfigError("topology.num_cells: must be >= 1")
        if self.num_clients < self.num_cells:
            raise ConfigError("topology.num_clients: must be >= num_cells")
        if self.cell_radius_m <= 0:
            raise ConfigError("topology.cell_radius_m: must be positive")
        if self.samples_per_client < 1:
            raise ConfigError("topology.samples_per_client: must be >= 1")
        lo, hi = self.epoch_time_range_s
        if not (0 < lo <= hi):
            raise ConfigError("topology.epoch_time_range_s: need 0 < lo <= hi")
        if self.num_cells >= 2:
            s = self.spacing
            if not (s < 2.0 * self.cell_radius_m):
                raise ConfigError(
                    "topology.cell_spacing_m: adjacent discs must overlap "
                    "(spacing < 2*radius)"
                )
            if s < self.cell_radius_m:
                raise ConfigError(
                    "topology.cell_spacing_m: spacing < radius would let three "
                    "discs share area; the chain model allows two"
                )


@dataclass(frozen=True)
class PartitionConfig:
    num_classes: int = 10
    classes_per_cell: int = 5
    classes_per_client: int = 2

    def validate(self) -> None:
        if self.num_classes < 1:
            raise ConfigError("partition.num_classes: must be >= 1")
        if not (1 <= self.classes_per_cell <= self.num_classes):
            raise ConfigError("partition.classes_per_cell: must be in [1, num_classes]")
        if not (1 <= self.classes_per_client <= self.classes_per_cell):
            raise ConfigError(
                "partition.classes_per_client: must be in [1, classes_per_cell]"
            )


@dataclass(frozen=True)
class CellLayout:
    num_cells: int
    radius_m: float
    centers: np.ndarray  # (L, 2) meters

    def overlap_pairs(self) -> list[tuple[int, int]]:
        return [(l, l + 1) for l in range(self.num_cells - 1)]

    def covering_cells(self, position: np.ndarray) -> list[int]:
        d = np.linalg.norm(self.centers - position[None, :], axis=1)
        return [int(l) for l in np.nonzero(d <= self.radius_m)[0]]


@dataclass
class ClientProfile:
    id: int
    position: np.ndarray  # (2,) meters
    role: str
    covering_cells: tuple[int, ...]
    home_cell: int
    data_volume: int
    epoch_time: float
    label_distribution: np.ndarray | None = None


@dataclass
class Topology:
    layout: CellLayout
    clients: list[ClientProfile]
    roc_of: dict[tuple[int, int], int]  # (l, l+1) -> client id
    uploader_sets: list[list[int]]  # S_l: client ids uploading to ES l
    total_volume: int

    @property
    def num_cells(self) -> int:
        return self.layout.num_cells

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    def client(self, cid: int) -> ClientProfile:
        return self.clients[cid]

    def covered_client_ids(self, cell: int) -> list[int]:
        return [c.id for c in self.clients if cell in c.covering_cells]

    def roc_right_of(self, cell: int) -> int | None:
        """Id of the relay client in the lens between ``cell`` and ``cell+1``."""
        return self.roc_of.get((cell, cell + 1))

    def hat_client_sets(self) -> list[list[int]]:
        """Per-cell client sets under the left-cell relay convention.

        Cell l owns its uploaders plus the relay client of the lens on its
        right; the last cell owns only its uploaders. The union partitions
        the full client population.
        """
        sets = []
        for l in range(self.num_cells):
            ids = list(self.uploader_sets[l])
            roc = self.roc_right_of(l)
            if roc is not None:
                ids.append(roc)
            sets.append(sorted(ids))
        return sets

    def hat_volumes(self) -> np.ndarray:
        """Per-cell data volumes for the left-convention client sets."""
        return np.array(
            [sum(self.clients[k].data_volume for k in ids) for ids in self.hat_client_sets()],
            dtype=float,
        )

    def destination_client_sets(self, dest: int) -> list[list[int]]:
        """Per-cell client sets as seen from aggregation at ES ``dest``.

        Cells left of the destination carry their right-lens relay client,
        cells right of it carry their left-lens relay client, and the
        destination cell carries only its own uploaders.
        """
        sets = []
        for j in range(self.num_cells):
            ids = list(self.uploader_sets[j])
            if j < dest:
                roc = self.roc_of.get((j, j + 1))
                if roc is not None:
                    ids.append(roc)
            elif j > dest:
                roc = self.roc_of.get((j - 1, j))
                if roc is not None:
                    ids.append(roc)
            sets.append(sorted(ids))
        return sets

    def to_json_dict(self) -> dict:
        return {
            "num_cells": self.num_cells,
            "radius_m": float(self.layout.radius_m),
            "centers": [[float(x) for x in c] for c in self.layout.centers],
            "clients": [
                {
                    "id": c.id,
                    "position": [float(x) for x in c.position],
                    "role": c.role,
                    "covering_cells": list(c.covering_cells),
                    "home_cell": c.home_cell,
                    "data_volume": c.data_volume,
                    "epoch_time": float(c.epoch_time),
                    "label_distribution": None
                    if c.label_distribution is None
                    else [float(p) for p in c.label_distribution],
                }
                for c in self.clients
            ],
            "roc_of": {f"{a},{b}": cid for (a, b), cid in sorted(self.roc_of.items())},
            "uploader_sets": [list(s) for s in self.uploader_sets],
            "total_volume": self.total_volume,
        }


def select_roc(region_clients: list[ClientProfile], centers: np.ndarray) -> int:
    """Pick the relay client for one lens.

    Chooses the client minimizing the larger of its distances to the two
    adjacent cell centers, so neither relay hop is left with a weak link.
    Ties break toward the lowest client id.
    """
    if not region_clients:
        raise EmptyRegion("no client inside the overlap region")
    best_id = -1
    best_key = None
    for c in region_clients:
        worst = max(float(np.linalg.norm(c.position - centers[0])),
                    float(np.linalg.norm(c.position - centers[1])))
        key = (worst, c.id)
        if best_key is None or key < best_key:
            best_key = key
            best_id = c.id
    return best_id


def assign_home_cells(topology: Topology) -> Topology:
    """Set each client's participating server.

    LCs keep their covering cell, NOCs take the nearest of their two
    covering centers (lower index on ties), and relay clients are booked to
    the left cell of their lens. The relay booking feeds diagnostics only;
    it does not place them in any uploader set.
    """
    centers = topology.layout.centers
    clients = []
    for c in topology.clients:
        if c.role == LC:
            home = c.covering_cells[0]
        elif c.role == NOC:
            a, b = c.covering_cells
            da = float(np.linalg.norm(c.position - centers[a]))
            db = float(np.linalg.norm(c.position - centers[b]))
            home = a if da <= db else b
        else:
            home = c.covering_cells[0]  # left cell of the lens
        clients.append(replace(c, home_cell=home))
    return replace(topology, clients=clients)


def _sample_positions(layout: CellLayout, n: int, rng: np.random.Generator) -> np.ndarray:
    r = layout.radius_m
    lo_x = float(layout.centers[:, 0].min()) - r
    hi_x = float(layout.centers[:, 0].max()) + r
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        cand = np.column_stack(
            [rng.uniform(lo_x, hi_x, size=n), rng.uniform(-r, r, size=n)]
        )
        d = np.linalg.norm(cand[:, None, :] - layout.centers[None, :, :], axis=2)
        ok = (d <= r).any(axis=1)
        take = cand[ok][: n - filled]
        out[filled : filled + take.shape[0]] = take
        filled += take.shape[0]
    return out


def assemble_topology(
    layout: CellLayout,
    positions: np.ndarray,
    data_volumes: list[int],
    epoch_times: list[float],
) -> Topology:
    """Build a full topology from explicit client positions.

    Raises EmptyRegion when some lens holds no client and ConfigError when
    a client is covered by more than two discs or a cell gets no uploader.
    """
    L = layout.num_cells
    covering = [layout.covering_cells(p) for p in positions]
    if any(len(c) > 2 for c in covering):
        raise ConfigError("a client is covered by more than two cells")
    for l in range(L - 1):
        if not any(cs == [l, l + 1] for cs in covering):
            raise EmptyRegion(f"no client in the overlap of cells {l} and {l + 1}")

    clients = []
    for k, pos in enumerate(positions):
        cov = covering[k]
        clients.append(
            ClientProfile(
                id=k,
                position=np.asarray(pos, dtype=float),
                role=LC if len(cov) == 1 else NOC,
                covering_cells=tuple(cov),
                home_cell=cov[0],
                data_volume=int(data_volumes[k]),
                epoch_time=float(epoch_times[k]),
            )
        )

    roc_of: dict[tuple[int, int], int] = {}
    for l in range(L - 1):
        region = [c for c in clients if c.covering_cells == (l, l + 1)]
        rid = select_roc(region, layout.centers[[l, l + 1]])
        clients[rid].role = ROC
        roc_of[(l, l + 1)] = rid

    topo = Topology(
        layout=layout,
        clients=clients,
        roc_of=roc_of,
        uploader_sets=[],
        total_volume=sum(c.data_volume for c in clients),
    )
    topo = assign_home_cells(topo)
    topo.uploader_sets = [
        sorted(c.id for c in topo.clients if c.home_cell == l and c.role != ROC)
        for l in range(L)
    ]
    if any(not s for s in topo.uploader_sets):
        raise ConfigError("a cell ended up with no uploaders")
    return topo


def build_chain_topology(cfg: TopologyConfig, rng: np.random.Generator) -> Topology:
    """Place clients uniformly over the union of discs and assign all roles.

    The whole placement is redrawn (up to ``cfg.max_placement_retries``
    times) whenever some lens or uploader set ends up empty, which keeps
    the accepted placement uniform conditioned on those constraints.
    Deterministic given (cfg, rng state).
    """
    cfg.validate()
    L, K, r = cfg.num_cells, cfg.num_clients, cfg.cell_radius_m
    centers = np.column_stack([np.arange(L) * cfg.spacing, np.zeros(L)])
    layout = CellLayout(num_cells=L, radius_m=r, centers=centers)

    epoch_times = (
        np.full(K, cfg.epoch_time_constant_s)
        if cfg.epoch_time_constant_s is not None
        else rng.uniform(*cfg.epoch_time_range_s, size=K)
    )

    volumes = [int(cfg.sample_overrides.get(k, cfg.samples_per_client)) for k in range(K)]
    for _ in range(cfg.max_placement_retries):
        positions = _sample_positions(layout, K, rng)
        try:
            return assemble_topology(layout, positions, volumes, list(epoch_times))
        except (EmptyRegion, ConfigError):
            continue
    raise ConfigError(
        "topology: placement constraints unmet after "
        f"{cfg.max_placement_retries} attempts; add clients or widen the overlaps"
    )


def partition_labels(
    cfg: PartitionConfig, topology: Topology, rng: np.random.Generator
) -> tuple[Topology, list[list[int]]]:
    """Assign non-IID label distributions cell by cell.

    Each cell draws ``classes_per_cell`` classes without replacement; each
    of its clients (by participating server, relay clients via their left
    cell) receives ``classes_per_client`` of those with equal mass.
    Returns the updated topology and the per-cell class sets.
    """
    cfg.validate()
    C = cfg.num_classes
    cell_classes = [
        sorted(rng.choice(C, size=cfg.classes_per_cell, replace=False).tolist())
        for _ in range(topology.num_cells)
    ]
    clients = []
    for c in topology.clients:
        pool = cell_classes[c.home_cell]
        chosen = rng.choice(pool, size=cfg.classes_per_client, replace=False)
        dist = np.zeros(C)
        dist[np.asarray(chosen, dtype=int)] = 1.0 / cfg.classes_per_client
        clients.append(replace(c, label_distribution=dist))
    return replace(topology, clients=clients), cell_classes
