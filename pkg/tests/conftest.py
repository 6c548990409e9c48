import numpy as np
import pytest

from relayfl.channel import RoundTimings
from relayfl.topology import CellLayout, assemble_topology


def make_layout(num_cells: int, radius: float = 600.0, spacing: float | None = None) -> CellLayout:
    s = radius if spacing is None else spacing
    centers = np.column_stack([np.arange(num_cells) * s, np.zeros(num_cells)])
    return CellLayout(num_cells=num_cells, radius_m=radius, centers=centers)


def make_topology(
    num_cells: int,
    positions,
    radius: float = 600.0,
    spacing: float | None = None,
    volumes=None,
    epoch_times=None,
):
    """Topology from explicit positions; volumes/epochs default to 100 / 0.1."""
    layout = make_layout(num_cells, radius, spacing)
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    volumes = [100] * n if volumes is None else list(volumes)
    epoch_times = [0.1] * n if epoch_times is None else list(epoch_times)
    return assemble_topology(layout, positions, volumes, epoch_times)


def chain_positions(num_cells: int, per_cell: int = 3, radius: float = 600.0,
                    spacing: float | None = None):
    """Deterministic positions: per_cell clients near each center, one per lens."""
    s = radius if spacing is None else spacing
    pts = []
    for l in range(num_cells):
        cx = l * s
        for i in range(per_cell):
            pts.append([cx + 10.0 * (i + 1), 15.0 * i - 10.0])
    for l in range(num_cells - 1):
        pts.append([l * s + s / 2.0, 0.0])  # lens midpoint
    return np.asarray(pts)


@pytest.fixture
def topo3():
    return make_topology(3, chain_positions(3))


def make_timings(ready, com_right=None, com_left=None, t_max=None, t_cast=None):
    """RoundTimings from plain lists; t_cast defaults to zero."""
    ready = np.asarray(ready, dtype=float)
    L = ready.shape[0]
    cast = np.zeros(L) if t_cast is None else np.asarray(t_cast, dtype=float)
    comp = ready - cast
    cr = np.asarray(com_right if com_right is not None else [0.1] * (L - 1), dtype=float)
    cl = np.asarray(com_left if com_left is not None else [0.1] * (L - 1), dtype=float)
    if t_max is None:
        t_max = 0.0
        for l in range(L):
            out = []
            if l < L - 1:
                out.append(cr[l])
            if l > 0:
                out.append(cl[l - 1])
            t_max = max(t_max, ready[l] + (max(out) if out else 0.0))
    return RoundTimings(t_cast=cast, t_comp=comp, t_com_right=cr, t_com_left=cl, t_max=float(t_max))
