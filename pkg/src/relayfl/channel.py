"""Wireless timing model: path loss, link gains and per-round event times.

Adjacent cells split the total band in half. Within a cell the half-band is
shared: broadcast uses all of it toward the worst covered client, uploads
split it evenly among that cell's uploaders. Relays between edge servers
run through the lens relay client at a bottleneck-hop gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .topology import Topology

DETERMINISTIC = "deterministic"
RAYLEIGH = "rayleigh"

# Clients may sit arbitrarily close to their server; the log-distance model
# needs a strictly positive range.
MIN_DISTANCE_KM = 1e-3


@dataclass(frozen=True)
class ChannelParams:
    bandwidth_hz: float = 50e6
    es_power_w: float = 5.0
    client_power_w: float = 1.0
    noise_psd_dbm_hz: float = -174.0
    model_size_bits: float = 21840 * 32
    pathloss_const_db: float = 128.1
    pathloss_slope_db: float = 37.6
    fading: str = DETERMINISTIC
    noise_psd_w_hz: float = field(init=False)

    def __post_init__(self) -> None:
        if min(self.bandwidth_hz, self.es_power_w, self.client_power_w) <= 0:
            raise ConfigError("channel: bandwidth and powers must be positive")
        if self.model_size_bits < 0:
            raise ConfigError("channel.model_size_bits: must be >= 0")
        if self.fading not in (DETERMINISTIC, RAYLEIGH):
            raise ConfigError(f"channel.fading: unknown mode {self.fading!r}")
        object.__setattr__(
            self, "noise_psd_w_hz", 10.0 ** ((self.noise_psd_dbm_hz - 30.0) / 10.0)
        )


@dataclass(frozen=True)
class RoundTimings:
    t_cast: np.ndarray  # (L,) seconds
    t_comp: np.ndarray  # (L,) seconds
    t_com_right: np.ndarray  # (L-1,) link l -> l+1
    t_com_left: np.ndarray  # (L-1,) link l+1 -> l
    t_max: float

    @property
    def num_cells(self) -> int:
        return int(self.t_cast.shape[0])

    def ready(self, cell: int) -> float:
        """Local readiness: broadcast plus compute-and-upload time."""
        return float(self.t_cast[cell] + self.t_comp[cell])

    def com(self, u: int, v: int) -> float:
        """Relay transmission time for the directed adjacent link u -> v."""
        if v == u + 1:
            return float(self.t_com_right[u])
        if v == u - 1:
            return float(self.t_com_left[v])
        raise DomainError(f"({u},{v}) is not an adjacent link")

    def to_json_dict(self) -> dict:
        return {
            "t_cast": [float(x) for x in self.t_cast],
            "t_comp": [float(x) for x in self.t_comp],
            "t_com_right": [float(x) for x in self.t_com_right],
            "t_com_left": [float(x) for x in self.t_com_left],
            "t_max": float(self.t_max),
        }


def path_loss_db(d_km: float, params: ChannelParams | None = None) -> float:
    """Log-distance path loss in dB at range ``d_km`` kilometers."""
    if d_km <= 0:
        raise DomainError(f"distance must be positive, got {d_km}")
    const = params.pathloss_const_db if params else 128.1
    slope = params.pathloss_slope_db if params else 37.6
    return const + slope * np.log10(d_km)


def fading_factor(params: ChannelParams, rng: np.random.Generator | None) -> float:
    if params.fading == DETERMINISTIC:
        return 1.0
    if rng is None:
        raise DomainError("rayleigh fading requires an RNG")
    # Rayleigh amplitude -> unit-mean exponential power.
    return float(rng.exponential(1.0))


def link_gain(
    d_km: float, params: ChannelParams, rng: np.random.Generator | None = None
) -> float:
    """Linear channel power gain at range ``d_km`` with small-scale fading."""
    return 10.0 ** (-path_loss_db(d_km, params) / 10.0) * fading_factor(params, rng)


def relay_link_time(gain: float, params: ChannelParams) -> float:
    """Seconds to push one model through an inter-server relay link."""
    if gain <= 0:
        raise DomainError(f"gain must be positive, got {gain}")
    b, n0 = params.bandwidth_hz, params.noise_psd_w_hz
    rate = (b / 4.0) * (
        np.log2(1.0 + 4.0 * gain * params.es_power_w / (b * n0))
        + np.log2(1.0 + 4.0 * gain * params.client_power_w / (b * n0))
    )
    if rate <= 0:
        raise DomainError("relay link has zero capacity")
    return float(params.model_size_bits / rate)


def _client_distance_km(topology: Topology, cid: int, cell: int) -> float:
    d = float(
        np.linalg.norm(topology.clients[cid].position - topology.layout.centers[cell])
    )
    return max(d / 1000.0, MIN_DISTANCE_KM)


def draw_fading(
    topology: Topology, params: ChannelParams, rng: np.random.Generator | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One block-fading draw per client and per directed server link.

    The draw count and order depend only on the topology, so every scheme
    sharing a seed consumes identical channel randomness.
    """
    K, L = topology.num_clients, topology.num_cells
    h_client = np.array([fading_factor(params, rng) for _ in range(K)])
    h_right = np.array([fading_factor(params, rng) for _ in range(L - 1)])
    h_left = np.array([fading_factor(params, rng) for _ in range(L - 1)])
    return h_client, h_right, h_left


def compute_round_timings(
    topology: Topology,
    params: ChannelParams,
    epochs: int,
    rng: np.random.Generator | None = None,
    uploader_sets: list[list[int]] | None = None,
    fading_draw: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    t_max_override: float | None = None,
) -> RoundTimings:
    """All event timings for one round.

    ``uploader_sets`` overrides the per-cell upload membership (baselines
    reinterpret it); a client listed under several cells is charged its
    uploads sequentially. ``t_max`` defaults to the slowest cell's
    readiness plus its slowest outgoing relay, i.e. the time an immediate
    one-hop relay everywhere would need.
    """
    L = topology.num_cells
    uploads = topology.uploader_sets if uploader_sets is None else uploader_sets
    if len(uploads) != L:
        raise ConfigError("uploader_sets must have one entry per cell")
    h_client, h_right, h_left = (
        fading_draw if fading_draw is not None else draw_fading(topology, params, rng)
    )
    b, n0 = params.bandwidth_hz, params.noise_psd_w_hz
    m = params.model_size_bits

    def gain_to_cell(cid: int, cell: int) -> float:
        pl = 10.0 ** (-path_loss_db(_client_distance_km(topology, cid, cell), params) / 10.0)
        return pl * float(h_client[cid])

    t_cast = np.zeros(L)
    for l in range(L):
        covered = topology.covered_client_ids(l)
        worst = 0.0
        for cid in covered:
            rate = (b / 2.0) * np.log2(
                1.0 + gain_to_cell(cid, l) * params.es_power_w * 2.0 / (b * n0)
            )
            worst = max(worst, m / rate)
        t_cast[l] = worst

    # Each client's total airtime: one upload per cell it reports to.
    upload_time: dict[int, float] = {}
    for l in range(L):
        share = b / (2.0 * max(len(uploads[l]), 1))
        for cid in uploads[l]:
            snr = gain_to_cell(cid, l) * params.client_power_w / (share * n0)
            rate = share * np.log2(1.0 + snr)
            upload_time[cid] = upload_time.get(cid, 0.0) + m / rate

    t_comp = np.zeros(L)
    for l in range(L):
        worst = 0.0
        for cid in uploads[l]:
            c = topology.clients[cid]
            worst = max(worst, epochs * c.epoch_time + upload_time[cid])
        t_comp[l] = worst

    t_com_right = np.zeros(max(L - 1, 0))
    t_com_left = np.zeros(max(L - 1, 0))
    for l in range(L - 1):
        roc = topology.roc_of.get((l, l + 1))
        if roc is None:
            raise ConfigError(f"no relay client between cells {l} and {l+1}")
        d_left = _client_distance_km(topology, roc, l)
        d_right = _client_distance_km(topology, roc, l + 1)
        pl = 10.0 ** (
            -max(path_loss_db(d_left, params), path_loss_db(d_right, params)) / 10.0
        )
        t_com_right[l] = relay_link_time(pl * float(h_right[l]), params)
        t_com_left[l] = relay_link_time(pl * float(h_left[l]), params)

    if t_max_override is not None:
        t_max = float(t_max_override)
    else:
        t_max = 0.0
        for l in range(L):
            out = [t_com_right[l]] if l < L - 1 else []
            if l > 0:
                out.append(t_com_left[l - 1])
            t_max = max(t_max, t_cast[l] + t_comp[l] + (max(out) if out else 0.0))

    return RoundTimings(
        t_cast=t_cast,
        t_comp=t_comp,
        t_com_right=t_com_right,
        t_com_left=t_com_left,
        t_max=t_max,
    )
