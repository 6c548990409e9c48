"""Multi-server federated learning simulator with latency-aware relay scheduling.

Edge servers on a chain of overlapping cells exchange models through
designated relay clients in the overlap regions. The package builds the
geometry, times every wireless event, schedules multi-hop relays against a
per-round deadline, runs the aggregation pipeline with exact algebraic
cross-checks, and compares the scheduled scheme against standard baselines
under identical randomness.
"""

from .baselines import FEDMES, FEDOC, FL_EOCD, HFL, PROPOSED, run_scheme
from .channel import ChannelParams, RoundTimings, compute_round_timings
from .config import ExperimentConfig, load_config
from .core import run_round
from .harness import compare_schemes, run_experiment, write_report
from .scheduler import exhaustive_oracle, fedoc_schedule, schedule_round
from .tasks import ClassificationTask, QuadraticTask
from .topology import PartitionConfig, Topology, TopologyConfig, build_chain_topology, partition_labels

__all__ = [
    "ChannelParams",
    "ClassificationTask",
    "ExperimentConfig",
    "FEDMES",
    "FEDOC",
    "FL_EOCD",
    "HFL",
    "PROPOSED",
    "PartitionConfig",
    "QuadraticTask",
    "RoundTimings",
    "Topology",
    "TopologyConfig",
    "build_chain_topology",
    "compare_schemes",
    "compute_round_timings",
    "exhaustive_oracle",
    "fedoc_schedule",
    "load_config",
    "partition_labels",
    "run_experiment",
    "run_round",
    "run_scheme",
    "schedule_round",
    "write_report",
]

__version__ = "0.1.0"
