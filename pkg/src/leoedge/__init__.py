"""Desk-scale emulation of LEO satellite edge constellations."""

from .config import EmulationConfig, load_config, parse_config
from .constellation import GroundStationConfig, NodeId, ShellConfig
from .coordinator import Coordinator, EpochUpdate, assign_machines, compute_snapshot
from .netgraph import PathResult, TopologySnapshot, dijkstra, floyd_warshall

__version__ = "0.1.0"

__all__ = [
    "Coordinator",
    "EmulationConfig",
    "EpochUpdate",
    "GroundStationConfig",
    "NodeId",
    "PathResult",
    "ShellConfig",
    "TopologySnapshot",
    "assign_machines",
    "compute_snapshot",
    "dijkstra",
    "floyd_warshall",
    "load_config",
    "parse_config",
]
