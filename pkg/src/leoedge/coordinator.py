"""Epoch loop: propagate, build topology, diff, decide activity, assign hosts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import geo
from .bbox import ACTIVE, SUSPENDED, activity_plan, activity_samples
from .config import EmulationConfig
from .constellation import NodeId, ground_links, segment_clearance
from .errors import AssignmentError
from .netgraph import (
    ADDED,
    DEFAULT_SUPPRESS_US,
    LinkDiff,
    LinkState,
    TopologySnapshot,
    apply_diff,
    diff_snapshots,
    floyd_warshall,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochUpdate:
    """What the coordinator sends every host agent for one epoch.

    A full update carries the complete link table in ``links`` and the
    complete activity plan; later updates carry only ``diffs`` and the
    machines whose activity changed.
    """

    epoch: float
    diffs: tuple[LinkDiff, ...] = ()
    activity: tuple[tuple[NodeId, str], ...] = ()
    full: bool = False
    links: tuple[LinkState, ...] = ()

    def link_entries(self) -> tuple[LinkDiff, ...]:
        """Link payload in diff form; a full update lists every link as added."""
        if self.full:
            return tuple(LinkDiff(l.a, l.b, ADDED, l.latency_us, l.bandwidth_kbps, l.blocked) for l in self.links)
        return self.diffs


def compute_snapshot(config: EmulationConfig, t: float, clock_offset: float = 0.0, killed=()) -> TopologySnapshot:
    """Geometric topology at elapsed time ``t`` (no diff suppression)."""
    con = config.constellation
    tg = t + clock_offset
    sat_pos = con.sat_positions(tg)
    gst_pos = con.gst_positions(tg)
    positions = np.concatenate([sat_pos, gst_pos]) if len(gst_pos) else sat_pos
    nodes = con.nodes
    killed = set(killed)

    links: dict = {}
    pairs = con.isl_pairs
    if len(pairs):
        a, b = sat_pos[pairs[:, 0]], sat_pos[pairs[:, 1]]
        thresh = geo.EARTH_RADIUS + np.array([sh.min_isl_altitude_km * 1000.0 for sh in con.shells])[con.isl_shell]
        visible = segment_clearance(a, b) >= thresh
        dist = np.linalg.norm(a - b, axis=1)
        lat = np.floor(dist / geo.C_VACUUM * 1e6 + 0.5).astype(np.int64)
        bw = [sh.isl_bandwidth_kbps for sh in con.shells]
        for k in np.flatnonzero(visible):
            u, v = nodes[pairs[k, 0]], nodes[pairs[k, 1]]
            links[(u, v)] = LinkState(u, v, int(lat[k]), bw[con.isl_shell[k]], u in killed or v in killed)

    for gi, g in enumerate(con.gsts):
        gnode = nodes[con.n_sats + gi]
        for gl in ground_links(g, gst_pos[gi], sat_pos):
            s = nodes[gl.sat]
            lat_us = int(np.floor(gl.distance_m / geo.C_VACUUM * 1e6 + 0.5))
            links[(s, gnode)] = LinkState(s, gnode, lat_us, g.uplink_bandwidth_kbps, s in killed or gnode in killed)

    return TopologySnapshot(float(t), nodes, positions, links, clock_offset)


class Coordinator:
    """Single writer of the epoch sequence.

    Published snapshots are sticky: a link's latency is only updated once it
    drifts by ``suppress_us`` or more from the last published value, so the
    update stream folds back into exactly the published snapshots and no
    sub-resolution churn reaches the agents.
    """

    def __init__(self, config: EmulationConfig, *, clock_offset: float = 0.0, suppress_us: int = DEFAULT_SUPPRESS_US):
        self.config = config
        self.clock_offset = float(clock_offset)
        self.suppress_us = suppress_us
        self.snapshot: TopologySnapshot | None = None
        self.plan: dict | None = None
        self.killed: set[NodeId] = set()
        self.index = 0
        self._all_pairs = None

    @property
    def next_epoch(self) -> float:
        return self.index * self.config.update_interval_s

    def set_killed(self, node: NodeId, killed: bool = True):
        """Topology side of fault injection; takes effect at the next step."""
        if killed:
            self.killed.add(node)
        else:
            self.killed.discard(node)

    def step(self) -> tuple[EpochUpdate, TopologySnapshot]:
        epoch = self.next_epoch
        raw = compute_snapshot(self.config, epoch, self.clock_offset, self.killed)
        plan = activity_plan(raw, self.config.bbox)

        if self.snapshot is None:
            snap = raw
            update = EpochUpdate(
                epoch=epoch,
                full=True,
                links=tuple(snap.sorted_links()),
                activity=tuple(sorted(plan.items())),
            )
        else:
            diffs = diff_snapshots(self.snapshot, raw, self.suppress_us)
            snap = apply_diff(self.snapshot, diffs, epoch=epoch, positions=raw.positions)
            changes = tuple((n, s) for n, s in sorted(plan.items()) if self.plan[n] != s)
            update = EpochUpdate(epoch=epoch, diffs=tuple(diffs), activity=changes)

        self.snapshot = snap
        self.plan = plan
        self._all_pairs = None
        self.index += 1
        return update, snap

    def full_update(self) -> EpochUpdate:
        """Self-contained update for the current epoch, sent to agents that lost sync."""
        if self.snapshot is None:
            raise ValueError("no epoch computed yet")
        return EpochUpdate(
            epoch=self.snapshot.epoch,
            full=True,
            links=tuple(self.snapshot.sorted_links()),
            activity=tuple(sorted(self.plan.items())),
        )

    def all_pairs(self):
        """Floyd-Warshall over the current snapshot, computed on first use per epoch."""
        if self._all_pairs is None and self.snapshot is not None:
            self._all_pairs = floyd_warshall(self.snapshot)
        return self._all_pairs


def step(state: Coordinator) -> tuple[EpochUpdate, TopologySnapshot]:
    return state.step()


@dataclass
class HostAssignment:
    hosts: list[str]
    host_of: dict[NodeId, int] = field(default_factory=dict)
    peak_vcpus: list[int] = field(default_factory=list)
    peak_memory_mb: list[int] = field(default_factory=list)

    def machines_on(self, host: int) -> list[NodeId]:
        return sorted(n for n, h in self.host_of.items() if h == host)

    def __getitem__(self, node: NodeId) -> int:
        return self.host_of[node]


def assign_machines(config: EmulationConfig, *, allow_overprovision: bool = False, clock_offset: float = 0.0) -> HostAssignment:
    """Round-robin placement in NodeId order; each colocation group is one slot.

    Host load is the peak simultaneous demand of the machines placed on it,
    sampled like the resource estimator (suspended satellites free their
    share). Exceeding a host's capacity is an error unless
    ``allow_overprovision`` is set.
    """
    hosts = list(config.hosts)
    if not hosts:
        raise AssignmentError("no hosts configured")
    con = config.constellation

    groups = config.colocation_groups
    group_of = {n: gi for gi, g in enumerate(groups) for n in g}
    for g in groups:
        cpu = sum(config.machine_resources(n).vcpus for n in g)
        mem = sum(config.machine_resources(n).memory_mb for n in g)
        if not any(cpu <= h.vcpus and mem <= h.memory_mb for h in hosts):
            raise AssignmentError(
                f"colocation group {[n.render() for n in g]} needs {cpu} vcpus / {mem} MB, more than any single host"
            )

    host_of: dict[NodeId, int] = {}
    slot = 0
    for node in con.nodes:
        if node in host_of:
            continue
        members = groups[group_of[node]] if node in group_of else [node]
        h = slot % len(hosts)
        for m in members:
            host_of[m] = h
        slot += 1

    owner = np.array([host_of[n] for n in con.nodes[: con.n_sats]], dtype=np.int64)
    sat_cpu = np.array([config.machine_resources(n).vcpus for n in con.nodes[: con.n_sats]], dtype=np.int64)
    sat_mem = np.array([config.machine_resources(n).memory_mb for n in con.nodes[: con.n_sats]], dtype=np.int64)
    base_cpu = np.zeros(len(hosts), dtype=np.int64)
    base_mem = np.zeros(len(hosts), dtype=np.int64)
    for n in con.nodes[con.n_sats:]:
        base_cpu[host_of[n]] += config.machine_resources(n).vcpus
        base_mem[host_of[n]] += config.machine_resources(n).memory_mb

    peak_cpu = base_cpu.copy()
    peak_mem = base_mem.copy()
    if con.n_sats:
        for mask in activity_samples(con, config.bbox, config.update_interval_s, clock_offset):
            cpu = base_cpu + np.bincount(owner[mask], weights=sat_cpu[mask], minlength=len(hosts)).astype(np.int64)
            mem = base_mem + np.bincount(owner[mask], weights=sat_mem[mask], minlength=len(hosts)).astype(np.int64)
            np.maximum(peak_cpu, cpu, out=peak_cpu)
            np.maximum(peak_mem, mem, out=peak_mem)

    over = [
        f"host {h.name!r}: peak {int(peak_cpu[i])} vcpus / {int(peak_mem[i])} MB exceeds {h.vcpus} / {h.memory_mb}"
        for i, h in enumerate(hosts)
        if peak_cpu[i] > h.vcpus or peak_mem[i] > h.memory_mb
    ]
    if over:
        if not allow_overprovision:
            raise AssignmentError("; ".join(over))
        for msg in over:
            log.warning("over-provisioned %s", msg)

    return HostAssignment(
        hosts=[h.name for h in hosts],
        host_of=host_of,
        peak_vcpus=[int(x) for x in peak_cpu],
        peak_memory_mb=[int(x) for x in peak_mem],
    )


def host_base_latency(config: EmulationConfig, h1: int, h2: int) -> int:
    """Measured latency between two hosts; zero on the same host."""
    if h1 == h2:
        return 0
    return max(config.hosts[h1].base_latency_us, config.hosts[h2].base_latency_us)


__all__ = [
    "ACTIVE",
    "SUSPENDED",
    "Coordinator",
    "EpochUpdate",
    "HostAssignment",
    "assign_machines",
    "compute_snapshot",
    "host_base_latency",
    "step",
]
