"""In-process testbed: one coordinator driving one agent per host."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .bbox import ACTIVE
from .config import EmulationConfig, HostConfig
from .coordinator import Coordinator, EpochUpdate, assign_machines
from .errors import ProtocolError
from .geo import eci_to_geodetic
from .agent import HostAgent, TraceBackend
from .infoapi import SnapshotHolder
from .naming import AddressBook
from .netgraph import TopologySnapshot
from .wire import canonical_json, decode_update, encode_update

log = logging.getLogger(__name__)

LOCAL_HOST = HostConfig("local", 1 << 30, 1 << 40, 0)


def snapshot_document(snap: TopologySnapshot, plan: dict) -> dict:
    """Per-epoch snapshot file contents."""
    t = snap.epoch + snap.clock_offset
    geod = eci_to_geodetic(snap.positions, t) if len(snap.nodes) else []
    nodes = []
    for i, n in enumerate(snap.nodes):
        lat, lon, alt = geod[i]
        x, y, z = snap.positions[i]
        nodes.append({
            "kind": n.kind,
            "shell": n.shell if n.is_satellite else None,
            "id": n.id,
            "name": n.render(),
            "lat_deg": round(float(lat), 6),
            "lon_deg": round(float(lon), 6),
            "alt_m": round(float(alt), 3),
            "eci_m": [round(float(x), 3), round(float(y), 3), round(float(z), 3)],
            "active": plan.get(n) == ACTIVE,
        })
    return {"epoch_s": snap.epoch, "nodes": nodes, "links": link_records(snap)}


def link_records(snap: TopologySnapshot) -> list[dict]:
    return [
        {
            "a": l.a.render(),
            "b": l.b.render(),
            "latency_us": int(l.latency_us),
            "bandwidth_kbps": l.bandwidth_kbps,
            "blocked": l.blocked,
        }
        for l in snap.sorted_links()
    ]


@dataclass
class RunReport:
    epochs: int
    wall_time_s: float
    step_durations_s: list[float]
    peak_active_machines: int
    outputs: dict = field(default_factory=dict)
    warnings: int = 0

    # fields that depend on the wall clock and are excluded from determinism checks
    WALL_FIELDS = ("wall_time_s", "step_durations_s")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "wall_time_s": self.wall_time_s,
            "step_durations_s": self.step_durations_s,
            "peak_active_machines": self.peak_active_machines,
            "outputs": self.outputs,
            "warnings": self.warnings,
        }


class Testbed:
    """Coordinator, wire round-trip and trace-backend agents in one process.

    Updates pass through the binary wire format before reaching agents, so
    a run exercises exactly what a remote agent would receive.
    """

    __test__ = False  # not a pytest class

    def __init__(self, config: EmulationConfig, *, clock_offset: float = 0.0, trace_dir=None,
                 allow_overprovision: bool = True, write_snapshots: bool = True):
        if not config.hosts:
            config = EmulationConfig(
                config.update_interval_s, config.duration_s, config.shells, config.gsts,
                (LOCAL_HOST,), config.bbox, config.colocate,
            )
        self.config = config
        self.clock_offset = clock_offset
        self.trace_dir = Path(trace_dir) if trace_dir is not None else None
        self.write_snapshots = write_snapshots and self.trace_dir is not None
        self.assignment = assign_machines(config, allow_overprovision=allow_overprovision, clock_offset=clock_offset)
        self.addresses = AddressBook(config.constellation)
        self.coordinator = Coordinator(config, clock_offset=clock_offset)
        self.holder = SnapshotHolder()
        self.agents = []
        for h, host in enumerate(config.hosts):
            path = self.trace_dir / "hosts" / f"{host.name}.log" if self.trace_dir is not None else None
            self.agents.append(HostAgent.for_host(config, self.assignment, h, TraceBackend(path), self.addresses))
        self.updates: list[EpochUpdate] = []
        self.keep_updates = False
        self.peak_active = 0

    def agent_of(self, node) -> HostAgent:
        return self.agents[self.assignment[node]]

    def step(self) -> tuple[EpochUpdate, TopologySnapshot]:
        update, snap = self.coordinator.step()
        received = decode_update(encode_update(update), self.config.constellation)
        for agent in self.agents:
            try:
                agent.apply_update(received)
            except ProtocolError as e:
                log.warning("host %d out of sync (%s); sending full snapshot", agent.host, e)
                full = decode_update(encode_update(self.coordinator.full_update()), self.config.constellation)
                agent.apply_update(full)
        plan = self.coordinator.plan
        self.holder.publish(snap, plan)
        self.peak_active = max(self.peak_active, sum(1 for s in plan.values() if s == ACTIVE))
        if self.keep_updates:
            self.updates.append(update)
        if self.write_snapshots:
            d = self.trace_dir / "snapshots"
            d.mkdir(parents=True, exist_ok=True)
            (d / f"epoch-{self.coordinator.index - 1:06d}.json").write_bytes(
                canonical_json(snapshot_document(snap, plan)) + b"\n"
            )
        return update, snap

    def inject_fault(self, node, kind: str, fraction: float | None = None):
        """Route a fault to the owning agent; kills also block links topology-wide from the next epoch."""
        effect = self.agent_of(node).inject_fault(node, kind, fraction)
        if kind == "kill":
            self.coordinator.set_killed(node, True)
        elif kind == "reboot":
            self.coordinator.set_killed(node, False)
        return effect

    def run(self, epochs: int | None = None, realtime: bool = False) -> RunReport:
        epochs = self.config.epochs if epochs is None else epochs
        start = time.perf_counter()
        durations = []
        for k in range(epochs):
            t0 = time.perf_counter()
            self.step()
            durations.append(time.perf_counter() - t0)
            if realtime:
                deadline = start + (k + 1) * self.config.update_interval_s
                time.sleep(max(0.0, deadline - time.perf_counter()))
        wall = time.perf_counter() - start
        for agent in self.agents:
            agent.backend.close()
        outputs = {}
        if self.trace_dir is not None:
            outputs = {
                "hosts": sorted(f"hosts/{h.name}.log" for h in self.config.hosts),
                "snapshots": "snapshots" if self.write_snapshots else None,
            }
        report = RunReport(
            epochs=epochs,
            wall_time_s=wall,
            step_durations_s=durations,
            peak_active_machines=self.peak_active,
            outputs=outputs,
            warnings=sum(len(a.warnings) for a in self.agents),
        )
        if self.trace_dir is not None:
            self.trace_dir.mkdir(parents=True, exist_ok=True)
            (self.trace_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        return report
