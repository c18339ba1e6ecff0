"""Host agent: machine lifecycle and traffic-shaping command plans.

Each agent owns the machines placed on its host. It folds the coordinator's
EpochUpdates into a local link table and emits the shaping commands that
move its egress rules from their current state to the desired one. A rule
``link set <src> <dst>`` shapes traffic leaving ``src`` towards ``dst``, so
every host shapes the directions whose source it hosts.

Command syntax, one per line::

    link set <src> <dst> delay <D>ms rate <R>kbit
    link block <src> <dst>
    link unblock <src> <dst>
    machine <id> <boot|suspend|resume|kill>
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

from .bbox import ACTIVE, SUSPENDED
from .constellation import NodeId
from .errors import LifecycleError, ProtocolError, UnknownNodeError
from .netgraph import ADDED, apply_diff_to_links

log = logging.getLogger(__name__)

CREATED = "created"
KILLED = "killed"
STATES = (CREATED, ACTIVE, SUSPENDED, KILLED)
ACTIONS = ("boot", "suspend", "resume", "kill", "reboot")

TRANSITIONS = {
    (CREATED, "boot"): ACTIVE,
    (ACTIVE, "suspend"): SUSPENDED,
    (SUSPENDED, "resume"): ACTIVE,
    (ACTIVE, "kill"): KILLED,
    (SUSPENDED, "kill"): KILLED,
    (KILLED, "reboot"): ACTIVE,
}

# how each action shows up in the command log
_VERB = {"boot": "boot", "suspend": "suspend", "resume": "resume", "kill": "kill", "reboot": "boot"}


@dataclass
class MachineRecord:
    node: NodeId
    vcpus: int
    memory_mb: int
    address: str = ""
    state: str = CREATED
    vcpu_fraction: float = 1.0

    @property
    def allocated_vcpus(self) -> float:
        return self.vcpus * self.vcpu_fraction


def transition(machine: MachineRecord, action: str) -> str:
    """Apply a lifecycle action in place and return the new state."""
    try:
        new = TRANSITIONS[(machine.state, action)]
    except KeyError:
        raise LifecycleError(machine.state, action) from None
    machine.state = new
    return new


@dataclass(frozen=True)
class ShapingRule:
    source: NodeId
    target: NodeId
    delay_tenths_ms: int
    rate_kbps: int
    blocked: bool = False


def compensate_host_latency(target_us: float, base_us: float) -> tuple[float, bool]:
    """Delay to inject so that target latency includes the host-to-host base.

    Returns ``(emitted_us, warned)``; ``warned`` is true when the hosts are
    already further apart than the target allows.
    """
    if target_us < 0 or base_us < 0:
        raise ValueError("latencies must be non-negative")
    if base_us > target_us:
        return 0, True
    return target_us - base_us, False


def quantize_tenths(delay_us: float) -> int:
    """Half-up rounding to 0.1 ms."""
    return int((delay_us + 50) // 100)


def render_delay(tenths: int) -> str:
    return f"{tenths // 10}.{tenths % 10}ms"


def cmd_link_set(src: NodeId, dst: NodeId, tenths: int, rate_kbps: int) -> str:
    return f"link set {src.render()} {dst.render()} delay {render_delay(tenths)} rate {rate_kbps}kbit"


def cmd_link(verb: str, src: NodeId, dst: NodeId) -> str:
    return f"link {verb} {src.render()} {dst.render()}"


def cmd_machine(node: NodeId, verb: str) -> str:
    return f"machine {node.render()} {verb}"


class Backend:
    """Executes commands. Subclasses may drive real tc/netem and VMs."""

    def capabilities(self) -> set[str]:
        return set()

    def apply(self, epoch: float, command: str) -> None:
        raise NotImplementedError

    def resource_change(self, epoch: float, node: NodeId, vcpus: float) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class TraceBackend(Backend):
    """Records commands as ``<epoch> <command>`` lines instead of running them."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.lines: list[str] = []
        self.events: list[str] = []
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8", newline="\n")

    def capabilities(self) -> set[str]:
        return {"trace"}

    def apply(self, epoch, command):
        line = f"{epoch:.3f} {command}"
        self.lines.append(line)
        if self._fh:
            self._fh.write(line + "\n")

    def resource_change(self, epoch, node, vcpus):
        self.events.append(f"{epoch:.3f} resource {node.render()} vcpus {vcpus:g}")

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None
        if self.path is not None and self.events:
            self.path.with_suffix(".events").write_text("\n".join(self.events) + "\n", encoding="utf-8")


@dataclass
class FaultEffect:
    node: NodeId
    kind: str
    state: str
    vcpus: float
    commands: list[str] = field(default_factory=list)


class HostAgent:
    """Consumes updates for one host; serializes updates and faults on one lock."""

    def __init__(self, host_index: int, machines, host_of, base_latency, backend: Backend | None = None):
        """
        ``machines`` are the MachineRecords placed on this host, ``host_of``
        maps every NodeId to its host index and ``base_latency(h1, h2)``
        returns the measured latency between two hosts in microseconds.
        """
        self.host = host_index
        self.machines: dict[NodeId, MachineRecord] = {m.node: m for m in machines}
        self.host_of = host_of
        self.base_latency = base_latency
        self.backend = backend if backend is not None else TraceBackend()
        self.epoch: float | None = None
        self.links: dict = {}
        self.rules: dict[tuple[NodeId, NodeId], ShapingRule] = {}
        self.desired_activity: dict[NodeId, str] = {}
        self.killed: set[NodeId] = set()
        self.warnings: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def for_host(cls, config, assignment, host_index: int, backend=None, addresses=None):
        from .coordinator import host_base_latency

        machines = []
        for node in assignment.machines_on(host_index):
            res = config.machine_resources(node)
            addr = str(addresses.address(node)) if addresses is not None else ""
            machines.append(MachineRecord(node, res.vcpus, res.memory_mb, addr))
        return cls(
            host_index,
            machines,
            assignment.host_of,
            lambda h1, h2: host_base_latency(config, h1, h2),
            backend,
        )

    # -- shaping -----------------------------------------------------------

    def _desired(self, src: NodeId, dst: NodeId) -> ShapingRule | None:
        link = self.links.get((src, dst) if src < dst else (dst, src))
        if link is None:
            return None
        base = self.base_latency(self.host_of[src], self.host_of[dst])
        emitted, warned = compensate_host_latency(link.latency_us, base)
        if warned:
            self.warnings.append(
                f"{src.render()}->{dst.render()}: host base latency {base}us exceeds target {link.latency_us}us"
            )
            log.warning("%s", self.warnings[-1])
        blocked = link.blocked or src in self.killed or dst in self.killed
        return ShapingRule(src, dst, quantize_tenths(emitted), link.bandwidth_kbps, blocked)

    def _reconcile(self, pairs) -> list[str]:
        out = []
        for src, dst in sorted(set(pairs)):
            cur = self.rules.get((src, dst))
            want = self._desired(src, dst)
            if want is None:
                if cur is not None and not cur.blocked:
                    out.append(cmd_link("block", src, dst))
                    self.rules[(src, dst)] = replace(cur, blocked=True)
                continue
            was_blocked = cur.blocked if cur is not None else False
            if cur is None or (cur.delay_tenths_ms, cur.rate_kbps) != (want.delay_tenths_ms, want.rate_kbps):
                out.append(cmd_link_set(src, dst, want.delay_tenths_ms, want.rate_kbps))
            if want.blocked != was_blocked:
                out.append(cmd_link("block" if want.blocked else "unblock", src, dst))
            self.rules[(src, dst)] = want
        return out

    def _egress_pairs(self, a: NodeId, b: NodeId):
        if a in self.machines:
            yield (a, b)
        if b in self.machines:
            yield (b, a)

    def _incident_pairs(self, node: NodeId):
        pairs = [p for p in self.rules if node in p and p[0] in self.machines]
        for a, b in self.links:
            if node in (a, b):
                pairs.extend(self._egress_pairs(a, b))
        return pairs

    def shaping_state(self) -> dict:
        """Effective egress shaping: (src, dst) -> (delay tenths, rate) of unblocked rules."""
        return {k: (r.delay_tenths_ms, r.rate_kbps) for k, r in self.rules.items() if not r.blocked}

    # -- lifecycle ---------------------------------------------------------

    def _act(self, node: NodeId, action: str) -> str:
        transition(self.machines[node], action)
        return cmd_machine(node, _VERB[action])

    def _apply_activity(self, node: NodeId, target: str) -> list[str]:
        m = self.machines[node]
        self.desired_activity[node] = target
        if m.state == ACTIVE and target == SUSPENDED:
            return [self._act(node, "suspend")]
        if m.state == SUSPENDED and target == ACTIVE:
            return [self._act(node, "resume")]
        return []

    # -- updates -----------------------------------------------------------

    def apply_update(self, update) -> list[str]:
        """Fold one EpochUpdate and return the commands it caused."""
        with self._lock:
            return self._apply_update(update)

    def _apply_update(self, update) -> list[str]:
        if self.epoch is None and not update.full:
            raise ProtocolError(f"first update at epoch {update.epoch} is not a full snapshot")
        if self.epoch is not None and update.epoch < self.epoch:
            raise ProtocolError(f"update for epoch {update.epoch} after epoch {self.epoch}; full snapshot required")

        cmds: list[str] = []
        if update.full:
            for node in sorted(self.machines):
                if self.machines[node].state == CREATED:
                    cmds.append(self._act(node, "boot"))
            stale = [k for k in self.rules]
            self.links = {l.key: l for l in update.links}
            touched = stale + [p for a, b in self.links for p in self._egress_pairs(a, b)]
        else:
            self.links = apply_diff_to_links(self.links, _idempotent(update.diffs, self.links))
            touched = [p for d in update.diffs for p in self._egress_pairs(d.a, d.b)]
        self.epoch = update.epoch
        cmds.extend(self._reconcile(touched))

        for node, target in update.activity:
            if node in self.machines:
                cmds.extend(self._apply_activity(node, target))

        for c in cmds:
            self.backend.apply(self.epoch, c)
        return cmds

    def inject_fault(self, node: NodeId, kind: str, fraction: float | None = None) -> FaultEffect:
        """Kill, reboot or degrade one local machine.

        A kill blocks every egress rule touching the machine until reboot;
        a degrade only records the reduced vCPU share and notifies the
        backend.
        """
        with self._lock:
            if node not in self.machines:
                raise UnknownNodeError(f"machine {node} is not on host {self.host}")
            m = self.machines[node]
            epoch = self.epoch or 0.0
            cmds: list[str] = []
            if kind == "kill":
                cmds.append(self._act(node, "kill"))
                self.killed.add(node)
                cmds.extend(self._reconcile(self._incident_pairs(node)))
            elif kind == "reboot":
                cmds.append(self._act(node, "reboot"))
                self.killed.discard(node)
                cmds.extend(self._reconcile(self._incident_pairs(node)))
                if self.desired_activity.get(node) == SUSPENDED:
                    cmds.append(self._act(node, "suspend"))
            elif kind == "degrade":
                if fraction is None or not 0 < fraction <= 1:
                    raise ValueError(f"degrade fraction must be in (0, 1], got {fraction!r}")
                m.vcpu_fraction = fraction
                self.backend.resource_change(epoch, node, m.allocated_vcpus)
            else:
                raise ValueError(f"unknown fault kind {kind!r}")
            for c in cmds:
                self.backend.apply(epoch, c)
            return FaultEffect(node, kind, m.state, m.allocated_vcpus, cmds)


def _idempotent(diffs, links):
    # a re-delivered update may remove links that are already gone
    return [d for d in diffs if d.change == ADDED or d.key in links]


def parse_command(line: str):
    """Split a log line (optionally epoch-prefixed) into its command fields."""
    parts = line.split()
    if parts and parts[0] not in ("link", "machine"):
        parts = parts[1:]
    return parts


def replay_shaping(lines, host_nodes=None) -> dict:
    """Rebuild effective shaping state from a command log.

    Node names are kept in rendered form: ``(src, dst) -> (tenths, rate)``.
    """
    rules: dict = {}
    blocked: set = set()
    for line in lines:
        p = parse_command(line)
        if not p or p[0] != "link":
            continue
        key = (p[2], p[3])
        if p[1] == "set":
            tenths = round(float(p[5][:-2]) * 10)
            rate = int(p[7][: -len("kbit")])
            rules[key] = (tenths, rate)
        elif p[1] == "block":
            blocked.add(key)
        elif p[1] == "unblock":
            blocked.discard(key)
    return {k: v for k, v in rules.items() if k not in blocked}


def expected_shaping(snapshot, host_index: int, host_of, base_latency) -> dict:
    """Effective shaping state of one host derived from a snapshot alone."""
    out = {}
    for link in snapshot.links.values():
        if link.blocked:
            continue
        for src, dst in ((link.a, link.b), (link.b, link.a)):
            if host_of[src] != host_index:
                continue
            emitted, _ = compensate_host_latency(link.latency_us, base_latency(host_of[src], host_of[dst]))
            out[(src.render(), dst.render())] = (quantize_tenths(emitted), link.bandwidth_kbps)
    return out
