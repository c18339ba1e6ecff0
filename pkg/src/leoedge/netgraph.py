"""Per-epoch topology snapshots, shortest paths and snapshot diffs.

Link latencies are integer microseconds. Path sums are therefore exact, and
Dijkstra and Floyd-Warshall agree bit-for-bit, including tie-breaking: among
equal-latency routes the lexicographically smallest hop sequence (NodeId
order) wins.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .constellation import NodeId
from .errors import UnknownNodeError

INF = math.inf

# half the 0.1 ms shaping resolution
DEFAULT_SUPPRESS_US = 50

ADDED = "added"
REMOVED = "removed"
LATENCY_CHANGED = "latency-changed"
BANDWIDTH_CHANGED = "bandwidth-changed"
BLOCKED_CHANGED = "blocked-changed"


@dataclass(frozen=True)
class LinkState:
    a: NodeId
    b: NodeId
    latency_us: int
    bandwidth_kbps: int
    blocked: bool = False

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"link endpoints must be ordered and distinct: {self.a}, {self.b}")

    @property
    def key(self) -> tuple[NodeId, NodeId]:
        return (self.a, self.b)


def make_link(u: NodeId, v: NodeId, latency_us: int, bandwidth_kbps: int, blocked: bool = False) -> LinkState:
    a, b = (u, v) if u < v else (v, u)
    return LinkState(a, b, int(latency_us), int(bandwidth_kbps), bool(blocked))


def round_us(delay_us: float) -> int:
    """Half-up rounding to whole microseconds."""
    return int(math.floor(delay_us + 0.5))


@dataclass(frozen=True)
class PathResult:
    hops: tuple[NodeId, ...]
    latency_us: int | None
    bandwidth_kbps: int | None
    reachable: bool

    @classmethod
    def unreachable(cls) -> "PathResult":
        return cls((), None, None, False)


@dataclass(frozen=True, eq=False)
class TopologySnapshot:
    """Complete link state at one epoch.

    ``nodes`` is the node universe in NodeId order; ``positions[i]`` is the
    ECI position of ``nodes[i]``. ``links`` maps ordered endpoint pairs to
    their state.
    """

    epoch: float
    nodes: Sequence[NodeId]
    positions: np.ndarray
    links: Mapping[tuple[NodeId, NodeId], LinkState]
    clock_offset: float = 0.0  # geometry was evaluated at epoch + clock_offset

    def __eq__(self, other):
        if not isinstance(other, TopologySnapshot):
            return NotImplemented
        return (
            self.epoch == other.epoch
            and list(self.nodes) == list(other.nodes)
            and dict(self.links) == dict(other.links)
            and np.array_equal(self.positions, other.positions)
        )

    __hash__ = None

    @classmethod
    def from_links(cls, epoch, nodes, links: Iterable[LinkState], positions=None) -> "TopologySnapshot":
        nodes = list(nodes)
        if positions is None:
            positions = np.zeros((len(nodes), 3))
        return cls(float(epoch), nodes, np.asarray(positions, float), {l.key: l for l in links})

    @cached_property
    def index(self) -> dict[NodeId, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    def idx(self, node: NodeId) -> int:
        try:
            return self.index[node]
        except KeyError:
            raise UnknownNodeError(f"unknown node {node}") from None

    def position(self, node: NodeId) -> np.ndarray:
        return self.positions[self.idx(node)]

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per node index: (neighbour index, latency) over non-blocked links, neighbours ascending."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.nodes]
        index = self.index
        for link in self.links.values():
            if link.blocked:
                continue
            i, j = index[link.a], index[link.b]
            adj[i].append((j, link.latency_us))
            adj[j].append((i, link.latency_us))
        for row in adj:
            row.sort()
        return adj

    def link(self, u: NodeId, v: NodeId) -> LinkState | None:
        return self.links.get((u, v) if u < v else (v, u))

    def incident(self, node: NodeId) -> list[LinkState]:
        return sorted((l for l in self.links.values() if node in (l.a, l.b)), key=lambda l: l.key)

    def with_blocked(self, nodes: Iterable[NodeId]) -> "TopologySnapshot":
        """Copy with every link touching ``nodes`` marked blocked."""
        nodes = set(nodes)
        if not nodes:
            return self
        links = {
            k: (replace(l, blocked=True) if (l.a in nodes or l.b in nodes) and not l.blocked else l)
            for k, l in self.links.items()
        }
        return replace(self, links=links)

    def sorted_links(self) -> list[LinkState]:
        index = self.index
        return [self.links[k] for k in sorted(self.links, key=lambda k: (index[k[0]], index[k[1]]))]


def shortest_distances(snapshot: TopologySnapshot, source: int) -> list[float]:
    """Single-source Dijkstra over node indices; unreachable nodes get INF."""
    adj = snapshot.adjacency
    dist = [INF] * len(adj)
    dist[source] = 0
    heap = [(0, source)]
    done = [False] * len(adj)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _walk(snapshot: TopologySnapshot, src: int, dst: int, to_dst) -> list[int]:
    """Lexicographically smallest shortest path given distances towards ``dst``."""
    adj = snapshot.adjacency
    hops = [src]
    seen = {src}
    u = src
    while u != dst:
        for v, w in adj[u]:
            if v not in seen and w + to_dst[v] == to_dst[u]:
                break
        else:  # pragma: no cover - distances are consistent by construction
            raise RuntimeError("inconsistent distance table")
        hops.append(v)
        seen.add(v)
        u = v
    return hops


def _result(snapshot: TopologySnapshot, hops: list[int], latency) -> PathResult:
    nodes = snapshot.nodes
    hop_ids = tuple(nodes[i] for i in hops)
    if len(hop_ids) == 1:
        return PathResult(hop_ids, 0, None, True)
    bw = min(snapshot.link(hop_ids[k], hop_ids[k + 1]).bandwidth_kbps for k in range(len(hop_ids) - 1))
    return PathResult(hop_ids, int(latency), bw, True)


def dijkstra(snapshot: TopologySnapshot, src: NodeId, dst: NodeId, *, to_dst=None) -> PathResult:
    """Minimum-latency path over non-blocked links.

    The search runs from ``dst`` (links are undirected), then the path is
    walked forward from ``src`` taking the smallest admissible neighbour at
    every step. ``to_dst`` may pass a precomputed distance table for ``dst``.
    """
    s, d = snapshot.idx(src), snapshot.idx(dst)
    if to_dst is None:
        to_dst = shortest_distances(snapshot, d)
    if to_dst[s] == INF:
        return PathResult.unreachable()
    return _result(snapshot, _walk(snapshot, s, d, to_dst), to_dst[s])


@dataclass(frozen=True, eq=False)
class AllPairs:
    latency: np.ndarray  # float64 holding integer microseconds, inf if unreachable
    next_hop: np.ndarray  # int64 node index, -1 if none / diagonal
    nodes: Sequence[NodeId]

    def path(self, snapshot: TopologySnapshot, src: NodeId, dst: NodeId) -> PathResult:
        i, j = snapshot.idx(src), snapshot.idx(dst)
        if not np.isfinite(self.latency[i, j]):
            return PathResult.unreachable()
        hops = [i]
        while hops[-1] != j:
            hops.append(int(self.next_hop[hops[-1], j]))
        return _result(snapshot, hops, self.latency[i, j])


def floyd_warshall(snapshot: TopologySnapshot) -> AllPairs:
    """All-pairs latencies and next-hop matrix.

    Integer latencies stay exact in float64 well beyond any orbital path
    length, so the matrix compares equal to Dijkstra without tolerance.
    """
    n = len(snapshot.nodes)
    D = np.full((n, n), np.inf)
    np.fill_diagonal(D, 0.0)
    adj = snapshot.adjacency
    for i, row in enumerate(adj):
        for j, w in row:
            D[i, j] = w
    for k in range(n):
        np.minimum(D, D[:, k, None] + D[None, k, :], out=D)

    # smallest neighbour on some shortest path, matching the Dijkstra walk
    nxt = np.full((n, n), -1, dtype=np.int64)
    for i, row in enumerate(adj):
        target = D[i]
        free = np.isfinite(target)
        free[i] = False
        for v, w in row:
            hit = free & (w + D[v] == target)
            nxt[i, hit] = v
            free &= ~hit
    return AllPairs(D, nxt, snapshot.nodes)


def path_bandwidth(path: PathResult, snapshot: TopologySnapshot) -> int:
    if not path.reachable or len(path.hops) < 2:
        raise ValueError("path bandwidth needs a reachable path with at least one link")
    out = None
    for u, v in zip(path.hops, path.hops[1:]):
        link = snapshot.link(u, v)
        if link is None:
            raise ValueError(f"no link between {u} and {v}")
        out = link.bandwidth_kbps if out is None else min(out, link.bandwidth_kbps)
    return out


@dataclass(frozen=True)
class LinkDiff:
    a: NodeId
    b: NodeId
    change: str
    latency_us: int | None = None
    bandwidth_kbps: int | None = None
    blocked: bool | None = None

    @property
    def key(self) -> tuple[NodeId, NodeId]:
        return (self.a, self.b)


def diff_snapshots(prev: TopologySnapshot, next: TopologySnapshot, suppress_us: int = DEFAULT_SUPPRESS_US) -> list[LinkDiff]:
    """Per-link changes turning ``prev`` into ``next``, sorted by endpoints.

    A latency change smaller than ``suppress_us`` is dropped; the link keeps
    its previous latency in the result of :func:`apply_diff`. Pass 0 for a
    lossless diff.
    """
    if list(prev.nodes) != list(next.nodes):
        raise ValueError("snapshots cover different node sets")
    out = []
    pl, nl = prev.links, next.links
    index = prev.index
    for key in sorted(pl.keys() | nl.keys(), key=lambda k: (index[k[0]], index[k[1]])):
        old, new = pl.get(key), nl.get(key)
        if old is None:
            out.append(LinkDiff(*key, ADDED, new.latency_us, new.bandwidth_kbps, new.blocked))
            continue
        if new is None:
            out.append(LinkDiff(*key, REMOVED))
            continue
        if old.latency_us != new.latency_us and abs(new.latency_us - old.latency_us) >= suppress_us:
            out.append(LinkDiff(*key, LATENCY_CHANGED, latency_us=new.latency_us))
        if old.bandwidth_kbps != new.bandwidth_kbps:
            out.append(LinkDiff(*key, BANDWIDTH_CHANGED, bandwidth_kbps=new.bandwidth_kbps))
        if old.blocked != new.blocked:
            out.append(LinkDiff(*key, BLOCKED_CHANGED, blocked=new.blocked))
    return out


def apply_diff_to_links(links: Mapping, diffs: Iterable[LinkDiff]) -> dict:
    links = dict(links)
    for d in diffs:
        if d.change == ADDED:
            links[d.key] = LinkState(d.a, d.b, d.latency_us, d.bandwidth_kbps, bool(d.blocked))
        elif d.change == REMOVED:
            del links[d.key]
        elif d.change == LATENCY_CHANGED:
            links[d.key] = replace(links[d.key], latency_us=d.latency_us)
        elif d.change == BANDWIDTH_CHANGED:
            links[d.key] = replace(links[d.key], bandwidth_kbps=d.bandwidth_kbps)
        elif d.change == BLOCKED_CHANGED:
            links[d.key] = replace(links[d.key], blocked=d.blocked)
        else:
            raise ValueError(f"unknown change kind {d.change!r}")
    return links


def apply_diff(prev: TopologySnapshot, diffs: Iterable[LinkDiff], epoch=None, positions=None) -> TopologySnapshot:
    return replace(
        prev,
        epoch=prev.epoch if epoch is None else float(epoch),
        positions=prev.positions if positions is None else positions,
        links=apply_diff_to_links(prev.links, diffs),
    )
