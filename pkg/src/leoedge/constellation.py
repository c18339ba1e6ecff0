"""Shells and ground stations materialized into nodes and candidate links."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import geo
from .errors import ConfigError

ALL_VISIBLE = "all-visible"
SINGLE_BEST = "single-best"
UPLINK_POLICIES = (ALL_VISIBLE, SINGLE_BEST)


@dataclass(frozen=True)
class ShellConfig:
    planes: int
    sats_per_plane: int
    altitude_km: float
    inclination_deg: float
    arc_deg: float = 360.0
    phase_offset: int = 0
    isl_bandwidth_kbps: int = 10_000_000
    min_isl_altitude_km: float = 80.0
    sat_vcpus: int = 1
    sat_memory_mb: int = 512

    @property
    def total(self) -> int:
        return self.planes * self.sats_per_plane

    @property
    def altitude_m(self) -> float:
        return self.altitude_km * 1000.0

    def validate(self, where: str = "shell") -> list[str]:
        errs = []
        for name in ("planes", "sats_per_plane", "isl_bandwidth_kbps", "sat_vcpus", "sat_memory_mb"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                errs.append(f"{where}.{name}: must be a positive integer, got {v!r}")
        if not self.altitude_km > 0:
            errs.append(f"{where}.altitude_km: must be > 0, got {self.altitude_km!r}")
        if not 0 < self.inclination_deg <= 180:
            errs.append(f"{where}.inclination_deg: must be in (0, 180], got {self.inclination_deg!r}")
        if not 0 < self.arc_deg <= 360:
            errs.append(f"{where}.arc_deg: must be in (0, 360], got {self.arc_deg!r}")
        if not isinstance(self.phase_offset, int) or self.phase_offset < 0:
            errs.append(f"{where}.phase_offset: must be an integer >= 0, got {self.phase_offset!r}")
        if not self.min_isl_altitude_km >= 0:
            errs.append(f"{where}.min_isl_altitude_km: must be >= 0, got {self.min_isl_altitude_km!r}")
        return errs


@dataclass(frozen=True)
class GroundStationConfig:
    name: str
    location: geo.GeodeticCoord
    min_elevation_deg: float = 25.0
    uplink_bandwidth_kbps: int = 10_000_000
    uplink_policy: str = ALL_VISIBLE
    vcpus: int = 1
    memory_mb: int = 512

    def validate(self, where: str = "ground_station") -> list[str]:
        errs = []
        if not self.name or not all(c.isalnum() or c in "-_" for c in self.name):
            errs.append(f"{where}.name: must be a non-empty identifier, got {self.name!r}")
        if not 0 <= self.min_elevation_deg < 90:
            errs.append(f"{where}.min_elevation_deg: must be in [0, 90), got {self.min_elevation_deg!r}")
        for name in ("uplink_bandwidth_kbps", "vcpus", "memory_mb"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                errs.append(f"{where}.{name}: must be a positive integer, got {v!r}")
        if self.uplink_policy not in UPLINK_POLICIES:
            errs.append(f"{where}.uplink_policy: must be one of {UPLINK_POLICIES}, got {self.uplink_policy!r}")
        return errs


SATELLITE = "satellite"
GROUND_STATION = "ground-station"


@dataclass(frozen=True, eq=False)
class NodeId:
    """Satellites sort before ground stations, then by shell, then id."""

    group: int  # 0 satellite, 1 ground station
    shell: int
    id: int
    name: str = field(default="", compare=False)
    # packed (group, shell, id); node ids are hashed and compared in every hot loop
    _key: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_key", (self.group << 48) | (self.shell << 32) | self.id)

    def __hash__(self):
        return self._key

    def __eq__(self, other):
        if other.__class__ is not NodeId:
            return NotImplemented
        return self._key == other._key

    def __lt__(self, other):
        return self._key < other._key

    def __le__(self, other):
        return self._key <= other._key

    def __gt__(self, other):
        return self._key > other._key

    def __ge__(self, other):
        return self._key >= other._key

    @classmethod
    def sat(cls, shell: int, id: int) -> "NodeId":
        return cls(0, shell, id)

    @classmethod
    def gst(cls, id: int, name: str = "") -> "NodeId":
        return cls(1, 0, id, name)

    @property
    def kind(self) -> str:
        return SATELLITE if self.group == 0 else GROUND_STATION

    @property
    def is_satellite(self) -> bool:
        return self.group == 0

    def render(self) -> str:
        """``<id>.<shell>`` for satellites, ``gst.<name>`` for ground stations."""
        if self.group == 0:
            return f"{self.id}.{self.shell}"
        return f"gst.{self.name or self.id}"

    def __str__(self):
        return self.render()

    def __repr__(self):
        return f"NodeId({self.render()})"


class Constellation:
    """Static structure: node table, shell offsets and +GRID ISL candidates.

    Node ``i`` of the global table is ``nodes[i]``; the table is sorted by
    NodeId order, so satellites of shell ``s`` occupy
    ``offsets[s] : offsets[s] + shells[s].total`` and ground stations follow.
    """

    def __init__(self, shells: Sequence[ShellConfig], gsts: Sequence[GroundStationConfig]):
        self.shells = list(shells)
        self.gsts = list(gsts)
        errs = []
        for i, sh in enumerate(self.shells):
            if sh.planes < 1 or sh.sats_per_plane < 1:
                errs.append(f"shell[{i}]: planes and sats_per_plane must be >= 1")
        if errs:
            raise ConfigError(errs)

        self.offsets = []
        nodes = []
        for s, sh in enumerate(self.shells):
            self.offsets.append(len(nodes))
            nodes.extend(NodeId.sat(s, k) for k in range(sh.total))
        self.n_sats = len(nodes)
        nodes.extend(NodeId.gst(i, g.name) for i, g in enumerate(self.gsts))
        self.nodes: list[NodeId] = nodes
        self.index = {n: i for i, n in enumerate(nodes)}
        self.gst_index = {g.name: self.n_sats + i for i, g in enumerate(self.gsts)}

        pairs = []
        shell_of = []
        for s, sh in enumerate(self.shells):
            p = grid_candidates(sh) + self.offsets[s]
            pairs.append(p)
            shell_of.append(np.full(len(p), s))
        self.isl_pairs = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
        self.isl_shell = np.concatenate(shell_of) if shell_of else np.zeros(0, dtype=np.int64)

    def __len__(self):
        return len(self.nodes)

    def node(self, i: int) -> NodeId:
        return self.nodes[i]

    def shell_slice(self, s: int) -> slice:
        return slice(self.offsets[s], self.offsets[s] + self.shells[s].total)

    def sat_positions(self, t) -> np.ndarray:
        if not self.shells:
            return np.zeros((0, 3))
        return np.concatenate([geo.shell_positions(sh, t) for sh in self.shells])

    def gst_positions(self, t) -> np.ndarray:
        if not self.gsts:
            return np.zeros((0, 3))
        return np.stack([geo.geodetic_to_eci(g.location, t) for g in self.gsts])

    def positions(self, t) -> np.ndarray:
        """ECI positions of all nodes, indexed like :attr:`nodes`."""
        return np.concatenate([self.sat_positions(t), self.gst_positions(t)])

    def candidate_degree(self) -> np.ndarray:
        deg = np.zeros(self.n_sats, dtype=np.int64)
        np.add.at(deg, self.isl_pairs.ravel(), 1)
        return deg


def grid_candidates(shell: ShellConfig) -> np.ndarray:
    """Undirected +GRID candidate pairs within one shell, local indices.

    In-plane neighbours k and k+1 are always linked; equal indices in
    adjacent planes are linked, wrapping from the last plane to the first
    only when the ascending nodes span the full 360 degrees.
    """
    P, S = shell.planes, shell.sats_per_plane
    seen = set()
    out = []

    def add(u, v):
        if u == v:
            return
        key = (min(u, v), max(u, v))
        if key not in seen:
            seen.add(key)
            out.append(key)

    wrap = shell.arc_deg >= 360.0
    for p in range(P):
        for k in range(S):
            u = p * S + k
            add(u, p * S + (k + 1) % S)
            if p + 1 < P:
                add(u, (p + 1) * S + k)
            elif wrap:
                add(u, k)
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(out), dtype=np.int64)


def build_constellation(shells, gsts) -> Constellation:
    return Constellation(shells, gsts)


def segment_clearance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum distance from Earth's center to segments [a, b] (row-wise)."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(dd > 0, -np.einsum("ij,ij->i", a, d) / dd, 0.0)
    s = np.clip(s, 0.0, 1.0)
    closest = a + s[:, None] * d
    return np.linalg.norm(closest, axis=1)


def isl_visible(a, b, min_isl_altitude_km: float) -> bool:
    threshold = geo.EARTH_RADIUS + min_isl_altitude_km * 1000.0
    return bool(segment_clearance(np.asarray(a, float), np.asarray(b, float))[0] >= threshold)


def elevation_angles(gst: np.ndarray, sats: np.ndarray) -> np.ndarray:
    """Elevation (deg) of each row of ``sats`` above the horizon of ``gst``."""
    gst = np.asarray(gst, float)
    up = gst / np.linalg.norm(gst)
    rel = np.atleast_2d(sats) - gst
    along = rel @ up
    # atan2 keeps full precision near the zenith, where arcsin does not
    across = np.linalg.norm(rel - along[:, None] * up, axis=1)
    return np.degrees(np.arctan2(along, across))


def elevation_angle(gst, sat) -> float:
    gst = np.asarray(gst, float)
    sat = np.asarray(sat, float)
    if not np.linalg.norm(gst) > 0:
        raise ValueError("ground position must not be the Earth's center")
    if np.array_equal(gst, sat):
        raise ValueError("satellite and ground positions coincide")
    return float(elevation_angles(gst, sat[None, :])[0])


@dataclass(frozen=True)
class GroundLink:
    sat: int  # global node index
    distance_m: float


def ground_links(gst: GroundStationConfig, gst_pos: np.ndarray, sat_pos: np.ndarray) -> list[GroundLink]:
    """Uplinks of one ground station.

    ``sat_pos`` is indexed by global satellite index (NodeId order), so the
    first minimum found by argmin is also the smallest NodeId among ties.
    """
    if len(sat_pos) == 0:
        return []
    elev = elevation_angles(gst_pos, sat_pos)
    visible = np.flatnonzero(elev >= gst.min_elevation_deg)
    if len(visible) == 0:
        return []
    dist = np.linalg.norm(sat_pos[visible] - gst_pos, axis=1)
    if gst.uplink_policy == SINGLE_BEST:
        j = int(np.argmin(dist))
        return [GroundLink(int(visible[j]), float(dist[j]))]
    return [GroundLink(int(i), float(d)) for i, d in zip(visible, dist)]


def horizon_central_angle(altitude_m: float) -> float:
    """Earth central angle (rad) at which a satellite sits on the geometric horizon."""
    return math.acos(geo.EARTH_RADIUS / (geo.EARTH_RADIUS + altitude_m))
