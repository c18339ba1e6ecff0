"""The single TOML configuration file.

Example::

    update_interval_s = 5
    duration_s = 900

    [[shell]]
    planes = 6
    sats_per_plane = 11
    altitude_km = 780
    inclination_deg = 90
    arc_deg = 180
    phase_offset = 0
    isl_bandwidth_kbps = 100000
    min_isl_altitude_km = 80
    sat_vcpus = 1
    sat_memory_mb = 1024

    [[ground_station]]
    name = "hawaii"
    lat = 21.36
    lon = -157.96
    min_elevation_deg = 10
    uplink_bandwidth_kbps = 100000
    uplink_policy = "all-visible"
    vcpus = 8
    memory_mb = 8192

    [[host]]
    name = "host0"
    vcpus = 32
    memory_mb = 32768
    base_latency_us = 200

    [[colocate]]
    machines = ["gst.hawaii"]
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import geo
from .bbox import BoundingBox
from .constellation import Constellation, GroundStationConfig, NodeId, ShellConfig
from .errors import ConfigError, UnknownNodeError

TOP_KEYS = {"update_interval_s", "duration_s", "bbox", "shell", "ground_station", "host", "colocate"}
SHELL_KEYS = {
    "planes", "sats_per_plane", "altitude_km", "inclination_deg", "arc_deg", "phase_offset",
    "isl_bandwidth_kbps", "min_isl_altitude_km", "sat_vcpus", "sat_memory_mb",
}
GST_KEYS = {"name", "lat", "lon", "min_elevation_deg", "uplink_bandwidth_kbps", "uplink_policy", "vcpus", "memory_mb"}
GST_REQUIRED = {"name", "lat", "lon"}
SHELL_REQUIRED = {"planes", "sats_per_plane", "altitude_km", "inclination_deg"}
HOST_KEYS = {"name", "vcpus", "memory_mb", "base_latency_us"}
BBOX_KEYS = {"lat_min", "lat_max", "lon_min", "lon_max"}
COLOCATE_KEYS = {"machines", "name"}


@dataclass(frozen=True)
class MachineResources:
    vcpus: int
    memory_mb: int


@dataclass(frozen=True)
class HostConfig:
    name: str
    vcpus: int
    memory_mb: int
    base_latency_us: int = 0


@dataclass(frozen=True, eq=False)
class EmulationConfig:
    update_interval_s: float
    duration_s: float
    shells: tuple[ShellConfig, ...] = ()
    gsts: tuple[GroundStationConfig, ...] = ()
    hosts: tuple[HostConfig, ...] = ()
    bbox: BoundingBox | None = None
    colocate: tuple[tuple[str, ...], ...] = field(default=())

    @cached_property
    def constellation(self) -> Constellation:
        return Constellation(self.shells, self.gsts)

    @property
    def epochs(self) -> int:
        # relative slack so that e.g. 0.3 / 0.05 counts 6 epochs, not 5
        return math.floor(self.duration_s / self.update_interval_s * (1 + 1e-12))

    def machine_resources(self, node: NodeId) -> MachineResources:
        if node.is_satellite:
            sh = self.shells[node.shell]
            return MachineResources(sh.sat_vcpus, sh.sat_memory_mb)
        g = self.gsts[node.id]
        return MachineResources(g.vcpus, g.memory_mb)

    @cached_property
    def colocation_groups(self) -> list[list[NodeId]]:
        from .naming import parse_node

        return [sorted(parse_node(m, self.constellation) for m in group) for group in self.colocate]


def _take(table: dict, allowed: set, where: str, errs: list) -> dict:
    if not isinstance(table, dict):
        errs.append(f"{where}: expected a table")
        return {}
    for k in sorted(set(table) - allowed):
        errs.append(f"{where}: unknown key {k!r}")
    return table


def _num(table, key, where, errs, default=None, kind=(int, float)):
    if key not in table:
        if default is None:
            errs.append(f"{where}.{key}: missing required key")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, kind):
        errs.append(f"{where}.{key}: expected a number, got {v!r}")
        return default
    return v


def _int(table, key, where, errs, default=None):
    return _num(table, key, where, errs, default, kind=int)


def parse_config(text: str) -> EmulationConfig:
    """Parse and fully validate a configuration; raise ConfigError listing every problem."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([f"invalid TOML: {e}"]) from None

    errs: list[str] = []
    _take(doc, TOP_KEYS, "config", errs)
    interval = _num(doc, "update_interval_s", "config", errs)
    duration = _num(doc, "duration_s", "config", errs)
    if interval is not None and not interval > 0:
        errs.append(f"config.update_interval_s: must be > 0, got {interval!r}")
    if duration is not None and not duration > 0:
        errs.append(f"config.duration_s: must be > 0, got {duration!r}")

    shells = []
    for i, raw in enumerate(doc.get("shell", [])):
        where = f"shell[{i}]"
        t = _take(raw, SHELL_KEYS, where, errs)
        for k in sorted(SHELL_REQUIRED - set(t)):
            errs.append(f"{where}.{k}: missing required key")
        sh = ShellConfig(
            planes=_int(t, "planes", where, errs, 0),
            sats_per_plane=_int(t, "sats_per_plane", where, errs, 0),
            altitude_km=_num(t, "altitude_km", where, errs, 0),
            inclination_deg=_num(t, "inclination_deg", where, errs, 0),
            arc_deg=_num(t, "arc_deg", where, errs, 360.0),
            phase_offset=_int(t, "phase_offset", where, errs, 0),
            isl_bandwidth_kbps=_int(t, "isl_bandwidth_kbps", where, errs, 10_000_000),
            min_isl_altitude_km=_num(t, "min_isl_altitude_km", where, errs, 80.0),
            sat_vcpus=_int(t, "sat_vcpus", where, errs, 1),
            sat_memory_mb=_int(t, "sat_memory_mb", where, errs, 512),
        )
        # a missing or mistyped key leaves a placeholder; don't report it twice
        reported = {e.split(":")[0] for e in errs}
        errs.extend(e for e in sh.validate(where) if e.split(":")[0] not in reported)
        shells.append(sh)

    gsts = []
    names = set()
    for i, raw in enumerate(doc.get("ground_station", [])):
        where = f"ground_station[{i}]"
        t = _take(raw, GST_KEYS, where, errs)
        for k in sorted(GST_REQUIRED - set(t)):
            errs.append(f"{where}.{k}: missing required key")
        name = t.get("name", f"gst{i}")
        if not isinstance(name, str):
            errs.append(f"{where}.name: expected a string, got {name!r}")
            name = f"gst{i}"
        if name in names:
            errs.append(f"{where}.name: duplicate ground station name {name!r}")
        names.add(name)
        lat = _num(t, "lat", where, [], 0.0)
        lon = _num(t, "lon", where, [], 0.0)
        if not -90 <= lat <= 90:
            errs.append(f"{where}.lat: must be in [-90, 90], got {lat!r}")
            lat = 0.0
        if not -180 <= lon <= 180:
            errs.append(f"{where}.lon: must be in [-180, 180], got {lon!r}")
            lon = 0.0
        g = GroundStationConfig(
            name=name,
            location=geo.GeodeticCoord(lat, lon, 0.0),
            min_elevation_deg=_num(t, "min_elevation_deg", where, errs, 25.0),
            uplink_bandwidth_kbps=_int(t, "uplink_bandwidth_kbps", where, errs, 10_000_000),
            uplink_policy=t.get("uplink_policy", "all-visible"),
            vcpus=_int(t, "vcpus", where, errs, 1),
            memory_mb=_int(t, "memory_mb", where, errs, 512),
        )
        errs.extend(g.validate(where))
        gsts.append(g)

    if not shells and not gsts:
        errs.append("config: at least one [[shell]] or [[ground_station]] is required")

    hosts = []
    host_names = set()
    for i, raw in enumerate(doc.get("host", [])):
        where = f"host[{i}]"
        t = _take(raw, HOST_KEYS, where, errs)
        name = t.get("name")
        if not isinstance(name, str) or not name:
            errs.append(f"{where}.name: missing required key")
            name = f"host{i}"
        if name in host_names:
            errs.append(f"{where}.name: duplicate host name {name!r}")
        host_names.add(name)
        h = HostConfig(
            name=name,
            vcpus=_int(t, "vcpus", where, errs, 0),
            memory_mb=_int(t, "memory_mb", where, errs, 0),
            base_latency_us=_int(t, "base_latency_us", where, errs, 0),
        )
        if h.vcpus is not None and h.vcpus < 1:
            errs.append(f"{where}.vcpus: must be a positive integer")
        if h.memory_mb is not None and h.memory_mb < 1:
            errs.append(f"{where}.memory_mb: must be a positive integer")
        if h.base_latency_us is not None and h.base_latency_us < 0:
            errs.append(f"{where}.base_latency_us: must be >= 0")
        hosts.append(h)

    bbox = None
    if "bbox" in doc:
        t = _take(doc["bbox"], BBOX_KEYS, "bbox", errs)
        bbox = BoundingBox(
            lat_min=_num(t, "lat_min", "bbox", errs, -90.0),
            lat_max=_num(t, "lat_max", "bbox", errs, 90.0),
            lon_min=_num(t, "lon_min", "bbox", errs, -180.0),
            lon_max=_num(t, "lon_max", "bbox", errs, 180.0),
        )
        errs.extend(bbox.validate())

    colocate = []
    for i, raw in enumerate(doc.get("colocate", [])):
        where = f"colocate[{i}]"
        t = _take(raw, COLOCATE_KEYS, where, errs)
        machines = t.get("machines")
        if not isinstance(machines, list) or not all(isinstance(m, str) for m in machines):
            errs.append(f"{where}.machines: expected a list of machine names")
            continue
        colocate.append(tuple(machines))

    if errs:
        raise ConfigError(errs)

    cfg = EmulationConfig(
        update_interval_s=float(interval),
        duration_s=float(duration),
        shells=tuple(shells),
        gsts=tuple(gsts),
        hosts=tuple(hosts),
        bbox=bbox,
        colocate=tuple(colocate),
    )

    from .naming import parse_node

    seen: dict[NodeId, int] = {}
    for i, group in enumerate(cfg.colocate):
        for m in group:
            try:
                node = parse_node(m, cfg.constellation)
            except (ValueError, UnknownNodeError) as e:
                errs.append(f"colocate[{i}].machines: {e}")
                continue
            if node in seen and seen[node] != i:
                errs.append(f"colocate[{i}].machines: {m!r} already in colocate[{seen[node]}]")
            seen[node] = i
    if errs:
        raise ConfigError(errs)
    return cfg


def load_config(path) -> EmulationConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
