"""Bounding-box suspension and pre-run resource estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geo
from .constellation import Constellation

ACTIVE = "active"
SUSPENDED = "suspended"


@dataclass(frozen=True)
class BoundingBox:
    """Geographic box; ``lon_min > lon_max`` wraps across the antimeridian."""

    lat_min: float = -90.0
    lat_max: float = 90.0
    lon_min: float = -180.0
    lon_max: float = 180.0

    def validate(self, where: str = "bbox") -> list[str]:
        errs = []
        for name in ("lat_min", "lat_max"):
            if not -90.0 <= getattr(self, name) <= 90.0:
                errs.append(f"{where}.{name}: must be in [-90, 90], got {getattr(self, name)!r}")
        for name in ("lon_min", "lon_max"):
            if not -180.0 <= getattr(self, name) <= 180.0:
                errs.append(f"{where}.{name}: must be in [-180, 180], got {getattr(self, name)!r}")
        if self.lat_min > self.lat_max:
            errs.append(f"{where}: lat_min {self.lat_min} exceeds lat_max {self.lat_max}")
        return errs

    @property
    def whole_earth(self) -> bool:
        return self.lat_min <= -90 and self.lat_max >= 90 and self.lon_min <= -180 and self.lon_max >= 180

    def contains(self, lat, lon):
        """Vectorized, boundary-inclusive containment."""
        lat = np.asarray(lat, float)
        lon = np.asarray(lon, float)
        ok_lat = (lat >= self.lat_min) & (lat <= self.lat_max)
        if self.lon_min <= self.lon_max:
            # -180 and 180 are the same meridian
            lon_alt = np.where(lon == -180.0, 180.0, lon)
            ok_lon = ((lon >= self.lon_min) & (lon <= self.lon_max)) | (lon_alt <= self.lon_max) & (lon_alt >= self.lon_min)
        else:
            ok_lon = (lon >= self.lon_min) | (lon <= self.lon_max)
        return ok_lat & ok_lon


def in_bbox(g: geo.GeodeticCoord, box: BoundingBox) -> bool:
    return bool(box.contains(g.lat_deg, g.lon_deg))


def sub_satellite_points(positions: np.ndarray, t: float) -> np.ndarray:
    return geo.eci_to_geodetic(positions, t)


def active_mask(sat_positions: np.ndarray, t: float, box: BoundingBox | None) -> np.ndarray:
    if box is None or box.whole_earth:
        return np.ones(len(sat_positions), dtype=bool)
    if len(sat_positions) == 0:
        return np.zeros(0, dtype=bool)
    g = sub_satellite_points(sat_positions, t)
    return box.contains(g[:, 0], g[:, 1])


def activity_plan(snapshot, box: BoundingBox | None) -> dict:
    """NodeId -> ACTIVE/SUSPENDED. Ground stations are always active."""
    sats = [i for i, n in enumerate(snapshot.nodes) if n.is_satellite]
    mask = active_mask(snapshot.positions[sats], snapshot.epoch + snapshot.clock_offset, box)
    plan = {}
    for k, i in enumerate(sats):
        plan[snapshot.nodes[i]] = ACTIVE if mask[k] else SUSPENDED
    for n in snapshot.nodes:
        if not n.is_satellite:
            plan[n] = ACTIVE
    return plan


@dataclass(frozen=True)
class ResourceEstimate:
    peak_active_machines: int
    required_vcpus: int
    required_memory_mb: int
    peak_active_satellites: int = 0
    samples: int = 0
    safety_factor: float = 1.0


def sample_times(constellation: Constellation, update_interval_s: float, clock_offset: float = 0.0) -> np.ndarray:
    """Epochs covering one orbital period of the highest (slowest) shell."""
    if not constellation.shells:
        return np.array([clock_offset])
    top = max(sh.altitude_m for sh in constellation.shells)
    period = geo.orbital_period(top)
    n = max(1, math.ceil(period / update_interval_s))
    return clock_offset + np.arange(n) * update_interval_s


def activity_samples(constellation: Constellation, box, update_interval_s: float, clock_offset: float = 0.0):
    """Yield boolean activity masks over satellites for each sampled epoch."""
    for t in sample_times(constellation, update_interval_s, clock_offset):
        yield active_mask(constellation.sat_positions(t), t, box)


def estimate_peak_resources(config, box=None, *, safety_factor: float = 1.2, clock_offset: float = 0.0) -> ResourceEstimate:
    """Peak simultaneous demand over one period of the slowest shell.

    The peak machine count is observed directly; the vCPU and memory demand
    of satellites is scaled by ``safety_factor`` to cover ground-track drift
    beyond the sampled period. Ground stations never suspend and are added
    unscaled.
    """
    box = config.bbox if box is None else box
    con = config.constellation
    sat_vcpus = np.concatenate([np.full(sh.total, sh.sat_vcpus) for sh in con.shells]) if con.shells else np.zeros(0)
    sat_mem = np.concatenate([np.full(sh.total, sh.sat_memory_mb) for sh in con.shells]) if con.shells else np.zeros(0)

    peak_sats = peak_cpu = peak_mem = 0
    samples = 0
    for mask in activity_samples(con, box, config.update_interval_s, clock_offset):
        samples += 1
        peak_sats = max(peak_sats, int(mask.sum()))
        peak_cpu = max(peak_cpu, int(sat_vcpus[mask].sum()))
        peak_mem = max(peak_mem, int(sat_mem[mask].sum()))

    gst_cpu = sum(g.vcpus for g in con.gsts)
    gst_mem = sum(g.memory_mb for g in con.gsts)
    return ResourceEstimate(
        peak_active_machines=peak_sats + len(con.gsts),
        required_vcpus=math.ceil(peak_cpu * safety_factor - 1e-9) + gst_cpu,
        required_memory_mb=math.ceil(peak_mem * safety_factor - 1e-9) + gst_mem,
        peak_active_satellites=peak_sats,
        samples=samples,
        safety_factor=safety_factor,
    )
