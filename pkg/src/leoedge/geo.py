"""Earth constants, frames and circular-orbit propagation.

Positions live in an Earth-centered inertial frame fixed at t=0. Ground
points rotate with the Earth at ``EARTH_ROTATION_RATE``; satellites follow
circular Keplerian orbits. The Earth is a sphere of radius ``EARTH_RADIUS``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS = 6_371_000.0  # m
MU = 3.986004418e14  # m^3/s^2
C_VACUUM = 299_792_458.0  # m/s
EARTH_ROTATION_RATE = 7.2921159e-5  # rad/s


@dataclass(frozen=True, order=True)
class SimTime:
    """Elapsed emulation time ``t`` (s); ``start_timestamp`` is informational."""

    t: float = 0.0
    start_timestamp: float = 0.0

    def __post_init__(self):
        if not self.t >= 0:
            raise ValueError(f"simulation time must be non-negative, got {self.t}")


def normalize_lon(lon_deg: float) -> float:
    """Map a longitude onto [-180, 180)."""
    lon = math.fmod(lon_deg + 180.0, 360.0)
    if lon < 0:
        lon += 360.0
    return lon - 180.0


@dataclass(frozen=True)
class GeodeticCoord:
    lat_deg: float
    lon_deg: float
    alt_m: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude {self.lat_deg} outside [-90, 90]")
        if not self.alt_m >= 0.0:
            raise ValueError(f"altitude {self.alt_m} must be >= 0")
        object.__setattr__(self, "lon_deg", normalize_lon(self.lon_deg))


def _as_seconds(t) -> float:
    return t.t if isinstance(t, SimTime) else float(t)


def mean_motion(altitude_m: float) -> float:
    a = EARTH_RADIUS + altitude_m
    return math.sqrt(MU / a**3)


def orbital_period(altitude_m: float) -> float:
    return 2.0 * math.pi / mean_motion(altitude_m)


def shell_positions(shell, t) -> np.ndarray:
    """ECI positions of every satellite of ``shell`` at ``t``.

    Returns an array of shape (planes * sats_per_plane, 3); row
    ``p * sats_per_plane + k`` holds satellite ``k`` of plane ``p``.
    """
    P, S = shell.planes, shell.sats_per_plane
    plane = np.repeat(np.arange(P), S)
    sat = np.tile(np.arange(S), P)
    return _positions(shell, plane, sat, _as_seconds(t))


def _positions(shell, plane, sat, t: float) -> np.ndarray:
    P, S = shell.planes, shell.sats_per_plane
    a = EARTH_RADIUS + shell.altitude_km * 1000.0
    n = math.sqrt(MU / a**3)
    theta = (
        2.0 * np.pi * sat / S
        + 2.0 * np.pi * shell.phase_offset * plane / (P * S)
        + n * t
    )
    incl = math.radians(shell.inclination_deg)
    raan = np.radians(plane * (shell.arc_deg / P))

    # equatorial circle, tilted about x, then turned about z
    x = a * np.cos(theta)
    y = a * np.sin(theta) * math.cos(incl)
    z = a * np.sin(theta) * math.sin(incl)
    cos_o, sin_o = np.cos(raan), np.sin(raan)
    return np.stack([x * cos_o - y * sin_o, x * sin_o + y * cos_o, z], axis=-1)


def propagate_circular(shell, plane_idx: int, sat_idx: int, t) -> np.ndarray:
    """ECI position (m) of one satellite on its circular orbit."""
    from .errors import ConfigError

    if not 0 <= plane_idx < shell.planes:
        raise ConfigError(f"plane index {plane_idx} outside [0, {shell.planes})")
    if not 0 <= sat_idx < shell.sats_per_plane:
        raise ConfigError(f"satellite index {sat_idx} outside [0, {shell.sats_per_plane})")
    return _positions(shell, np.asarray(plane_idx), np.asarray(sat_idx), _as_seconds(t))


def geodetic_to_eci(g: GeodeticCoord, t) -> np.ndarray:
    r = EARTH_RADIUS + g.alt_m
    lat = math.radians(g.lat_deg)
    lon = math.radians(g.lon_deg) + EARTH_ROTATION_RATE * _as_seconds(t)
    return np.array([
        r * math.cos(lat) * math.cos(lon),
        r * math.cos(lat) * math.sin(lon),
        r * math.sin(lat),
    ])


def eci_to_geodetic(pos: np.ndarray, t) -> np.ndarray:
    """Inverse of :func:`geodetic_to_eci` for an (N, 3) array.

    Returns columns lat_deg, lon_deg (in [-180, 180)), alt_m. For satellites
    this is the sub-satellite point.
    """
    pos = np.atleast_2d(pos)
    r = np.linalg.norm(pos, axis=1)
    lat = np.degrees(np.arcsin(np.clip(pos[:, 2] / r, -1.0, 1.0)))
    lon = np.degrees(np.arctan2(pos[:, 1], pos[:, 0]) - EARTH_ROTATION_RATE * _as_seconds(t))
    lon = np.mod(lon + 180.0, 360.0) - 180.0
    return np.stack([lat, lon, r - EARTH_RADIUS], axis=1)


def propagation_delay(distance_m: float) -> float:
    """Light-speed delay in microseconds."""
    if distance_m < 0:
        raise ValueError(f"distance must be non-negative, got {distance_m}")
    return distance_m / C_VACUUM * 1e6
