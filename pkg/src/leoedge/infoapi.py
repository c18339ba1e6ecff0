"""Read-only HTTP constellation information service.

All endpoints are GET and answer JSON that echoes the epoch it was computed
from::

    /info                 shells and ground stations
    /shell/{s}            parameters of one shell
    /sat/{s}/{id}         position and activity of one satellite
    /gst/{name}           position and current uplinks of a ground station
    /path/{src}/{dst}     shortest path; nodes as ``878.0`` or ``gst.accra``
    /resolve/{name}       address of a ``.celestial`` name

Every request reads one published view, so a response never mixes two
epochs.
"""

from __future__ import annotations

import http.server
import threading
from dataclasses import dataclass, field
from urllib.parse import unquote

import numpy as np

from . import geo
from .bbox import ACTIVE
from .errors import UnknownNodeError
from .naming import AddressBook, parse_node
from .netgraph import TopologySnapshot, dijkstra, floyd_warshall, shortest_distances
from .wire import canonical_json

# above this many nodes a per-epoch all-pairs table costs more than on-demand Dijkstra
ALL_PAIRS_LIMIT = 800
# destinations whose distance vectors are kept per published epoch
DISTANCE_CACHE = 64


@dataclass(eq=False)
class Published:
    snapshot: TopologySnapshot
    plan: dict
    _all_pairs: object = None
    _to_dst: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def epoch(self) -> float:
        return self.snapshot.epoch

    def all_pairs(self):
        with self._lock:
            if self._all_pairs is None:
                self._all_pairs = floyd_warshall(self.snapshot)
            return self._all_pairs

    def path(self, src, dst):
        if len(self.snapshot.nodes) <= ALL_PAIRS_LIMIT:
            return self.all_pairs().path(self.snapshot, src, dst)
        return dijkstra(self.snapshot, src, dst, to_dst=self._distances_to(dst))

    def _distances_to(self, dst):
        d = self.snapshot.idx(dst)
        with self._lock:
            hit = self._to_dst.get(d)
        if hit is None:
            hit = shortest_distances(self.snapshot, d)
            with self._lock:
                if len(self._to_dst) >= DISTANCE_CACHE:
                    self._to_dst.pop(next(iter(self._to_dst)))
                self._to_dst[d] = hit
        return hit


class SnapshotHolder:
    """Latest published snapshot; replaced atomically by the coordinator loop."""

    def __init__(self):
        self._current: Published | None = None

    def publish(self, snapshot: TopologySnapshot, plan: dict) -> None:
        self._current = Published(snapshot, dict(plan))

    @property
    def current(self) -> Published | None:
        return self._current


class HttpError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _geodetic(pos, t) -> dict:
    lat, lon, alt = geo.eci_to_geodetic(np.asarray(pos), t)[0]
    return {"lat_deg": float(lat), "lon_deg": float(lon), "alt_m": float(alt)}


def _eci(pos) -> dict:
    return {"x": float(pos[0]), "y": float(pos[1]), "z": float(pos[2])}


class InfoService:
    """Routes request paths to JSON bodies; independent of the socket layer."""

    def __init__(self, config, holder: SnapshotHolder):
        self.config = config
        self.con = config.constellation
        self.holder = holder
        self.addresses = AddressBook(self.con)

    def handle(self, path: str) -> tuple[int, bytes]:
        try:
            body = self._route(path)
            return 200, canonical_json(body)
        except HttpError as e:
            return e.status, canonical_json({"error": e.message})

    def _node(self, text: str):
        try:
            return parse_node(text, self.con)
        except UnknownNodeError as e:
            raise HttpError(404, str(e)) from None
        except ValueError as e:
            raise HttpError(400, str(e)) from None

    def _route(self, path: str) -> dict:
        parts = [unquote(p) for p in path.split("?", 1)[0].strip("/").split("/") if p]
        if parts[:1] == ["resolve"] and len(parts) == 2:
            node = self._node(parts[1])
            return {"name": parts[1], "address": str(self.addresses.address(node))}

        pub = self.holder.current
        if pub is None:
            raise HttpError(503, "no epoch published yet")
        snap = pub.snapshot
        t_geo = snap.epoch + snap.clock_offset

        if parts == ["info"]:
            return {
                "epoch_s": snap.epoch,
                "shells": [self._shell(s) for s in range(len(self.con.shells))],
                "ground_stations": [g.name for g in self.con.gsts],
                "satellites": self.con.n_sats,
                "links": len(snap.links),
            }
        if parts[:1] == ["shell"] and len(parts) == 2:
            s = self._int(parts[1])
            if not 0 <= s < len(self.con.shells):
                raise HttpError(404, f"unknown shell {parts[1]}")
            return {"epoch_s": snap.epoch, **self._shell(s)}
        if parts[:1] == ["sat"] and len(parts) == 3:
            node = self._node(f"{self._int(parts[2])}.{self._int(parts[1])}")
            pos = snap.position(node)
            return {
                "epoch_s": snap.epoch,
                "shell": node.shell,
                "id": node.id,
                "name": node.render(),
                "address": str(self.addresses.address(node)),
                "active": pub.plan.get(node) == ACTIVE,
                "position": _geodetic(pos, t_geo),
                "eci": _eci(pos),
            }
        if parts[:1] == ["gst"] and len(parts) == 2:
            node = self._node(f"gst.{parts[1]}")
            pos = snap.position(node)
            uplinks = [
                {
                    "sat": (l.a if l.b == node else l.b).render(),
                    "latency_us": int(l.latency_us),
                    "bandwidth_kbps": l.bandwidth_kbps,
                    "blocked": l.blocked,
                }
                for l in snap.incident(node)
            ]
            return {
                "epoch_s": snap.epoch,
                "name": node.name,
                "address": str(self.addresses.address(node)),
                "position": _geodetic(pos, t_geo),
                "eci": _eci(pos),
                "uplinks": uplinks,
            }
        if parts[:1] == ["path"] and len(parts) == 3:
            src, dst = self._node(parts[1]), self._node(parts[2])
            p = pub.path(src, dst)
            return {
                "epoch_s": snap.epoch,
                "src": src.render(),
                "dst": dst.render(),
                "reachable": p.reachable,
                "hops": [h.render() for h in p.hops],
                "latency_us": p.latency_us,
                "bandwidth_kbps": p.bandwidth_kbps,
            }
        raise HttpError(404, f"no such endpoint {path!r}")

    @staticmethod
    def _int(text: str) -> int:
        if not text.isdigit():
            raise HttpError(400, f"expected a non-negative integer, got {text!r}")
        return int(text)

    def _shell(self, s: int) -> dict:
        sh = self.con.shells[s]
        return {
            "shell": s,
            "planes": sh.planes,
            "sats_per_plane": sh.sats_per_plane,
            "altitude_km": sh.altitude_km,
            "inclination_deg": sh.inclination_deg,
            "arc_deg": sh.arc_deg,
            "phase_offset": sh.phase_offset,
            "isl_bandwidth_kbps": sh.isl_bandwidth_kbps,
            "satellites": sh.total,
        }


def serve_info(service: InfoService, host: str = "127.0.0.1", port: int = 0) -> http.server.ThreadingHTTPServer:
    """Start the HTTP service on a background thread and return the server.

    ``port=0`` picks a free port; read it back from ``server.server_address``.
    Call ``server.shutdown()`` to stop.
    """

    class Handler(http.server.BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def do_GET(self):
            status, body = service.handle(self.path)
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, fmt, *args):
            pass

    server = http.server.ThreadingHTTPServer((host, port), Handler)
    server.daemon_threads = True
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server
