"""Coordinator-to-agent wire format.

Each message is a 4-byte big-endian length followed by a canonical JSON
document (sorted keys, no whitespace)::

    {"activity": [...], "epoch_s": 2.0, "full": false, "links": [...]}

Latencies are integer microseconds and link entries are sorted by
endpoint order, so equal updates always encode to equal bytes.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO, Iterator

from .coordinator import EpochUpdate
from .netgraph import LinkDiff, LinkState

_LEN = struct.Struct(">I")


def canonical_json(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def _link_entry(d: LinkDiff, full: bool) -> dict:
    entry = {"a": d.a.render(), "b": d.b.render()}
    if full:
        entry.update(latency_us=d.latency_us, bandwidth_kbps=d.bandwidth_kbps, blocked=bool(d.blocked))
        return entry
    entry["change"] = d.change
    if d.latency_us is not None:
        entry["latency_us"] = int(d.latency_us)
    if d.bandwidth_kbps is not None:
        entry["bandwidth_kbps"] = int(d.bandwidth_kbps)
    if d.blocked is not None:
        entry["blocked"] = bool(d.blocked)
    return entry


def update_document(update: EpochUpdate) -> dict:
    entries = sorted(update.link_entries(), key=lambda d: (d.a, d.b))
    return {
        "epoch_s": float(update.epoch),
        "full": bool(update.full),
        "links": [_link_entry(d, update.full) for d in entries],
        "activity": [{"node": n.render(), "state": s} for n, s in update.activity],
    }


def encode_update(update: EpochUpdate) -> bytes:
    body = canonical_json(update_document(update))
    return _LEN.pack(len(body)) + body


def decode_update(message: bytes, constellation) -> EpochUpdate:
    """Inverse of :func:`encode_update`; ``message`` may include the length prefix."""
    if len(message) >= 4 and _LEN.unpack(message[:4])[0] == len(message) - 4:
        message = message[4:]
    return document_to_update(json.loads(message), constellation)


def document_to_update(doc: dict, constellation) -> EpochUpdate:
    from .naming import parse_node

    def node(name):
        return parse_node(name, constellation)

    activity = tuple((node(a["node"]), a["state"]) for a in doc["activity"])
    if doc["full"]:
        links = tuple(
            LinkState(node(e["a"]), node(e["b"]), e["latency_us"], e["bandwidth_kbps"], e["blocked"])
            for e in doc["links"]
        )
        return EpochUpdate(epoch=doc["epoch_s"], full=True, links=links, activity=activity)
    diffs = tuple(
        LinkDiff(
            node(e["a"]),
            node(e["b"]),
            e["change"],
            e.get("latency_us"),
            e.get("bandwidth_kbps"),
            e.get("blocked"),
        )
        for e in doc["links"]
    )
    return EpochUpdate(epoch=doc["epoch_s"], diffs=diffs, activity=activity)


def write_message(stream: BinaryIO, update: EpochUpdate) -> None:
    stream.write(encode_update(update))


def read_messages(stream: BinaryIO) -> Iterator[bytes]:
    while True:
        head = stream.read(4)
        if not head:
            return
        if len(head) < 4:
            raise EOFError("truncated length prefix")
        (n,) = _LEN.unpack(head)
        body = stream.read(n)
        if len(body) < n:
            raise EOFError("truncated message body")
        yield body


__all__ = ["canonical_json", "decode_update", "encode_update", "read_messages", "write_message"]
