"""Deterministic address allocation and ``.celestial`` name resolution."""

from __future__ import annotations

import ipaddress
import re

from .constellation import Constellation, NodeId
from .errors import AddressError, UnknownNodeError

BASE = int(ipaddress.IPv4Address("10.0.0.0"))
MAX_MACHINES = 1 << 22  # /30 blocks in 10.0.0.0/8
SUFFIX = ".celestial"

_SAT = re.compile(r"^(\d+)\.(\d+)$")
_GST = re.compile(r"^(?:gst\.([A-Za-z0-9_-]+)|([A-Za-z0-9_-]+)\.gst)$")


def allocate_address(global_index: int) -> tuple[ipaddress.IPv4Address, ipaddress.IPv4Address]:
    """(machine, gateway) addresses of the /30 block owned by ``global_index``."""
    if not 0 <= global_index < MAX_MACHINES:
        raise AddressError(f"machine index {global_index} outside the 10.0.0.0/8 /30 space")
    base = BASE + 4 * global_index
    return ipaddress.IPv4Address(base + 2), ipaddress.IPv4Address(base + 1)


def machine_name(node: NodeId) -> str:
    """Canonical DNS-style name."""
    if node.is_satellite:
        return f"{node.id}.{node.shell}{SUFFIX}"
    return f"{node.name}.gst{SUFFIX}"


def parse_node(text: str, constellation: Constellation) -> NodeId:
    """Parse ``878.0``, ``gst.accra`` or ``accra.gst``, with optional ``.celestial``.

    Raises ValueError on malformed names and UnknownNodeError on names that
    parse but do not exist in ``constellation``.
    """
    name = text[: -len(SUFFIX)] if text.endswith(SUFFIX) else text
    m = _SAT.match(name)
    if m:
        sat_id, shell = int(m.group(1)), int(m.group(2))
        if shell >= len(constellation.shells) or sat_id >= constellation.shells[shell].total:
            raise UnknownNodeError(f"unknown machine {text!r}")
        return NodeId.sat(shell, sat_id)
    m = _GST.match(name)
    if m:
        gname = m.group(1) or m.group(2)
        idx = constellation.gst_index.get(gname)
        if idx is None:
            raise UnknownNodeError(f"unknown machine {text!r}")
        return constellation.nodes[idx]
    raise ValueError(f"malformed machine name {text!r}")


class AddressBook:
    """Addresses for every machine of a constellation, in NodeId order."""

    def __init__(self, constellation: Constellation):
        self.constellation = constellation
        if len(constellation.nodes) > MAX_MACHINES:
            raise AddressError(f"{len(constellation.nodes)} machines exceed the address space")

    def address(self, node: NodeId) -> ipaddress.IPv4Address:
        try:
            i = self.constellation.index[node]
        except KeyError:
            raise UnknownNodeError(f"unknown machine {node}") from None
        return allocate_address(i)[0]

    def gateway(self, node: NodeId) -> ipaddress.IPv4Address:
        return allocate_address(self.constellation.index[node])[1]

    def resolve(self, name: str) -> ipaddress.IPv4Address:
        return self.address(parse_node(name, self.constellation))

    def reverse(self, addr) -> NodeId:
        off = int(ipaddress.IPv4Address(addr)) - BASE
        i, rem = divmod(off, 4)
        if rem != 2 or not 0 <= i < len(self.constellation.nodes):
            raise UnknownNodeError(f"no machine at {addr}")
        return self.constellation.nodes[i]
