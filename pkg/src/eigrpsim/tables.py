"""Routing-table maintenance and table snapshots.

The routing table is a pure function of the protocol's topology table and
interface states: recomputing it from scratch always equals the result of
incremental maintenance, which is why there is no incremental path at all.
Snapshots are deep immutable copies, safe to hand to any thread.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from ipaddress import IPv4Address, IPv4Network

from . import protocol
from .simtime import seconds_str

AD_CONNECTED = 0
AD_EIGRP_INTERNAL = 90


@dataclass(frozen=True)
class RoutingEntry:
    source: str  # "C" connected, "D" learned
    destination: IPv4Network
    administrative_distance: int
    metric: int
    next_hop: IPv4Address | None
    exit_interface: str

    def render(self) -> str:
        if self.source == "C":
            return (
                f"C {self.destination} is directly connected, "
                f"{self.exit_interface}"
            )
        return (
            f"{self.source} {self.destination} "
            f"[{self.administrative_distance}/{self.metric}] "
            f"via {self.next_hop}, {self.exit_interface}"
        )


@dataclass(frozen=True)
class TopologySummary:
    destination: IPv4Network
    state: str
    feasible_distance: int
    metric: int
    successors: tuple[str, ...]
    sources: tuple[tuple[str, int, int], ...]  # (via, reported, total)


@dataclass(frozen=True)
class NeighborSummary:
    address: IPv4Address
    iface: str
    state: str
    hold_remaining_s: str


@dataclass(frozen=True)
class TableSnapshot:
    node: str
    at_time: str  # seconds, decimal string
    routing: tuple[RoutingEntry, ...]
    topology: tuple[TopologySummary, ...]
    neighbors: tuple[NeighborSummary, ...]


def _entry_sort_key(entry: RoutingEntry):
    return (
        int(entry.destination.network_address),
        entry.destination.prefixlen,
        0 if entry.next_hop is None else int(entry.next_hop),
    )


def sync_routing_table(instance: protocol.EigrpInstance) -> list[RoutingEntry]:
    """Derive the routing table: connected entries for up interfaces plus
    one learned entry per passive destination per successor."""
    entries: list[RoutingEntry] = []
    for dest in instance.sorted_destinations():
        topo = instance.topology[dest]
        for via in sorted(topo.successors, key=protocol._via_key):
            source = topo.sources.get(via)
            if source is None:
                continue
            if via == protocol.CONNECTED:
                entries.append(
                    RoutingEntry(
                        "C", dest, AD_CONNECTED, 0, None, source.iface
                    )
                )
            elif topo.state == protocol.PASSIVE:
                entries.append(
                    RoutingEntry(
                        "D", dest, AD_EIGRP_INTERNAL, topo.metric,
                        via, source.iface,
                    )
                )
    entries.sort(key=_entry_sort_key)
    return entries


def take_snapshot(
    instance: protocol.EigrpInstance, at_time_ps: int
) -> TableSnapshot:
    """Deep immutable copy of the routing, topology and neighbor tables."""
    topology = []
    for dest in instance.sorted_destinations():
        topo = instance.topology[dest]
        topology.append(
            TopologySummary(
                destination=dest,
                state=topo.state,
                feasible_distance=topo.feasible_distance,
                metric=topo.metric,
                successors=tuple(
                    str(v) for v in sorted(topo.successors, key=protocol._via_key)
                ),
                sources=tuple(
                    (
                        str(via),
                        topo.sources[via].reported_distance,
                        topo.sources[via].total_metric,
                    )
                    for via in sorted(topo.sources, key=protocol._via_key)
                ),
            )
        )
    neighbors = []
    for addr in sorted(instance.neighbors, key=int):
        nbr = instance.neighbors[addr]
        remaining = max(0, nbr.hold_deadline - at_time_ps)
        neighbors.append(
            NeighborSummary(addr, nbr.iface, nbr.state, seconds_str(remaining))
        )
    return TableSnapshot(
        node=instance.node_id,
        at_time=seconds_str(at_time_ps),
        routing=tuple(sync_routing_table(instance)),
        topology=tuple(topology),
        neighbors=tuple(neighbors),
    )


# -- snapshot text format ------------------------------------------------------
#
# One route per line, sorted by (prefix, mask, next hop):
#
#   # node=R1 t=104
#   C 1.0.0.0/24 is directly connected, lan0
#   D 2.0.0.0/24 [90/307200] via 10.0.12.2, ethg0

_ROUTE_RE = re.compile(
    r"^(?P<source>[CD]) (?P<dest>\S+) "
    r"(?:is directly connected, (?P<ciface>\S+)"
    r"|\[(?P<ad>\d+)/(?P<metric>\d+)\] via (?P<nh>\S+), (?P<iface>\S+))$"
)


def render_snapshot(snapshot: TableSnapshot) -> str:
    lines = [f"# node={snapshot.node} t={snapshot.at_time}"]
    lines.extend(entry.render() for entry in snapshot.routing)
    return "\n".join(lines) + "\n"


def parse_snapshot(text: str) -> TableSnapshot:
    """Read the snapshot text format back (routing entries only; the
    topology and neighbor sections exist only on live snapshots)."""
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or not lines[0].startswith("# node="):
        raise ValueError("snapshot must start with a '# node=... t=...' header")
    header = re.match(r"# node=(\S+) t=(\S+)$", lines[0])
    if header is None:
        raise ValueError(f"bad snapshot header: {lines[0]!r}")
    entries = []
    for line in lines[1:]:
        m = _ROUTE_RE.match(line.strip())
        if m is None:
            raise ValueError(f"bad snapshot route line: {line!r}")
        if m.group("ciface"):
            entries.append(
                RoutingEntry(
                    "C", IPv4Network(m.group("dest")), AD_CONNECTED, 0,
                    None, m.group("ciface"),
                )
            )
        else:
            entries.append(
                RoutingEntry(
                    m.group("source"),
                    IPv4Network(m.group("dest")),
                    int(m.group("ad")),
                    int(m.group("metric")),
                    IPv4Address(m.group("nh")),
                    m.group("iface"),
                )
            )
    entries.sort(key=_entry_sort_key)
    return TableSnapshot(
        node=header.group(1),
        at_time=header.group(2),
        routing=tuple(entries),
        topology=(),
        neighbors=(),
    )
