"""EIGRP protocol instance: neighbor FSM, reliable transport, and the
diffusing route computation.

One instance models the EIGRP process of a single router.  It is driven
entirely from the outside through ``interface_up`` / ``interface_down`` /
``receive`` and through timers it registers on the injected clock, which
makes it equally usable under the discrete-event engine and under a hand
cranked fake clock in unit tests.  An instance is owned by exactly one
simulation and must only be touched from that simulation's thread.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from ipaddress import IPv4Address, IPv4Interface, IPv4Network
from typing import Callable, Iterable, Protocol

from .simtime import ps_from_seconds
from .wire import (
    DELAY_UNREACHABLE,
    EIGRP_MULTICAST_GROUP,
    AuthenticationTlv,
    EigrpPacket,
    Flags,
    InternalRouteTlv,
    Opcode,
    ParametersTlv,
    PeerTopologyIdListTlv,
    SoftwareVersionTlv,
)

log = logging.getLogger(__name__)

MAX_METRIC = 0xFFFFFFFF

#: Pseudo neighbor key for directly connected prefixes.
CONNECTED = "connected"

PASSIVE = "passive"
ACTIVE = "active"
PENDING = "pending"
UP = "up"

DEFAULT_K = (1, 0, 1, 0, 0)

#: Routes per Update/Query/Reply packet; keeps frames well under Ethernet MTU.
MAX_ROUTES_PER_PACKET = 40


class NeighborUnknown(Exception):
    """Transmission requested toward an address with no adjacency."""


class ClockLike(Protocol):
    """What the protocol needs from a scheduler: the current time in
    picoseconds plus cancellable one-shot timers."""

    now: int

    def call_at(self, time_ps: int, action: Callable[[], None]) -> object: ...

    def cancel(self, handle: object) -> None: ...


@dataclass(frozen=True)
class RouteComponents:
    """Vector metric of a path: bottleneck bandwidth, cumulative delay,
    and hop count.  Delay of DELAY_UNREACHABLE poisons the route."""

    bandwidth_kbps: int
    delay_tens_us: int
    hop_count: int = 0

    @property
    def unreachable(self) -> bool:
        return self.delay_tens_us == DELAY_UNREACHABLE

    def through(self, bandwidth_kbps: int, delay_tens_us: int) -> "RouteComponents":
        """Components after crossing one more hop (the receiving interface)."""
        if self.unreachable:
            return self
        return RouteComponents(
            min(self.bandwidth_kbps, bandwidth_kbps),
            self.delay_tens_us + delay_tens_us,
            min(self.hop_count + 1, 255),
        )


UNREACHABLE_COMPONENTS = RouteComponents(0, DELAY_UNREACHABLE, 0)


def compute_metric(
    components: RouteComponents,
    k: tuple[int, int, int, int, int] = DEFAULT_K,
    *,
    reliability: int = 255,
    load: int = 1,
) -> int:
    """Classic 32-bit composite metric.

    With the default K values this reduces to
    ``256 * (10**7 // bandwidth_kbps + delay_tens_us)`` in integer
    arithmetic; an unreachable delay yields MAX_METRIC.
    """
    if components.unreachable:
        return MAX_METRIC
    k1, k2, k3, k4, k5 = k
    bw = 256 * (10**7 // components.bandwidth_kbps)
    delay = 256 * components.delay_tens_us
    metric = k1 * bw + (k2 * bw) // (256 - load) + k3 * delay
    if k5 != 0:
        metric = metric * k5 // (reliability + k4)
    return min(metric, MAX_METRIC)


def feasibility_check(reported: int, feasible_distance: int) -> bool:
    """Loop-freedom condition: strictly smaller reported distance.

    A feasible distance of MAX_METRIC means "no historic distance yet" and
    accepts any finite reported distance.
    """
    return reported < feasible_distance


def route_tlv_for(dest: IPv4Network, components: RouteComponents) -> InternalRouteTlv:
    """Encode path components into a classic internal route TLV."""
    if components.unreachable:
        scaled_bw = (
            256 * (10**7 // components.bandwidth_kbps)
            if components.bandwidth_kbps
            else 0
        )
        return InternalRouteTlv(
            dest,
            scaled_delay=DELAY_UNREACHABLE,
            scaled_bandwidth=scaled_bw,
            hop_count=components.hop_count,
        )
    return InternalRouteTlv(
        dest,
        scaled_delay=256 * components.delay_tens_us,
        scaled_bandwidth=256 * (10**7 // components.bandwidth_kbps),
        hop_count=components.hop_count,
    )


def components_from_tlv(tlv: InternalRouteTlv) -> RouteComponents:
    """Inverse of route_tlv_for; exact for every value this simulator emits
    (both scalings are pure multiplications by 256)."""
    if tlv.scaled_bandwidth >= 256:
        bw = 10**7 // (tlv.scaled_bandwidth // 256)
    else:
        bw = 0
    if tlv.scaled_delay == DELAY_UNREACHABLE:
        return RouteComponents(bw, DELAY_UNREACHABLE, tlv.hop_count)
    return RouteComponents(bw, tlv.scaled_delay // 256, tlv.hop_count)


def unreachable_tlv(dest: IPv4Network) -> InternalRouteTlv:
    return InternalRouteTlv(dest, scaled_delay=DELAY_UNREACHABLE, scaled_bandwidth=0)


@dataclass(frozen=True)
class EigrpConfig:
    as_number: int
    k_values: tuple[int, int, int, int, int] = DEFAULT_K
    hello_interval: int = 5
    hold_time: int = 15
    retransmit_limit: int = 16
    rto_seconds: int = 1
    networks: tuple[IPv4Network, ...] = ()
    auth_magic: bytes | None = None


@dataclass
class Port:
    """One router interface as seen by the protocol."""

    name: str
    address: IPv4Interface
    bandwidth_kbps: int
    delay_tens_us: int
    enabled: bool = True
    up: bool = False

    @property
    def prefix(self) -> IPv4Network:
        return self.address.network

    @property
    def components(self) -> RouteComponents:
        return RouteComponents(self.bandwidth_kbps, self.delay_tens_us, 0)


@dataclass
class RouteSourceInfo:
    """What one source (a neighbor, or a connected interface) offers for a
    destination."""

    via: IPv4Address | str
    iface: str
    components: RouteComponents  # cost through this source, from here
    reported: RouteComponents  # cost the source itself advertised

    @property
    def total_metric(self) -> int:
        return compute_metric(self.components)

    @property
    def reported_distance(self) -> int:
        return compute_metric(self.reported)


@dataclass
class TopologyEntry:
    destination: IPv4Network
    feasible_distance: int = MAX_METRIC
    sources: dict = field(default_factory=dict)  # via -> RouteSourceInfo
    state: str = PASSIVE
    successors: set = field(default_factory=set)  # via keys
    replies_outstanding: set = field(default_factory=set)
    deferred_replies: set = field(default_factory=set)
    metric: int = MAX_METRIC

    def successor_components(self) -> RouteComponents:
        for via in sorted(self.successors, key=_via_key):
            return self.sources[via].components
        return UNREACHABLE_COMPONENTS


@dataclass
class PendingTx:
    """A reliable packet queued toward a neighbor (stop-and-wait per
    neighbor; at most one packet in flight)."""

    template: EigrpPacket
    multicast: bool
    final: EigrpPacket | None = None
    retries: int = 0
    wire_sent: bool = False

    @property
    def sequence(self) -> int:
        return self.template.sequence


@dataclass
class NeighborEntry:
    address: IPv4Address
    iface: str
    hold_time: int
    state: str = PENDING
    last_seq_received: int = 0
    last_acked_seq: int = 0
    init_seen: bool = False
    init_acked: bool = False
    inflight: PendingTx | None = None
    queue: deque = field(default_factory=deque)
    hold_handle: object = None
    hold_deadline: int = 0
    rto_handle: object = None


def _via_key(via) -> tuple:
    if via == CONNECTED:
        return (0, 0)
    return (1, int(via))


def _dest_key(network: IPv4Network) -> tuple[int, int]:
    return (int(network.network_address), network.prefixlen)


class EigrpInstance:
    """The EIGRP process of one router."""

    SEND_METRIC = "send-with-metric"
    SEND_POISONED = "send-poisoned"
    SUPPRESS = "suppress"

    def __init__(
        self,
        node_id: str,
        config: EigrpConfig,
        ports: Iterable[Port],
        clock: ClockLike,
        transmit: Callable[[str, IPv4Address, EigrpPacket], None],
    ):
        self.node_id = node_id
        self.config = config
        self.ports = {p.name: p for p in ports}
        self.clock = clock
        self._transmit = transmit
        self.neighbors: dict[IPv4Address, NeighborEntry] = {}
        self.topology: dict[IPv4Network, TopologyEntry] = {}
        self.counters: dict[str, int] = {}
        self._seq = 0
        self._hello_handles: dict[str, object] = {}
        # Last metric advertised per (interface, destination).  MAX_METRIC
        # doubles as "never advertised", which suppresses pointless poison
        # announcements for routes the peer has never heard about.
        self._advertised: dict[tuple[str, IPv4Network], int] = {}
        self._dirty: set[IPv4Network] = set()
        self._query_dirty: set[IPv4Network] = set()
        self._reply_queue: list[tuple[IPv4Address, EigrpPacket]] = []
        if self.config.networks:
            for port in self.ports.values():
                port.enabled = port.enabled and any(
                    port.address.ip in net for net in self.config.networks
                )

    # -- small helpers ---------------------------------------------------

    def _count(self, what: str) -> None:
        self.counters[what] = self.counters.get(what, 0) + 1

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def sorted_destinations(self) -> list[IPv4Network]:
        return sorted(self.topology, key=_dest_key)

    def up_neighbors(self, iface: str | None = None) -> list[NeighborEntry]:
        return [
            n
            for _, n in sorted(self.neighbors.items(), key=lambda kv: int(kv[0]))
            if n.state == UP and (iface is None or n.iface == iface)
        ]

    def _active_ifaces(self) -> list[Port]:
        return [p for _, p in sorted(self.ports.items()) if p.enabled and p.up]

    # -- interface lifecycle ----------------------------------------------

    def interface_up(self, name: str) -> None:
        port = self.ports[name]
        if port.up:
            return
        port.up = True
        if not port.enabled:
            return
        log.debug("%s: interface %s up", self.node_id, name)
        self._install_connected(port)
        self._flush()
        self._send_hello(name)
        self._schedule_hello(name)

    def interface_down(self, name: str) -> None:
        port = self.ports[name]
        if not port.up:
            return
        port.up = False
        if not port.enabled:
            return
        log.debug("%s: interface %s down", self.node_id, name)
        handle = self._hello_handles.pop(name, None)
        if handle is not None:
            self.clock.cancel(handle)
        for addr in [a for a, n in self.neighbors.items() if n.iface == name]:
            self._delete_neighbor(self.neighbors[addr], "interface down")
        entry = self.topology.get(port.prefix)
        if entry is not None and CONNECTED in entry.sources:
            del entry.sources[CONNECTED]
            entry.successors.discard(CONNECTED)
            self._reevaluate(port.prefix)
        self._flush()

    def _install_connected(self, port: Port) -> None:
        entry = self.topology.setdefault(port.prefix, TopologyEntry(port.prefix))
        entry.sources[CONNECTED] = RouteSourceInfo(
            CONNECTED, port.name, port.components, port.components
        )
        self._reevaluate(port.prefix)

    # -- hello / adjacency --------------------------------------------------

    def _hello_tlvs(self) -> tuple:
        k1, k2, k3, k4, k5 = self.config.k_values
        tlvs: list = [
            ParametersTlv(k1, k2, k3, k4, k5, self.config.hold_time),
            SoftwareVersionTlv(),
            PeerTopologyIdListTlv(),
        ]
        if self.config.auth_magic is not None:
            tlvs.insert(0, AuthenticationTlv(self.config.auth_magic))
        return tuple(tlvs)

    def _send_hello(self, iface: str) -> None:
        self._transmit(
            iface,
            EIGRP_MULTICAST_GROUP,
            EigrpPacket(
                Opcode.HELLO,
                autonomous_system=self.config.as_number,
                tlvs=self._hello_tlvs(),
            ),
        )

    def _schedule_hello(self, iface: str) -> None:
        deadline = self.clock.now + ps_from_seconds(self.config.hello_interval)

        def fire() -> None:
            port = self.ports.get(iface)
            if port is None or not port.up:
                return
            self._send_hello(iface)
            self._schedule_hello(iface)

        self._hello_handles[iface] = self.clock.call_at(deadline, fire)

    def _send_ack(self, nbr: NeighborEntry) -> None:
        """Standalone acknowledgment: a Hello with only the ack field set."""
        tlvs: tuple = ()
        if self.config.auth_magic is not None:
            tlvs = (AuthenticationTlv(self.config.auth_magic),)
        self._transmit(
            nbr.iface,
            nbr.address,
            EigrpPacket(
                Opcode.HELLO,
                acknowledgment=nbr.last_seq_received,
                autonomous_system=self.config.as_number,
                tlvs=tlvs,
            ),
        )
        nbr.last_acked_seq = nbr.last_seq_received

    def process_hello(self, iface: str, src: IPv4Address, pkt: EigrpPacket) -> None:
        params = next((t for t in pkt.tlvs if isinstance(t, ParametersTlv)), None)
        if params is None:
            return  # ack-only hello; the ack field was handled by the caller
        if params.k_values != self.config.k_values:
            self._count("dropped-k-mismatch")
            log.info(
                "%s: hello from %s ignored, K values %s do not match %s",
                self.node_id, src, params.k_values, self.config.k_values,
            )
            return
        nbr = self.neighbors.get(src)
        if nbr is None:
            nbr = NeighborEntry(src, iface, params.hold_time)
            self.neighbors[src] = nbr
            log.info("%s: new neighbor %s on %s, pending", self.node_id, src, iface)
            self._enqueue(
                nbr,
                EigrpPacket(
                    Opcode.UPDATE,
                    Flags.INIT,
                    autonomous_system=self.config.as_number,
                ),
                multicast=False,
            )
            self._pump(nbr)
        nbr.hold_time = params.hold_time
        self._reset_hold(nbr)

    def _reset_hold(self, nbr: NeighborEntry) -> None:
        if nbr.hold_handle is not None:
            self.clock.cancel(nbr.hold_handle)
        nbr.hold_deadline = self.clock.now + ps_from_seconds(nbr.hold_time)
        nbr.hold_handle = self.clock.call_at(
            nbr.hold_deadline, lambda: self.expire_hold_timer(nbr)
        )

    def expire_hold_timer(self, nbr: NeighborEntry) -> None:
        if self.neighbors.get(nbr.address) is not nbr:
            return
        log.info("%s: hold timer expired for %s", self.node_id, nbr.address)
        self._delete_neighbor(nbr, "hold expired")
        self._flush()

    def _delete_neighbor(self, nbr: NeighborEntry, reason: str) -> None:
        """Tear an adjacency down and re-run the route computation for every
        destination it contributed to."""
        log.info("%s: neighbor %s deleted (%s)", self.node_id, nbr.address, reason)
        for handle in (nbr.hold_handle, nbr.rto_handle):
            if handle is not None:
                self.clock.cancel(handle)
        nbr.queue.clear()
        nbr.inflight = None
        del self.neighbors[nbr.address]
        for dest in self.sorted_destinations():
            entry = self.topology[dest]
            touched = nbr.address in entry.sources
            if touched:
                del entry.sources[nbr.address]
                entry.successors.discard(nbr.address)
            if entry.state == ACTIVE:
                entry.deferred_replies.discard(nbr.address)
                if nbr.address in entry.replies_outstanding:
                    entry.replies_outstanding.discard(nbr.address)
                    if not entry.replies_outstanding:
                        self._diffusion_complete(entry)
            elif touched:
                self._reevaluate(dest)

    # -- reliable transport --------------------------------------------------

    def rtp_send(
        self, dest: IPv4Address, pkt: EigrpPacket, iface: str | None = None
    ) -> None:
        """Queue or emit one packet toward ``dest``.

        Update/Query/Reply are sequenced and retransmitted until acked;
        Hello is fire-and-forget.  Multicast destinations need the outgoing
        interface.  Raises NeighborUnknown for a unicast destination with no
        adjacency.
        """
        if pkt.opcode is Opcode.HELLO:
            if dest == EIGRP_MULTICAST_GROUP:
                if iface is None:
                    raise ValueError("multicast send needs an interface")
                self._transmit(iface, dest, pkt)
            else:
                nbr = self.neighbors.get(dest)
                if nbr is None:
                    raise NeighborUnknown(str(dest))
                self._transmit(nbr.iface, dest, pkt)
            return
        if dest == EIGRP_MULTICAST_GROUP:
            if iface is None:
                raise ValueError("multicast send needs an interface")
            self._enqueue_multicast(iface, pkt)
            return
        nbr = self.neighbors.get(dest)
        if nbr is None:
            raise NeighborUnknown(str(dest))
        self._enqueue(nbr, pkt, multicast=False)
        self._pump(nbr)

    def _enqueue(
        self, nbr: NeighborEntry, template: EigrpPacket, *, multicast: bool
    ) -> None:
        nbr.queue.append(
            PendingTx(replace(template, sequence=self._next_seq()), multicast)
        )

    def _enqueue_multicast(self, iface: str, template: EigrpPacket) -> None:
        """Queue one reliable multicast packet on an interface.

        Links are point-to-point, so delivery is tracked against the single
        up neighbor of the interface; with no up neighbor there is nobody to
        deliver to and the packet is skipped.
        """
        targets = self.up_neighbors(iface)
        if not targets:
            return
        tx = PendingTx(replace(template, sequence=self._next_seq()), multicast=True)
        for nbr in targets:
            nbr.queue.append(tx)
        for nbr in targets:
            self._pump(nbr)

    def _pump(self, nbr: NeighborEntry) -> None:
        """Transmit the head of the queue if nothing is in flight."""
        if nbr.inflight is not None or not nbr.queue:
            return
        tx = nbr.queue.popleft()
        nbr.inflight = tx
        if tx.final is None:
            # Piggyback the latest seen peer sequence on unicast packets;
            # multicast packets cannot acknowledge a single peer.
            ack = 0 if tx.multicast else nbr.last_seq_received
            tx.final = replace(tx.template, acknowledgment=ack)
            if ack:
                nbr.last_acked_seq = max(nbr.last_acked_seq, ack)
        if not tx.multicast or not tx.wire_sent:
            tx.wire_sent = True
            dst = EIGRP_MULTICAST_GROUP if tx.multicast else nbr.address
            self._transmit(nbr.iface, dst, tx.final)
        self._arm_rto(nbr)

    def _arm_rto(self, nbr: NeighborEntry) -> None:
        if nbr.rto_handle is not None:
            self.clock.cancel(nbr.rto_handle)
        deadline = self.clock.now + ps_from_seconds(self.config.rto_seconds)
        nbr.rto_handle = self.clock.call_at(deadline, lambda: self._retransmit(nbr))

    def _retransmit(self, nbr: NeighborEntry) -> None:
        if self.neighbors.get(nbr.address) is not nbr or nbr.inflight is None:
            return
        tx = nbr.inflight
        tx.retries += 1
        if tx.retries > self.config.retransmit_limit:
            log.warning(
                "%s: retransmit limit reached for %s seq %d",
                self.node_id, nbr.address, tx.sequence,
            )
            self._delete_neighbor(nbr, "retransmit limit")
            self._flush()
            return
        self._count("retransmissions")
        # Retransmissions always go unicast, even for multicast originals.
        self._transmit(nbr.iface, nbr.address, tx.final)
        self._arm_rto(nbr)

    def _handle_ack(self, nbr: NeighborEntry, ack: int) -> None:
        acked_init = False
        while nbr.inflight is not None and nbr.inflight.sequence <= ack:
            if Flags.INIT in nbr.inflight.final.flags:
                acked_init = True
            nbr.inflight = None
            if nbr.rto_handle is not None:
                self.clock.cancel(nbr.rto_handle)
                nbr.rto_handle = None
            self._pump(nbr)
        if acked_init:
            nbr.init_acked = True
            self._maybe_up(nbr)

    def _maybe_up(self, nbr: NeighborEntry) -> None:
        if nbr.state == PENDING and nbr.init_seen and nbr.init_acked:
            nbr.state = UP
            log.info(
                "%s: neighbor %s went from pending to up", self.node_id, nbr.address
            )
            self.initial_sync(nbr)

    # -- receive path -----------------------------------------------------------

    def receive(self, iface: str, src: IPv4Address, pkt: EigrpPacket) -> None:
        if pkt.autonomous_system != self.config.as_number:
            self._count("dropped-as-mismatch")
            return
        if self.config.auth_magic is not None:
            auth = next(
                (t for t in pkt.tlvs if isinstance(t, AuthenticationTlv)), None
            )
            if auth is None or auth.magic != self.config.auth_magic:
                self._count("dropped-auth")
                return
        port = self.ports.get(iface)
        if port is None or not port.enabled or not port.up:
            self._count("dropped-iface-down")
            return

        nbr = self.neighbors.get(src)
        if pkt.acknowledgment and nbr is not None:
            self._handle_ack(nbr, pkt.acknowledgment)
            nbr = self.neighbors.get(src)  # ack handling can tear down

        if pkt.opcode is Opcode.HELLO:
            self.process_hello(iface, src, pkt)
            return

        if nbr is None:
            self._count("dropped-no-neighbor")
            return

        is_init = Flags.INIT in pkt.flags
        if nbr.state == PENDING and not is_init:
            # Routing traffic from a peer that has not finished the INIT
            # exchange is ignored outright, without acknowledgment.
            self._count("ignored-while-pending")
            log.debug(
                "%s: ignoring %s seq %d from pending neighbor %s",
                self.node_id, pkt.opcode.name, pkt.sequence, nbr.address,
            )
            return
        if pkt.sequence <= nbr.last_seq_received:
            self._count("duplicates")
            self._send_ack(nbr)
            return
        nbr.last_seq_received = pkt.sequence

        if is_init:
            nbr.init_seen = True
            self._maybe_up(nbr)
        elif pkt.opcode is Opcode.UPDATE:
            self.process_update(nbr, pkt.routes())
        elif pkt.opcode is Opcode.QUERY:
            self.process_query(nbr, pkt.routes())
        elif pkt.opcode is Opcode.REPLY:
            self.process_reply(nbr, pkt.routes())

        nbr = self.neighbors.get(src)
        if nbr is not None:
            self._pump(nbr)
            if nbr.last_acked_seq < nbr.last_seq_received:
                self._send_ack(nbr)

    # -- advertisement policy ----------------------------------------------------

    def advertise_filter(self, entry: TopologyEntry, out_iface: str) -> str:
        """Split horizon with poison reverse.

        Destinations whose successor sits on ``out_iface`` are advertised as
        unreachable there; a prefix is never advertised into the interface
        it is configured on.
        """
        connected = entry.sources.get(CONNECTED)
        if connected is not None and connected.iface == out_iface:
            return self.SUPPRESS
        if not entry.successors:
            return self.SEND_POISONED
        for via in entry.successors:
            if entry.sources[via].iface == out_iface:
                return self.SEND_POISONED
        return self.SEND_METRIC

    def _advert_tlv(self, entry: TopologyEntry, decision: str) -> InternalRouteTlv:
        components = entry.successor_components()
        if decision == self.SEND_POISONED and not components.unreachable:
            components = RouteComponents(
                components.bandwidth_kbps, DELAY_UNREACHABLE, components.hop_count
            )
        return route_tlv_for(entry.destination, components)

    def _advert_value(self, entry: TopologyEntry, decision: str) -> int:
        return entry.metric if decision == self.SEND_METRIC else MAX_METRIC

    def initial_sync(self, nbr: NeighborEntry) -> None:
        """Send the whole topology table to a freshly established neighbor.

        Contents go out as multicast Updates with the end-of-table flag on
        the last packet; an empty table still produces one empty Update so
        the peer learns the table is complete.
        """
        tlvs: list[InternalRouteTlv] = []
        for dest in self.sorted_destinations():
            entry = self.topology[dest]
            decision = self.advertise_filter(entry, nbr.iface)
            if decision == self.SUPPRESS:
                continue
            tlvs.append(self._advert_tlv(entry, decision))
            self._advertised[(nbr.iface, dest)] = self._advert_value(entry, decision)
        chunks = [
            tlvs[i : i + MAX_ROUTES_PER_PACKET]
            for i in range(0, len(tlvs), MAX_ROUTES_PER_PACKET)
        ] or [[]]
        for i, chunk in enumerate(chunks):
            flags = Flags.EOT if i == len(chunks) - 1 else Flags.NONE
            self._enqueue(
                nbr,
                EigrpPacket(
                    Opcode.UPDATE,
                    flags,
                    autonomous_system=self.config.as_number,
                    tlvs=tuple(chunk),
                ),
                multicast=True,
            )
        self._pump(nbr)

    # -- diffusing computation -----------------------------------------------------

    def _reevaluate(self, dest: IPv4Network) -> None:
        entry = self.topology.get(dest)
        if entry is not None and entry.state == PASSIVE:
            self.dual_reevaluate(entry)

    def dual_reevaluate(self, entry: TopologyEntry) -> None:
        """Local computation for a passive destination.

        Keeps the destination passive when a feasible best source remains
        (lowering the feasible distance if the best metric dropped),
        otherwise starts a diffusing computation by querying neighbors.
        """
        if CONNECTED in entry.sources:
            entry.successors = {CONNECTED}
            entry.metric = entry.sources[CONNECTED].total_metric
            entry.feasible_distance = min(entry.feasible_distance, entry.metric)
            self._dirty.add(entry.destination)
            return
        finite = [s for s in entry.sources.values() if not s.components.unreachable]
        if finite:
            best = min(s.total_metric for s in finite)
            chosen = {
                s.via
                for s in finite
                if s.total_metric == best
                and feasibility_check(s.reported_distance, entry.feasible_distance)
            }
            if chosen:
                entry.successors = chosen
                entry.metric = best
                entry.feasible_distance = min(entry.feasible_distance, best)
                self._dirty.add(entry.destination)
                return
        self._go_active(entry, exclude=None)

    def _go_active(self, entry: TopologyEntry, exclude: IPv4Address | None) -> None:
        entry.successors = set()
        entry.metric = MAX_METRIC
        targets = {n.address for n in self.up_neighbors() if n.address != exclude}
        if not targets:
            self._withdraw(entry)
            return
        entry.state = ACTIVE
        entry.replies_outstanding = targets
        log.info(
            "%s: %s active, querying %s",
            self.node_id,
            entry.destination,
            ",".join(str(a) for a in sorted(targets, key=int)),
        )
        self._query_dirty.add(entry.destination)
        self._dirty.add(entry.destination)

    def _withdraw(self, entry: TopologyEntry) -> None:
        log.info("%s: %s unreachable, withdrawn", self.node_id, entry.destination)
        self._dirty.add(entry.destination)
        del self.topology[entry.destination]

    def _diffusion_complete(self, entry: TopologyEntry) -> None:
        """All replies are in: pick the best surviving source, reset the
        feasible distance to it, and answer queries that were put off."""
        entry.state = PASSIVE
        entry.replies_outstanding = set()
        deferred = sorted(entry.deferred_replies, key=int)
        entry.deferred_replies = set()
        finite = [s for s in entry.sources.values() if not s.components.unreachable]
        if finite:
            best = min(s.total_metric for s in finite)
            entry.successors = {s.via for s in finite if s.total_metric == best}
            entry.metric = best
            entry.feasible_distance = best
            log.info(
                "%s: %s passive again, metric %d",
                self.node_id, entry.destination, best,
            )
            self._dirty.add(entry.destination)
        else:
            entry.successors = set()
            entry.metric = MAX_METRIC
            self._withdraw(entry)
        for address in deferred:
            nbr = self.neighbors.get(address)
            if nbr is not None:
                self._reply_queue.append(
                    (address, [self._reply_tlv(entry.destination, nbr.iface)])
                )

    def _reply_tlv(self, dest: IPv4Network, out_iface: str) -> InternalRouteTlv:
        entry = self.topology.get(dest)
        if entry is None:
            return unreachable_tlv(dest)
        decision = self.advertise_filter(entry, out_iface)
        # A reply always answers; split horizon degrades to poison here.
        if decision != self.SEND_METRIC:
            decision = self.SEND_POISONED
        return self._advert_tlv(entry, decision)

    # -- incoming route information ---------------------------------------------

    def _record_source(
        self, nbr: NeighborEntry, dest: IPv4Network, reported: RouteComponents
    ) -> TopologyEntry:
        port = self.ports[nbr.iface]
        entry = self.topology.setdefault(dest, TopologyEntry(dest))
        entry.sources[nbr.address] = RouteSourceInfo(
            nbr.address,
            nbr.iface,
            reported.through(port.bandwidth_kbps, port.delay_tens_us),
            reported,
        )
        return entry

    def process_update(self, nbr: NeighborEntry, routes) -> None:
        for tlv in routes:
            if tlv.unreachable and tlv.destination not in self.topology:
                continue  # withdrawal of something we never knew
            entry = self._record_source(nbr, tlv.destination, components_from_tlv(tlv))
            if entry.state == PASSIVE:
                self.dual_reevaluate(entry)
        self._flush()

    def process_query(self, nbr: NeighborEntry, routes) -> None:
        answers: list[InternalRouteTlv] = []
        for tlv in routes:
            dest = tlv.destination
            if dest not in self.topology:
                answers.append(unreachable_tlv(dest))
                continue
            entry = self.topology[dest]
            # Whatever the query carries, the sender has lost its path.
            entry.sources[nbr.address] = RouteSourceInfo(
                nbr.address, nbr.iface, UNREACHABLE_COMPONENTS, UNREACHABLE_COMPONENTS
            )
            if entry.state == ACTIVE:
                answers.append(self._reply_tlv(dest, nbr.iface))
                continue
            was_successor = nbr.address in entry.successors
            entry.successors.discard(nbr.address)
            if not entry.successors and was_successor:
                # The query stripped our only successor: diffuse toward the
                # other neighbors and answer this one once that finishes.
                self._go_active(entry, exclude=nbr.address)
                if dest in self.topology and self.topology[dest].state == ACTIVE:
                    self.topology[dest].deferred_replies.add(nbr.address)
                else:
                    answers.append(self._reply_tlv(dest, nbr.iface))
            else:
                self.dual_reevaluate(entry)
                answers.append(self._reply_tlv(dest, nbr.iface))
        if answers:
            self._reply_queue.append((nbr.address, answers))
        self._flush()

    def process_reply(self, nbr: NeighborEntry, routes) -> None:
        for tlv in routes:
            entry = self._record_source(nbr, tlv.destination, components_from_tlv(tlv))
            if entry.state != ACTIVE or nbr.address not in entry.replies_outstanding:
                log.warning(
                    "%s: unexpected reply for %s from %s",
                    self.node_id, tlv.destination, nbr.address,
                )
                self._count("unexpected-replies")
                if entry.state == PASSIVE:
                    self.dual_reevaluate(entry)
                continue
            entry.replies_outstanding.discard(nbr.address)
            if not entry.replies_outstanding:
                self._diffusion_complete(entry)
        self._flush()

    # -- deferred output batching ---------------------------------------------

    def _flush(self) -> None:
        """Emit what the current processing step produced: replies first,
        then triggered Updates, then Queries, each aggregated per packet."""
        replies, self._reply_queue = self._reply_queue, []
        dirty, self._dirty = self._dirty, set()
        queries, self._query_dirty = self._query_dirty, set()

        for address, tlvs in replies:
            nbr = self.neighbors.get(address)
            if nbr is None:
                continue
            tlvs = sorted(tlvs, key=lambda t: _dest_key(t.destination))
            for i in range(0, len(tlvs), MAX_ROUTES_PER_PACKET):
                self._enqueue(
                    nbr,
                    EigrpPacket(
                        Opcode.REPLY,
                        autonomous_system=self.config.as_number,
                        tlvs=tuple(tlvs[i : i + MAX_ROUTES_PER_PACKET]),
                    ),
                    multicast=False,
                )
            self._pump(nbr)

        if dirty:
            self._emit_triggered_updates(dirty)
        if queries:
            self._emit_queries(queries)

    def _emit_triggered_updates(self, dests: set) -> None:
        for port in self._active_ifaces():
            if not self.up_neighbors(port.name):
                continue
            tlvs = []
            for dest in sorted(dests, key=_dest_key):
                entry = self.topology.get(dest)
                if entry is None:
                    value, tlv = MAX_METRIC, unreachable_tlv(dest)
                elif entry.state == ACTIVE:
                    # The advertised distance freezes while diffusing.
                    continue
                else:
                    decision = self.advertise_filter(entry, port.name)
                    if decision == self.SUPPRESS:
                        continue
                    value = self._advert_value(entry, decision)
                    tlv = self._advert_tlv(entry, decision)
                if self._advertised.get((port.name, dest), MAX_METRIC) == value:
                    continue
                self._advertised[(port.name, dest)] = value
                tlvs.append(tlv)
            for i in range(0, len(tlvs), MAX_ROUTES_PER_PACKET):
                self._enqueue_multicast(
                    port.name,
                    EigrpPacket(
                        Opcode.UPDATE,
                        autonomous_system=self.config.as_number,
                        tlvs=tuple(tlvs[i : i + MAX_ROUTES_PER_PACKET]),
                    ),
                )

    def _emit_queries(self, dests: set) -> None:
        # A query advertises the destination as unreachable from our side.
        by_iface: dict[str, list] = {}
        for dest in sorted(dests, key=_dest_key):
            entry = self.topology.get(dest)
            if entry is None or entry.state != ACTIVE:
                continue
            for address in entry.replies_outstanding:
                iface = self.neighbors[address].iface
                routes = by_iface.setdefault(iface, [])
                tlv = unreachable_tlv(dest)
                if tlv not in routes:
                    routes.append(tlv)
        for iface in sorted(by_iface):
            tlvs = by_iface[iface]
            for i in range(0, len(tlvs), MAX_ROUTES_PER_PACKET):
                self._enqueue_multicast(
                    iface,
                    EigrpPacket(
                        Opcode.QUERY,
                        autonomous_system=self.config.as_number,
                        tlvs=tuple(tlvs[i : i + MAX_ROUTES_PER_PACKET]),
                    ),
                )
