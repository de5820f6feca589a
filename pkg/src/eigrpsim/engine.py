"""Deterministic discrete-event engine: scheduler, point-to-point links,
scripted topology changes, per-interface frame tracing, and PCAP export.

A Simulation instance is single-threaded and owns all of its state.
Separate instances share nothing and may run concurrently in different
threads or processes.
"""

from __future__ import annotations

import heapq
import logging
import random
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from ipaddress import IPv4Address, IPv4Interface, IPv4Network
from pathlib import Path

from . import protocol, wire
from .simtime import PICOS_PER_SECOND, ps_from_seconds, seconds_str

log = logging.getLogger(__name__)

PRIO_FRAME = 0
PRIO_TIMER = 1
PRIO_SNAPSHOT = 2
PRIO_SCENARIO = 3

_KIND_NAMES = {
    PRIO_FRAME: "frame-delivery",
    PRIO_TIMER: "timer-fire",
    PRIO_SNAPSHOT: "snapshot",
    PRIO_SCENARIO: "scenario-action",
}


class PastTime(Exception):
    """Attempt to schedule an event before the current simulated time."""


class UnknownLink(Exception):
    """Scenario action names a link endpoint that does not exist."""


class ParseError(Exception):
    """Configuration or scenario document is malformed."""


class UnknownAttribute(ParseError):
    """Scenario element carries an attribute outside the grammar."""


class IoFailure(Exception):
    """Artifact could not be written."""


@dataclass(order=True)
class SimEvent:
    """Queue entry.  Events dequeue in (time, priority, sequence_number)
    order, so no two events ever compare equal."""

    time: int
    priority: int
    sequence_number: int
    action: object = field(compare=False)
    cancelled: bool = field(default=False, compare=False)

    @property
    def kind(self) -> str:
        return _KIND_NAMES.get(self.priority, "other")


class Scheduler:
    """Event queue with exact integer-picosecond time."""

    def __init__(self) -> None:
        self.now = 0
        self._heap: list[SimEvent] = []
        self._counter = 0

    def schedule(self, time_ps: int, priority: int, action) -> SimEvent:
        if time_ps < self.now:
            raise PastTime(
                f"cannot schedule at {seconds_str(time_ps)}, "
                f"now is {seconds_str(self.now)}"
            )
        self._counter += 1
        event = SimEvent(time_ps, priority, self._counter, action)
        heapq.heappush(self._heap, event)
        return event

    def call_at(self, time_ps: int, action) -> SimEvent:
        """Timer interface used by protocol instances."""
        return self.schedule(time_ps, PRIO_TIMER, action)

    def cancel(self, handle: SimEvent) -> None:
        handle.cancelled = True

    def run_until(self, time_ps: int) -> int:
        """Process every event with time <= time_ps; returns events fired.
        The clock lands exactly on time_ps even if the queue drains early."""
        fired = 0
        while self._heap and self._heap[0].time <= time_ps:
            event = heapq.heappop(self._heap)
            if event.cancelled:
                continue
            self.now = event.time
            event.action()
            fired += 1
        self.now = max(self.now, time_ps)
        return fired


@dataclass(frozen=True)
class LinkProfile:
    name: str
    bandwidth_bps: int
    propagation_ps: int = 0


LINK_PROFILES = {
    "Eth10M": LinkProfile("Eth10M", 10_000_000),
    "Eth100M": LinkProfile("Eth100M", 100_000_000),
    "Eth1G": LinkProfile("Eth1G", 1_000_000_000),
}


def resolve_profile(channel_type: str) -> LinkProfile:
    """Accept both bare profile names and dotted module paths like
    ``inet.node.ethernet.Eth10M``."""
    name = channel_type.rsplit(".", 1)[-1]
    try:
        return LINK_PROFILES[name]
    except KeyError:
        raise ParseError(f"unknown channel profile {channel_type!r}") from None


@dataclass
class Link:
    a: tuple[str, str]  # (node, iface)
    b: tuple[str, str]
    profile: LinkProfile
    up: bool = True
    epoch: int = 0
    next_free: list[int] = field(default_factory=lambda: [0, 0])

    def other_end(self, node: str) -> tuple[str, str]:
        return self.b if self.a[0] == node else self.a

    def direction_from(self, node: str) -> int:
        return 0 if self.a[0] == node else 1


# -- configuration files ------------------------------------------------------


@dataclass
class IfaceConfig:
    name: str
    address: IPv4Interface
    bandwidth_kbps: int = 10_000
    delay_tens_us: int = 100


@dataclass
class RouterConfig:
    name: str
    interfaces: list[IfaceConfig] = field(default_factory=list)
    as_number: int = 1
    k_values: tuple[int, int, int, int, int] = protocol.DEFAULT_K
    hello_interval: int = 5
    hold_time: int = 15
    networks: list[IPv4Network] = field(default_factory=list)
    auth_magic: bytes | None = None


@dataclass
class LinkConfig:
    a_node: str
    a_iface: str
    b_node: str
    b_iface: str
    profile: str = "Eth10M"
    initial_up: bool = True


@dataclass
class TopologyConfig:
    routers: list[RouterConfig] = field(default_factory=list)
    links: list[LinkConfig] = field(default_factory=list)


def parse_topology(text: str, *, source: str = "<topology>") -> TopologyConfig:
    """Parse the declarative router/link configuration.

    The format is line based with Cisco-flavored keywords::

        router R1
          interface ethg0 address 10.0.12.1/30 bandwidth 10000 delay 100
          eigrp 1
          network 10.0.12.0/30
        link R1 ethg0 R2 ethg0 profile Eth10M
        link R2 ethg1 R3 ethg1 profile Eth10M down
    """
    config = TopologyConfig()
    current: RouterConfig | None = None

    def fail(lineno: int, message: str) -> ParseError:
        return ParseError(f"{source}:{lineno}: {message}")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        keyword = words[0]
        try:
            if keyword == "router":
                current = RouterConfig(words[1])
                config.routers.append(current)
            elif keyword == "link":
                if len(words) < 5:
                    raise fail(lineno, "link needs two (node, interface) pairs")
                rest = words[5:]
                profile = "Eth10M"
                initial_up = True
                while rest:
                    if rest[0] == "profile":
                        profile = rest[1]
                        rest = rest[2:]
                    elif rest[0] in ("down", "up"):
                        initial_up = rest[0] == "up"
                        rest = rest[1:]
                    else:
                        raise fail(lineno, f"unknown link option {rest[0]!r}")
                if profile not in LINK_PROFILES:
                    raise fail(lineno, f"unknown link profile {profile!r}")
                config.links.append(
                    LinkConfig(words[1], words[2], words[3], words[4],
                               profile, initial_up)
                )
            elif current is None:
                raise fail(lineno, f"{keyword!r} outside a router block")
            elif keyword == "interface":
                opts = dict(zip(words[2::2], words[3::2]))
                if "address" not in opts:
                    raise fail(lineno, "interface needs an address")
                current.interfaces.append(
                    IfaceConfig(
                        words[1],
                        IPv4Interface(opts["address"]),
                        int(opts.get("bandwidth", 10_000)),
                        int(opts.get("delay", 100)),
                    )
                )
            elif keyword == "eigrp":
                current.as_number = int(words[1])
            elif keyword == "k-values":
                if len(words) != 6:
                    raise fail(lineno, "k-values needs five integers")
                current.k_values = tuple(int(w) for w in words[1:6])
            elif keyword == "timers":
                opts = dict(zip(words[1::2], words[2::2]))
                current.hello_interval = int(opts.get("hello", 5))
                current.hold_time = int(opts.get("hold", 15))
            elif keyword == "network":
                current.networks.append(IPv4Network(words[1]))
            elif keyword == "auth":
                if len(words) != 3 or words[1] != "magic":
                    raise fail(lineno, "expected: auth magic <tag>")
                current.auth_magic = words[2].encode("ascii")
            else:
                raise fail(lineno, f"unknown keyword {keyword!r}")
        except ParseError:
            raise
        except (IndexError, ValueError) as exc:
            raise fail(lineno, f"bad {keyword!r} line: {exc}") from exc

    names = [r.name for r in config.routers]
    if len(set(names)) != len(names):
        raise ParseError(f"{source}: duplicate router names")
    return config


def load_topology(path: str | Path) -> TopologyConfig:
    path = Path(path)
    return parse_topology(path.read_text(), source=path.name)


# -- scenario scripts --------------------------------------------------------


@dataclass(frozen=True)
class ScenarioAction:
    """A timed topology mutation driving an experiment."""

    at_time_ps: int
    kind: str  # "connect" | "disconnect"
    src_module: str
    src_gate: str
    dest_module: str | None = None
    dest_gate: str | None = None
    channel_type: str | None = None


def _gate(name: str) -> str:
    """Normalize gate spellings: ``ethg[0]`` and ``ethg0`` are the same."""
    return name.replace("[", "").replace("]", "")


_SCENARIO_ATTRS = {
    "disconnect": {"src-module", "src-gate"},
    "connect": {"src-module", "src-gate", "dest-module", "dest-gate",
                "channel-type"},
}


def load_scenario(text: str) -> list[ScenarioAction]:
    """Parse a scenario document into a time-ordered action list.

    The grammar mirrors scripted-event managers of discrete-event
    simulators: a root ``<scenario>`` with ``<at t="SECONDS">`` children
    holding ``<connect/>`` and ``<disconnect/>`` elements.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError(f"scenario XML: {exc}") from exc
    if root.tag != "scenario":
        raise ParseError(f"expected <scenario> root, got <{root.tag}>")
    actions: list[ScenarioAction] = []
    for at in root:
        if at.tag != "at":
            raise ParseError(f"expected <at> element, got <{at.tag}>")
        if set(at.attrib) != {"t"}:
            raise UnknownAttribute(f"<at> takes exactly the t attribute, got {sorted(at.attrib)}")
        try:
            time_ps = ps_from_seconds(at.attrib["t"])
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"bad time {at.attrib['t']!r}") from exc
        if time_ps < 0:
            raise ParseError(f"negative scenario time {at.attrib['t']}")
        for elem in at:
            if elem.tag not in _SCENARIO_ATTRS:
                raise ParseError(f"unknown action <{elem.tag}>")
            allowed = _SCENARIO_ATTRS[elem.tag]
            unknown = set(elem.attrib) - allowed
            if unknown:
                raise UnknownAttribute(
                    f"<{elem.tag}> does not take {sorted(unknown)}"
                )
            missing = allowed - set(elem.attrib)
            if missing:
                raise ParseError(f"<{elem.tag}> missing {sorted(missing)}")
            actions.append(
                ScenarioAction(
                    at_time_ps=time_ps,
                    kind=elem.tag,
                    src_module=elem.attrib["src-module"],
                    src_gate=_gate(elem.attrib["src-gate"]),
                    dest_module=elem.attrib.get("dest-module"),
                    dest_gate=_gate(elem.attrib["dest-gate"])
                    if "dest-gate" in elem.attrib
                    else None,
                    channel_type=elem.attrib.get("channel-type"),
                )
            )
    actions.sort(key=lambda a: a.at_time_ps)  # stable for equal times
    return actions


# -- tracing -------------------------------------------------------------------


@dataclass(frozen=True)
class TraceRecord:
    node: str
    iface: str
    direction: str  # "in" | "out"
    time_ps: int
    frame: bytes


@dataclass
class CaptureWindow:
    from_ps: int = 0
    until_ps: int | None = None

    def covers(self, time_ps: int) -> bool:
        if time_ps < self.from_ps:
            return False
        return self.until_ps is None or time_ps <= self.until_ps


@dataclass
class Node:
    name: str
    index: int
    instance: protocol.EigrpInstance
    iface_links: dict[str, Link | None]
    ip_ident: int = 0

    def mac(self, iface: str) -> bytes:
        iface_index = sorted(self.instance.ports).index(iface)
        return bytes([0x0A, 0x00, 0x00, 0x00, self.index, iface_index])


class Simulation:
    """One experiment: routers, links, scripted actions, traces, snapshots.

    Identical inputs and seed produce byte-identical traces and snapshots;
    all tie-breaking is explicit (event insertion order, sorted node and
    interface names).
    """

    def __init__(
        self,
        topology: TopologyConfig,
        *,
        seed: int = 0,
        jitter: tuple[float, float] | None = None,
    ):
        self.topology_config = topology
        self.scheduler = Scheduler()
        self.seed = seed
        self._jitter_ps = (
            (ps_from_seconds(str(jitter[0])), ps_from_seconds(str(jitter[1])))
            if jitter
            else None
        )
        self._rng = random.Random(seed)
        self.nodes: dict[str, Node] = {}
        self.links: list[Link] = []
        self.trace: list[TraceRecord] = []
        self.captures: dict[tuple[str, str], CaptureWindow] = {}
        self.snapshots: list = []  # tables.TableSnapshot, see tables module

        for index, router in enumerate(
            sorted(topology.routers, key=lambda r: r.name), start=1
        ):
            ports = [
                protocol.Port(
                    i.name, i.address, i.bandwidth_kbps, i.delay_tens_us
                )
                for i in router.interfaces
            ]
            config = protocol.EigrpConfig(
                as_number=router.as_number,
                k_values=router.k_values,
                hello_interval=router.hello_interval,
                hold_time=router.hold_time,
                networks=tuple(router.networks),
                auth_magic=router.auth_magic,
            )
            node = Node(
                name=router.name,
                index=index,
                instance=protocol.EigrpInstance(
                    router.name,
                    config,
                    ports,
                    self.scheduler,
                    self._make_transmit(router.name),
                ),
                iface_links={i.name: None for i in router.interfaces},
            )
            self.nodes[router.name] = node

        for spec in topology.links:
            link = Link(
                (spec.a_node, spec.a_iface),
                (spec.b_node, spec.b_iface),
                LINK_PROFILES[spec.profile],
                up=spec.initial_up,
            )
            for node_name, iface in (link.a, link.b):
                node = self._node(node_name)
                if iface not in node.iface_links:
                    raise ParseError(
                        f"link references unknown interface {node_name}.{iface}"
                    )
                if node.iface_links[iface] is not None:
                    raise ParseError(
                        f"interface {node_name}.{iface} is on two links"
                    )
                node.iface_links[iface] = link
            self.links.append(link)

    def _node(self, name: str) -> Node:
        try:
            return self.nodes[name]
        except KeyError:
            raise UnknownLink(f"unknown node {name!r}") from None

    # -- lifecycle ------------------------------------------------------------

    def start(self) -> None:
        """Bring every interface with a live attachment up at t=0.

        LAN interfaces (no link) are always up; link interfaces follow the
        link state.
        """
        for name in sorted(self.nodes):
            node = self.nodes[name]
            for iface in sorted(node.instance.ports):
                link = node.iface_links[iface]
                if link is None or link.up:
                    node.instance.interface_up(iface)

    def run(self, until_seconds) -> None:
        self.scheduler.run_until(ps_from_seconds(until_seconds))

    # -- scenario scripting ----------------------------------------------------

    def apply_scenario(self, actions: list[ScenarioAction]) -> None:
        for action in actions:
            self.scheduler.schedule(
                action.at_time_ps,
                PRIO_SCENARIO,
                lambda a=action: self.apply_scenario_action(a),
            )

    def _find_link(self, node: str, iface: str) -> Link | None:
        n = self._node(node)
        if iface not in n.iface_links:
            raise UnknownLink(f"unknown interface {node}.{iface}")
        return n.iface_links[iface]

    def apply_scenario_action(self, action: ScenarioAction) -> None:
        if action.kind == "disconnect":
            link = self._find_link(action.src_module, action.src_gate)
            if link is None:
                raise UnknownLink(
                    f"{action.src_module}.{action.src_gate} has no link"
                )
            if not link.up:
                log.warning(
                    "t=%s: disconnect %s.%s: link already down",
                    seconds_str(self.scheduler.now),
                    action.src_module, action.src_gate,
                )
                return
            log.info(
                "t=%s: disconnect %s.%s",
                seconds_str(self.scheduler.now),
                action.src_module, action.src_gate,
            )
            link.up = False
            link.epoch += 1
            self._notify_link(link, up=False)
        elif action.kind == "connect":
            src = (action.src_module, action.src_gate)
            dst = (action.dest_module, action.dest_gate)
            link = self._find_link(*src)
            other = self._find_link(*dst)
            profile = resolve_profile(action.channel_type or "Eth10M")
            if link is not None and link is other:
                if link.up:
                    log.warning(
                        "t=%s: connect %s.%s: link already up",
                        seconds_str(self.scheduler.now), *src,
                    )
                    return
                link.profile = profile
                link.up = True
                link.epoch += 1
            elif link is None and other is None:
                link = Link(src, dst, profile)
                self._node(src[0]).iface_links[src[1]] = link
                self._node(dst[0]).iface_links[dst[1]] = link
                self.links.append(link)
            else:
                raise UnknownLink(
                    f"cannot connect {src} to {dst}: an endpoint is busy"
                )
            log.info(
                "t=%s: connect %s.%s <-> %s.%s (%s)",
                seconds_str(self.scheduler.now), *src, *dst, profile.name,
            )
            self._notify_link(link, up=True)
        else:
            raise ParseError(f"unknown scenario action {action.kind!r}")

    def _notify_link(self, link: Link, *, up: bool) -> None:
        for node_name, iface in sorted((link.a, link.b)):
            instance = self._node(node_name).instance
            if up:
                instance.interface_up(iface)
            else:
                instance.interface_down(iface)

    # -- frame transport ---------------------------------------------------------

    def _make_transmit(self, node_name: str):
        def transmit(iface: str, dst_ip: IPv4Address, pkt) -> None:
            self._transmit(node_name, iface, dst_ip, pkt)

        return transmit

    def _transmit(
        self, node_name: str, iface: str, dst_ip: IPv4Address, pkt
    ) -> None:
        node = self.nodes[node_name]
        link = node.iface_links[iface]
        if link is None:
            return  # stub LAN: nothing attached, nobody to hear it
        if not link.up:
            log.debug("%s.%s: frame dropped, link down", node_name, iface)
            return
        port = node.instance.ports[iface]
        node.ip_ident = (node.ip_ident + 1) & 0xFFFF
        payload = wire.encode_packet(pkt)
        ip = wire.build_ipv4(
            port.address.ip, dst_ip, payload, ident=node.ip_ident
        )
        if dst_ip.is_multicast:
            dst_mac = wire.multicast_mac(dst_ip)
        else:
            peer_node, peer_iface = link.other_end(node_name)
            dst_mac = self.nodes[peer_node].mac(peer_iface)
        frame = wire.build_ethernet(dst_mac, node.mac(iface), ip)

        now = self.scheduler.now
        if self._jitter_ps is not None:
            now += self._rng.randint(*self._jitter_ps)
        direction = link.direction_from(node_name)
        start = max(now, link.next_free[direction])
        serialization = len(frame) * 8 * PICOS_PER_SECOND // link.profile.bandwidth_bps
        link.next_free[direction] = start + serialization
        arrival = start + serialization + link.profile.propagation_ps
        epoch = link.epoch

        def begin() -> None:
            if link.epoch != epoch or not link.up:
                return  # carrier vanished before the first bit hit the wire
            self._record(node_name, iface, "out", frame)
            self.scheduler.schedule(arrival, PRIO_FRAME, deliver)

        def deliver() -> None:
            if link.epoch != epoch or not link.up:
                return
            peer_node, peer_iface = link.other_end(node_name)
            self._record(peer_node, peer_iface, "in", frame)
            self._deliver(peer_node, peer_iface, frame)

        if start == self.scheduler.now:
            begin()
        else:
            self.scheduler.schedule(start, PRIO_FRAME, begin)

    def _deliver(self, node_name: str, iface: str, frame: bytes) -> None:
        decoded = wire.parse_eigrp_frame(frame)
        if decoded is None:
            return
        instance = self.nodes[node_name].instance
        try:
            pkt = wire.decode_packet(decoded.eigrp)
        except wire.CodecError:
            instance.counters["dropped-malformed"] = (
                instance.counters.get("dropped-malformed", 0) + 1
            )
            return
        instance.receive(iface, decoded.src_ip, pkt)

    # -- capture -------------------------------------------------------------------

    def enable_capture(
        self,
        node: str,
        iface: str,
        *,
        from_seconds=0,
        until_seconds=None,
    ) -> None:
        window = CaptureWindow(
            ps_from_seconds(from_seconds),
            None if until_seconds is None else ps_from_seconds(until_seconds),
        )
        self.captures[(node, iface)] = window

    def _record(self, node: str, iface: str, direction: str, frame: bytes) -> None:
        window = self.captures.get((node, iface))
        if window is None or not window.covers(self.scheduler.now):
            return
        self.trace.append(
            TraceRecord(node, iface, direction, self.scheduler.now, frame)
        )

    def records_for(self, node: str, iface: str) -> list[TraceRecord]:
        return [r for r in self.trace if r.node == node and r.iface == iface]

    def export_pcap(self, node: str, iface: str) -> bytes:
        """Standard PCAP bytes for one capture point (both directions)."""
        return wire.pcap_bytes(
            [(r.time_ps, r.frame) for r in self.records_for(node, iface)]
        )
