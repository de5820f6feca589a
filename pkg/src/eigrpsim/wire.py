"""Wire formats: EIGRP packets (RFC 7868 classic TLVs), Ethernet/IPv4
encapsulation, and PCAP files.

Everything in this module is a pure transformation between Python values and
bytes; there is no shared mutable state, so all functions are safe to call
from any thread.

Only the classic 32-bit metric encoding is implemented.  Wide-metric and
other unrecognized TLVs survive a decode/encode round trip as opaque
payloads but are never interpreted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum, IntFlag
from ipaddress import IPv4Address, IPv4Network

EIGRP_VERSION = 2
EIGRP_HEADER_LEN = 20

#: IP protocol number assigned to EIGRP (IANA protocol registry).
IP_PROTO_EIGRP = 88

#: All-EIGRP-routers link-local multicast group and its mapped MAC address.
EIGRP_MULTICAST_GROUP = IPv4Address("224.0.0.10")
EIGRP_MULTICAST_MAC = bytes.fromhex("01005e00000a")

ETHERTYPE_IPV4 = 0x0800
ETHERNET_HEADER_LEN = 14
ETHERNET_MIN_FRAME = 60  # without FCS; short frames are zero-padded

#: Delay value that marks a route as unreachable, regardless of other fields.
DELAY_UNREACHABLE = 0xFFFFFFFF


class Opcode(IntEnum):
    UPDATE = 1
    REQUEST = 2
    QUERY = 3
    REPLY = 4
    HELLO = 5
    SIA_QUERY = 10
    SIA_REPLY = 11


#: Opcodes this simulator generates and understands.
SUPPORTED_OPCODES = frozenset(
    {Opcode.UPDATE, Opcode.QUERY, Opcode.REPLY, Opcode.HELLO}
)


class Flags(IntFlag):
    NONE = 0
    INIT = 0x01
    CR = 0x02
    RS = 0x04
    EOT = 0x08


# TLV type codes (RFC 7868 section 6 registries).
TLV_PARAMETERS = 0x0001
TLV_AUTHENTICATION = 0x0002
TLV_SEQUENCE = 0x0003
TLV_SOFTWARE_VERSION = 0x0004
TLV_NEXT_MCAST_SEQ = 0x0005
TLV_PEER_STUB_INFO = 0x0006
TLV_PEER_TERMINATION = 0x0007
TLV_PEER_TID_LIST = 0x0008
TLV_INTERNAL_ROUTE = 0x0102

AUTH_MAGIC_LEN = 16


class CodecError(Exception):
    """Base class for encode/decode failures."""


class InvariantViolation(CodecError):
    """A packet or TLV value violates a structural invariant."""


class Truncated(CodecError):
    """Input is shorter than its declared or minimum length."""


class BadChecksum(CodecError):
    """Ones-complement checksum over the EIGRP payload does not verify."""


class UnknownOpcode(CodecError):
    """Header opcode is outside the supported set."""


def compute_checksum(data: bytes) -> int:
    """Standard 16-bit ones-complement internet checksum (RFC 1071).

    The checksum field of ``data`` must already be zeroed.  Odd-length input
    is padded with a zero byte.
    """
    if len(data) % 2:
        data += b"\x00"
    total = 0
    for (word,) in struct.iter_unpack(">H", data):
        total += word
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def validate_checksum(data: bytes) -> bool:
    """True iff ``data`` (with its checksum field in place) sums to zero."""
    return compute_checksum(data) == 0


@dataclass(frozen=True)
class ParametersTlv:
    """K-values and hold time advertised in Hello packets."""

    k1: int = 1
    k2: int = 0
    k3: int = 1
    k4: int = 0
    k5: int = 0
    hold_time: int = 15

    @property
    def k_values(self) -> tuple[int, int, int, int, int]:
        return (self.k1, self.k2, self.k3, self.k4, self.k5)


@dataclass(frozen=True)
class AuthenticationTlv:
    """Stand-in for cryptographic material: a fixed ASCII tag.

    The tag is zero-padded to ``AUTH_MAGIC_LEN`` bytes on the wire; a
    receiver accepts the packet iff the tag matches its configured value
    exactly.
    """

    magic: bytes

    def __post_init__(self) -> None:
        if len(self.magic) > AUTH_MAGIC_LEN:
            raise InvariantViolation(
                f"auth tag longer than {AUTH_MAGIC_LEN} bytes: {self.magic!r}"
            )
        if self.magic.endswith(b"\x00"):
            raise InvariantViolation("auth tag must not end with NUL padding")


@dataclass(frozen=True)
class SoftwareVersionTlv:
    os_major: int = 15
    os_minor: int = 7
    tlv_major: int = 2
    tlv_minor: int = 0


@dataclass(frozen=True)
class PeerTopologyIdListTlv:
    flags: int = 0
    topology_ids: tuple[int, ...] = (0,)


@dataclass(frozen=True)
class StubTlv:
    """Stub routing flags field.  Carried for comparability only; stub
    behavior itself is not modeled."""

    flags: int = 0


@dataclass(frozen=True)
class InternalRouteTlv:
    """Classic IPv4 internal route with its 32-bit metric components.

    ``scaled_delay`` and ``scaled_bandwidth`` hold the on-the-wire scaled
    values (units of tens of microseconds and 10^7/kbps respectively, both
    multiplied by 256).  ``scaled_delay == DELAY_UNREACHABLE`` poisons the
    route.
    """

    destination: IPv4Network
    scaled_delay: int
    scaled_bandwidth: int
    next_hop: IPv4Address = IPv4Address("0.0.0.0")
    mtu: int = 1500
    hop_count: int = 0
    reliability: int = 255
    load: int = 1
    route_tag: int = 0
    route_flags: int = 0

    @property
    def unreachable(self) -> bool:
        return self.scaled_delay == DELAY_UNREACHABLE

    def __post_init__(self) -> None:
        if not 0 <= self.destination.prefixlen <= 32:
            raise InvariantViolation("prefix length out of range")
        if not 0 <= self.hop_count <= 255:
            raise InvariantViolation("hop count out of range")


@dataclass(frozen=True)
class OpaqueTlv:
    """Unrecognized TLV preserved verbatim so round trips are lossless."""

    kind: int
    payload: bytes


Tlv = (
    ParametersTlv
    | AuthenticationTlv
    | SoftwareVersionTlv
    | PeerTopologyIdListTlv
    | StubTlv
    | InternalRouteTlv
    | OpaqueTlv
)


def tlv_kind(tlv: Tlv) -> int:
    if isinstance(tlv, ParametersTlv):
        return TLV_PARAMETERS
    if isinstance(tlv, AuthenticationTlv):
        return TLV_AUTHENTICATION
    if isinstance(tlv, SoftwareVersionTlv):
        return TLV_SOFTWARE_VERSION
    if isinstance(tlv, PeerTopologyIdListTlv):
        return TLV_PEER_TID_LIST
    if isinstance(tlv, StubTlv):
        return TLV_PEER_STUB_INFO
    if isinstance(tlv, InternalRouteTlv):
        return TLV_INTERNAL_ROUTE
    return tlv.kind


TLV_KIND_NAMES = {
    TLV_PARAMETERS: "parameters",
    TLV_AUTHENTICATION: "authentication",
    TLV_SEQUENCE: "sequence",
    TLV_SOFTWARE_VERSION: "software-version",
    TLV_NEXT_MCAST_SEQ: "next-multicast-sequence",
    TLV_PEER_STUB_INFO: "stub",
    TLV_PEER_TERMINATION: "peer-termination",
    TLV_PEER_TID_LIST: "peer-topology-id-list",
    TLV_INTERNAL_ROUTE: "internal-route",
}


def tlv_kind_name(kind: int) -> str:
    return TLV_KIND_NAMES.get(kind, f"0x{kind:04x}")


@dataclass(frozen=True)
class EigrpPacket:
    """One decoded EIGRP message: header fields plus an ordered TLV list."""

    opcode: Opcode
    flags: Flags = Flags.NONE
    sequence: int = 0
    acknowledgment: int = 0
    autonomous_system: int = 1
    virtual_router_id: int = 0
    tlvs: tuple[Tlv, ...] = ()

    def validate(self) -> None:
        if self.opcode not in SUPPORTED_OPCODES:
            raise InvariantViolation(f"unsupported opcode {self.opcode!r}")
        if self.opcode is Opcode.HELLO and self.sequence != 0:
            raise InvariantViolation("Hello packets carry sequence 0")
        if Flags.INIT in self.flags and self.opcode is not Opcode.UPDATE:
            raise InvariantViolation("INIT flag is only valid on Update")
        for bound, value in (
            (1 << 32, self.sequence),
            (1 << 32, self.acknowledgment),
            (1 << 16, self.autonomous_system),
            (1 << 16, self.virtual_router_id),
        ):
            if not 0 <= value < bound:
                raise InvariantViolation("header field out of range")

    def routes(self) -> tuple[InternalRouteTlv, ...]:
        return tuple(t for t in self.tlvs if isinstance(t, InternalRouteTlv))


def _encode_tlv_payload(tlv: Tlv) -> bytes:
    if isinstance(tlv, ParametersTlv):
        return struct.pack(
            ">BBBBBBH", tlv.k1, tlv.k2, tlv.k3, tlv.k4, tlv.k5, 0, tlv.hold_time
        )
    if isinstance(tlv, AuthenticationTlv):
        return tlv.magic.ljust(AUTH_MAGIC_LEN, b"\x00")
    if isinstance(tlv, SoftwareVersionTlv):
        return struct.pack(
            ">BBBB", tlv.os_major, tlv.os_minor, tlv.tlv_major, tlv.tlv_minor
        )
    if isinstance(tlv, PeerTopologyIdListTlv):
        ids = b"".join(struct.pack(">H", t) for t in tlv.topology_ids)
        return struct.pack(">HH", tlv.flags, len(ids)) + ids
    if isinstance(tlv, StubTlv):
        return struct.pack(">H", tlv.flags)
    if isinstance(tlv, InternalRouteTlv):
        dest_len = (tlv.destination.prefixlen + 7) // 8
        return (
            tlv.next_hop.packed
            + struct.pack(
                ">IIBBBBBBBB",
                tlv.scaled_delay,
                tlv.scaled_bandwidth,
                (tlv.mtu >> 16) & 0xFF,
                (tlv.mtu >> 8) & 0xFF,
                tlv.mtu & 0xFF,
                tlv.hop_count,
                tlv.reliability,
                tlv.load,
                tlv.route_tag,
                tlv.route_flags,
            )
            + struct.pack(">B", tlv.destination.prefixlen)
            + tlv.destination.network_address.packed[:dest_len]
        )
    return tlv.payload


def encode_tlv(tlv: Tlv) -> bytes:
    payload = _encode_tlv_payload(tlv)
    return struct.pack(">HH", tlv_kind(tlv), len(payload) + 4) + payload


def encode_packet(pkt: EigrpPacket) -> bytes:
    """Serialize a packet.  The checksum field is filled in on the way out.

    Raises InvariantViolation when the packet breaks a header or TLV
    invariant (the TLV encoders validate their own payloads).
    """
    pkt.validate()
    body = b"".join(encode_tlv(t) for t in pkt.tlvs)
    header = struct.pack(
        ">BBHIIIHH",
        EIGRP_VERSION,
        int(pkt.opcode),
        0,
        int(pkt.flags),
        pkt.sequence,
        pkt.acknowledgment,
        pkt.virtual_router_id,
        pkt.autonomous_system,
    )
    checksum = compute_checksum(header + body)
    return header[:2] + struct.pack(">H", checksum) + header[4:] + body


def _decode_tlv(kind: int, payload: bytes) -> Tlv:
    if kind == TLV_PARAMETERS and len(payload) == 8:
        k1, k2, k3, k4, k5, _res, hold = struct.unpack(">BBBBBBH", payload)
        return ParametersTlv(k1, k2, k3, k4, k5, hold)
    if kind == TLV_AUTHENTICATION and len(payload) == AUTH_MAGIC_LEN:
        return AuthenticationTlv(payload.rstrip(b"\x00"))
    if kind == TLV_SOFTWARE_VERSION and len(payload) == 4:
        return SoftwareVersionTlv(*struct.unpack(">BBBB", payload))
    if kind == TLV_PEER_TID_LIST and len(payload) >= 4:
        flags, id_len = struct.unpack(">HH", payload[:4])
        ids = payload[4 : 4 + id_len]
        if id_len % 2 == 0 and len(ids) == id_len:
            tids = tuple(w for (w,) in struct.iter_unpack(">H", ids))
            return PeerTopologyIdListTlv(flags, tids)
    if kind == TLV_PEER_STUB_INFO and len(payload) == 2:
        return StubTlv(struct.unpack(">H", payload)[0])
    if kind == TLV_INTERNAL_ROUTE and len(payload) >= 21:
        next_hop = IPv4Address(payload[:4])
        delay, bandwidth = struct.unpack(">II", payload[4:12])
        mtu = int.from_bytes(payload[12:15], "big")
        hop_count, reliability, load, tag, rflags, plen = struct.unpack(
            ">BBBBBB", payload[15:21]
        )
        dest_len = (plen + 7) // 8
        if len(payload) == 21 + dest_len and plen <= 32:
            dest_bytes = payload[21:].ljust(4, b"\x00")
            network = IPv4Network((dest_bytes, plen))
            return InternalRouteTlv(
                network, delay, bandwidth, next_hop, mtu,
                hop_count, reliability, load, tag, rflags,
            )
    return OpaqueTlv(kind, payload)


def decode_packet(data: bytes, *, verify_checksum: bool = True) -> EigrpPacket:
    """Inverse of encode_packet.

    Unknown TLV kinds are preserved as opaque payloads, never dropped.
    Raises Truncated, BadChecksum, or UnknownOpcode.
    """
    if len(data) < EIGRP_HEADER_LEN:
        raise Truncated(f"EIGRP header needs 20 bytes, got {len(data)}")
    version, opcode, _checksum, flags, seq, ack, vrid, asn = struct.unpack(
        ">BBHIIIHH", data[:EIGRP_HEADER_LEN]
    )
    if verify_checksum and not validate_checksum(data):
        raise BadChecksum("EIGRP checksum verification failed")
    if version != EIGRP_VERSION:
        raise InvariantViolation(f"unsupported header version {version}")
    try:
        op = Opcode(opcode)
    except ValueError:
        raise UnknownOpcode(f"opcode {opcode}") from None
    if op not in SUPPORTED_OPCODES:
        raise UnknownOpcode(f"opcode {op!r} not supported")

    tlvs: list[Tlv] = []
    offset = EIGRP_HEADER_LEN
    while offset < len(data):
        if offset + 4 > len(data):
            raise Truncated("TLV header extends past end of packet")
        kind, length = struct.unpack(">HH", data[offset : offset + 4])
        if length < 4 or offset + length > len(data):
            raise Truncated(
                f"TLV 0x{kind:04x} declares {length} bytes at offset {offset}"
            )
        tlvs.append(_decode_tlv(kind, data[offset + 4 : offset + length]))
        offset += length
    return EigrpPacket(op, Flags(flags), seq, ack, asn, vrid, tuple(tlvs))


# --- Ethernet / IPv4 encapsulation -----------------------------------------


def multicast_mac(group: IPv4Address) -> bytes:
    """Map an IPv4 multicast group onto its Ethernet MAC (RFC 1112)."""
    low = group.packed
    return bytes([0x01, 0x00, 0x5E, low[1] & 0x7F, low[2], low[3]])


def build_ethernet(dst_mac: bytes, src_mac: bytes, payload: bytes) -> bytes:
    frame = dst_mac + src_mac + struct.pack(">H", ETHERTYPE_IPV4) + payload
    if len(frame) < ETHERNET_MIN_FRAME:
        frame += b"\x00" * (ETHERNET_MIN_FRAME - len(frame))
    return frame


def build_ipv4(
    src: IPv4Address,
    dst: IPv4Address,
    payload: bytes,
    *,
    protocol: int = IP_PROTO_EIGRP,
    ident: int = 0,
    ttl: int = 1,
    tos: int = 0xC0,
) -> bytes:
    header = struct.pack(
        ">BBHHHBBH4s4s",
        0x45,
        tos,
        20 + len(payload),
        ident,
        0,
        ttl,
        protocol,
        0,
        src.packed,
        dst.packed,
    )
    checksum = compute_checksum(header)
    return header[:10] + struct.pack(">H", checksum) + header[12:] + payload


@dataclass(frozen=True)
class DecodedFrame:
    """An Ethernet frame carrying an EIGRP payload, pulled apart."""

    dst_mac: bytes
    src_mac: bytes
    src_ip: IPv4Address
    dst_ip: IPv4Address
    ttl: int
    eigrp: bytes

    @property
    def multicast(self) -> bool:
        return self.dst_ip.is_multicast


def parse_eigrp_frame(frame: bytes) -> DecodedFrame | None:
    """Extract the EIGRP portion of an Ethernet frame.

    Returns None for anything that is not IPv4 protocol 88 (callers skip
    non-EIGRP traffic rather than erroring on it).
    """
    if len(frame) < ETHERNET_HEADER_LEN + 20:
        return None
    ethertype = struct.unpack(">H", frame[12:14])[0]
    if ethertype != ETHERTYPE_IPV4:
        return None
    ip = frame[ETHERNET_HEADER_LEN:]
    ihl = (ip[0] & 0x0F) * 4
    total_len = struct.unpack(">H", ip[2:4])[0]
    if ip[9] != IP_PROTO_EIGRP or len(ip) < total_len or total_len < ihl:
        return None
    return DecodedFrame(
        dst_mac=frame[0:6],
        src_mac=frame[6:12],
        src_ip=IPv4Address(ip[12:16]),
        dst_ip=IPv4Address(ip[16:20]),
        ttl=ip[8],
        eigrp=ip[ihl:total_len],
    )


# --- PCAP -------------------------------------------------------------------

PCAP_MAGIC = 0xA1B2C3D4
PCAP_VERSION = (2, 4)
PCAP_LINKTYPE_ETHERNET = 1
PCAP_GLOBAL_HEADER_LEN = 24
PCAP_RECORD_HEADER_LEN = 16
PCAP_SNAPLEN = 65535


class NotPcap(CodecError):
    """Input does not start with a valid PCAP global header."""


class UnsupportedLinktype(CodecError):
    """PCAP linktype is not Ethernet."""


def pcap_bytes(records: list[tuple[int, bytes]]) -> bytes:
    """Render (timestamp_picoseconds, frame) pairs as a classic PCAP file.

    Written little-endian with microsecond timestamp resolution; simulated
    picosecond times are truncated to whole microseconds.
    """
    out = [
        struct.pack(
            "<IHHiIII",
            PCAP_MAGIC,
            PCAP_VERSION[0],
            PCAP_VERSION[1],
            0,
            0,
            PCAP_SNAPLEN,
            PCAP_LINKTYPE_ETHERNET,
        )
    ]
    for time_ps, frame in records:
        ts_sec, rem = divmod(time_ps, 10**12)
        ts_usec = rem // 10**6
        out.append(
            struct.pack("<IIII", ts_sec, ts_usec, len(frame), len(frame))
        )
        out.append(frame)
    return b"".join(out)


def read_pcap(data: bytes) -> list[tuple[int, int, bytes]]:
    """Parse a PCAP file into (ts_sec, ts_usec, frame) triples.

    Accepts both byte orders; rejects non-Ethernet captures and truncated
    records (the error names the failing record index).
    """
    if len(data) < PCAP_GLOBAL_HEADER_LEN:
        raise NotPcap("file shorter than the PCAP global header")
    magic = struct.unpack("<I", data[:4])[0]
    if magic == PCAP_MAGIC:
        endian = "<"
    elif struct.unpack(">I", data[:4])[0] == PCAP_MAGIC:
        endian = ">"
    else:
        raise NotPcap(f"bad magic 0x{magic:08x}")
    linktype = struct.unpack(endian + "I", data[20:24])[0]
    if linktype != PCAP_LINKTYPE_ETHERNET:
        raise UnsupportedLinktype(f"linktype {linktype}")

    records = []
    offset = PCAP_GLOBAL_HEADER_LEN
    index = 0
    while offset < len(data):
        index += 1
        if offset + PCAP_RECORD_HEADER_LEN > len(data):
            raise Truncated(f"record {index}: header truncated")
        ts_sec, ts_usec, incl_len, _orig = struct.unpack(
            endian + "IIII", data[offset : offset + PCAP_RECORD_HEADER_LEN]
        )
        offset += PCAP_RECORD_HEADER_LEN
        if offset + incl_len > len(data):
            raise Truncated(f"record {index}: {incl_len} data bytes missing")
        records.append((ts_sec, ts_usec, data[offset : offset + incl_len]))
        offset += incl_len
    return records
