import random
import struct
from ipaddress import IPv4Address, IPv4Network

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigrpsim import wire
from eigrpsim.wire import (
    AuthenticationTlv,
    BadChecksum,
    EigrpPacket,
    Flags,
    InternalRouteTlv,
    InvariantViolation,
    Opcode,
    OpaqueTlv,
    ParametersTlv,
    PeerTopologyIdListTlv,
    SoftwareVersionTlv,
    StubTlv,
    Truncated,
    UnknownOpcode,
    compute_checksum,
    decode_packet,
    encode_packet,
    validate_checksum,
)


def checksum_reference(data: bytes) -> int:
    # Independent oracle: naive 32-bit accumulator, folded once at the end.
    if len(data) % 2:
        data += b"\x00"
    total = 0
    for i in range(0, len(data), 2):
        total += (data[i] << 8) | data[i + 1]
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


class TestChecksum:
    def test_all_zero_20_bytes(self):
        assert compute_checksum(bytes(20)) == 0xFFFF

    def test_appending_own_checksum_validates(self):
        data = b"\x12\x34\x56\x78\x9a\xbc"
        checksum = compute_checksum(data + b"\x00\x00")
        # place checksum in the trailing 16-bit word
        assert validate_checksum(data + struct.pack(">H", checksum))

    def test_matches_naive_reference(self):
        rng = random.Random(7)
        for _ in range(500):
            data = rng.randbytes(rng.randrange(0, 120))
            assert compute_checksum(data) == checksum_reference(data)

    @given(st.binary(max_size=200))
    def test_matches_naive_reference_property(self, data):
        assert compute_checksum(data) == checksum_reference(data)


def random_packet(rng: random.Random) -> EigrpPacket:
    opcode = rng.choice(
        [Opcode.UPDATE, Opcode.QUERY, Opcode.REPLY, Opcode.HELLO]
    )
    flags = Flags.NONE
    if opcode is Opcode.UPDATE:
        flags = rng.choice([Flags.NONE, Flags.INIT, Flags.EOT, Flags.CR | Flags.EOT])
    tlvs = []
    for _ in range(rng.randrange(0, 5)):
        kind = rng.randrange(0, 7)
        if kind == 0:
            tlvs.append(
                ParametersTlv(*(rng.randrange(0, 2) for _ in range(5)),
                              hold_time=rng.randrange(1, 300))
            )
        elif kind == 1:
            tlvs.append(SoftwareVersionTlv(*(rng.randrange(0, 30) for _ in range(4))))
        elif kind == 2:
            tlvs.append(
                PeerTopologyIdListTlv(
                    rng.randrange(0, 4),
                    tuple(rng.randrange(0, 100) for _ in range(rng.randrange(0, 3))),
                )
            )
        elif kind == 3:
            tlvs.append(StubTlv(rng.randrange(0, 64)))
        elif kind == 4:
            tlvs.append(AuthenticationTlv(bytes(rng.randrange(33, 127) for _ in range(rng.randrange(0, 16)))))
        elif kind == 5:
            plen = rng.randrange(0, 33)
            addr = rng.getrandbits(32) & (0xFFFFFFFF << (32 - plen) if plen else 0)
            tlvs.append(
                InternalRouteTlv(
                    IPv4Network((addr, plen)),
                    scaled_delay=rng.choice([rng.getrandbits(31), wire.DELAY_UNREACHABLE]),
                    scaled_bandwidth=rng.getrandbits(31),
                    next_hop=IPv4Address(rng.getrandbits(32)),
                    mtu=rng.randrange(0, 1 << 24),
                    hop_count=rng.randrange(0, 256),
                    reliability=rng.randrange(0, 256),
                    load=rng.randrange(0, 256),
                )
            )
        else:
            tlvs.append(OpaqueTlv(rng.choice([0x0602, 0x00F5, 0x0103]),
                                  rng.randbytes(rng.randrange(0, 40))))
    return EigrpPacket(
        opcode=opcode,
        flags=flags,
        sequence=0 if opcode is Opcode.HELLO else rng.getrandbits(32),
        acknowledgment=rng.getrandbits(32),
        autonomous_system=rng.randrange(0, 1 << 16),
        virtual_router_id=rng.randrange(0, 1 << 16),
        tlvs=tuple(tlvs),
    )


class TestCodecRoundTrip:
    def test_hello_with_parameters_round_trips(self):
        pkt = EigrpPacket(
            Opcode.HELLO,
            tlvs=(ParametersTlv(1, 0, 1, 0, 0, hold_time=15),),
        )
        assert decode_packet(encode_packet(pkt)) == pkt

    def test_unreachable_route_survives(self):
        pkt = EigrpPacket(
            Opcode.UPDATE,
            sequence=9,
            tlvs=(
                InternalRouteTlv(
                    IPv4Network("2.0.0.0/24"),
                    scaled_delay=wire.DELAY_UNREACHABLE,
                    scaled_bandwidth=256000,
                ),
            ),
        )
        decoded = decode_packet(encode_packet(pkt))
        assert decoded == pkt
        assert decoded.routes()[0].unreachable

    def test_thousand_random_packets(self):
        rng = random.Random(2024)
        for _ in range(1000):
            pkt = random_packet(rng)
            assert decode_packet(encode_packet(pkt)) == pkt

    def test_checksum_of_encoded_packet_validates(self):
        rng = random.Random(5)
        for _ in range(50):
            assert validate_checksum(encode_packet(random_packet(rng)))

    def test_unknown_tlv_preserved_not_dropped(self):
        pkt = EigrpPacket(
            Opcode.UPDATE, sequence=1,
            tlvs=(OpaqueTlv(0x0602, b"wide-metric-blob"),),
        )
        assert decode_packet(encode_packet(pkt)).tlvs == pkt.tlvs


class TestCodecErrors:
    def test_truncated_header(self):
        with pytest.raises(Truncated):
            decode_packet(bytes(19))

    def test_single_bit_flip_breaks_checksum(self):
        rng = random.Random(11)
        data = bytearray(encode_packet(random_packet(rng)))
        for _ in range(200):
            pos = rng.randrange(len(data))
            bit = 1 << rng.randrange(8)
            data[pos] ^= bit
            with pytest.raises(BadChecksum):
                decode_packet(bytes(data))
            data[pos] ^= bit

    def test_unknown_opcode(self):
        pkt = encode_packet(EigrpPacket(Opcode.UPDATE, sequence=1))
        forged = bytearray(pkt)
        forged[1] = 2  # Request: defined, but unsupported here
        forged[2:4] = b"\x00\x00"
        forged[2:4] = struct.pack(">H", compute_checksum(bytes(forged)))
        with pytest.raises(UnknownOpcode):
            decode_packet(bytes(forged))

    def test_tlv_length_overrun(self):
        pkt = encode_packet(EigrpPacket(Opcode.UPDATE, sequence=1))
        bad = bytearray(pkt + struct.pack(">HH", 0x0001, 40))
        bad[2:4] = b"\x00\x00"
        bad[2:4] = struct.pack(">H", compute_checksum(bytes(bad)))
        with pytest.raises(Truncated):
            decode_packet(bytes(bad))

    def test_hello_with_sequence_rejected_on_encode(self):
        with pytest.raises(InvariantViolation):
            encode_packet(EigrpPacket(Opcode.HELLO, sequence=3))

    def test_init_flag_requires_update(self):
        with pytest.raises(InvariantViolation):
            encode_packet(EigrpPacket(Opcode.QUERY, Flags.INIT, sequence=1))

    def test_oversized_auth_tag(self):
        with pytest.raises(InvariantViolation):
            AuthenticationTlv(b"x" * 17)


class TestWireInvariants:
    def test_header_is_20_bytes_and_length_consistent(self):
        rng = random.Random(3)
        for _ in range(100):
            pkt = random_packet(rng)
            data = encode_packet(pkt)
            tlv_total = sum(
                len(wire.encode_tlv(t)) for t in pkt.tlvs
            )
            assert len(data) == wire.EIGRP_HEADER_LEN + tlv_total
            kind, declared = (
                struct.unpack(">HH", data[20:24]) if pkt.tlvs else (None, None)
            )
            if pkt.tlvs:
                assert declared == len(wire.encode_tlv(pkt.tlvs[0]))

    @settings(max_examples=200)
    @given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
    def test_header_field_positions(self, seq, ack):
        pkt = EigrpPacket(Opcode.QUERY, sequence=seq, acknowledgment=ack,
                          autonomous_system=7, virtual_router_id=0)
        data = encode_packet(pkt)
        assert data[0] == 2  # header version
        assert data[1] == 3  # query opcode
        assert struct.unpack(">I", data[8:12])[0] == seq
        assert struct.unpack(">I", data[12:16])[0] == ack
        assert struct.unpack(">H", data[18:20])[0] == 7


# Known byte vectors, checked against the published registry values the
# dissectors use: opcodes (update 1, query 3, reply 4, hello 5), flag bits
# (init 0x01, cr 0x02, eot 0x08), TLV type codes and layouts.
class TestKnownVectors:
    def test_reference_hello_bytes(self):
        pkt = EigrpPacket(
            Opcode.HELLO,
            autonomous_system=1,
            tlvs=(
                ParametersTlv(1, 0, 1, 0, 0, hold_time=15),
                SoftwareVersionTlv(15, 7, 2, 0),
                PeerTopologyIdListTlv(0, (0,)),
            ),
        )
        data = encode_packet(pkt)
        expected = bytes.fromhex(
            "0205"          # version 2, opcode hello
            "eab6"          # checksum
            "00000000"      # flags
            "00000000"      # sequence
            "00000000"      # acknowledgment
            "0000"          # virtual router id
            "0001"          # autonomous system
            "0001000c" "0100010000" "00" "000f"      # parameters: K, hold 15
            "00040008" "0f070200"                    # software version
            "0008000a" "0000" "0002" "0000"          # peer topology id list
        )
        assert data == expected

    def test_internal_route_tlv_layout(self):
        tlv = InternalRouteTlv(
            IPv4Network("10.0.13.0/30"),
            scaled_delay=25600,
            scaled_bandwidth=256000,
            mtu=1500,
            hop_count=1,
        )
        data = wire.encode_tlv(tlv)
        assert data[:4] == bytes.fromhex("0102001d")  # type 0x0102, length 29
        assert data[4:8] == bytes(4)  # next hop 0.0.0.0
        assert struct.unpack(">I", data[8:12])[0] == 25600
        assert struct.unpack(">I", data[12:16])[0] == 256000
        assert data[16:19] == (1500).to_bytes(3, "big")
        assert data[19] == 1    # hop count
        assert data[20] == 255  # reliability
        assert data[21] == 1    # load
        assert data[24] == 30   # prefix length
        assert data[25:29] == bytes([10, 0, 13, 0])

    def test_flag_bits(self):
        assert int(Flags.INIT) == 0x01
        assert int(Flags.CR) == 0x02
        assert int(Flags.EOT) == 0x08

    def test_encapsulation_constants(self):
        assert wire.IP_PROTO_EIGRP == 88
        assert str(wire.EIGRP_MULTICAST_GROUP) == "224.0.0.10"
        assert wire.EIGRP_MULTICAST_MAC == bytes.fromhex("01005e00000a")
        assert wire.multicast_mac(wire.EIGRP_MULTICAST_GROUP) == wire.EIGRP_MULTICAST_MAC


class TestEncapsulation:
    def test_ipv4_header_checksum_and_fields(self):
        ip = wire.build_ipv4(
            IPv4Address("10.0.12.1"), wire.EIGRP_MULTICAST_GROUP, b"abc",
            ident=42,
        )
        assert validate_checksum(ip[:20])
        assert ip[9] == 88
        assert ip[8] == 1  # ttl
        assert ip[1] == 0xC0  # dscp cs6
        assert struct.unpack(">H", ip[2:4])[0] == 23

    def test_parse_eigrp_frame_round_trip(self):
        payload = encode_packet(EigrpPacket(Opcode.HELLO))
        ip = wire.build_ipv4(
            IPv4Address("10.0.12.2"), IPv4Address("10.0.12.1"), payload
        )
        frame = wire.build_ethernet(b"\x0a\0\0\0\1\1", b"\x0a\0\0\0\2\1", ip)
        decoded = wire.parse_eigrp_frame(frame)
        assert decoded is not None
        assert decoded.eigrp == payload
        assert not decoded.multicast
        assert str(decoded.src_ip) == "10.0.12.2"

    def test_short_frames_padded_to_ethernet_minimum(self):
        frame = wire.build_ethernet(bytes(6), bytes(6), b"x")
        assert len(frame) == 60

    def test_non_ipv4_frame_skipped(self):
        arp = bytes(6) + bytes(6) + b"\x08\x06" + bytes(46)
        assert wire.parse_eigrp_frame(arp) is None


class TestPcap:
    def test_empty_trace_is_just_global_header(self):
        data = wire.pcap_bytes([])
        assert len(data) == 24
        assert struct.unpack("<I", data[:4])[0] == 0xA1B2C3D4
        assert struct.unpack("<HH", data[4:8]) == (2, 4)
        assert struct.unpack("<I", data[20:24])[0] == 1  # ethernet

    def test_record_header_arithmetic(self):
        frame = bytes(74)
        data = wire.pcap_bytes([(1_500_000_000_000, frame)])
        ts_sec, ts_usec, incl, orig = struct.unpack("<IIII", data[24:40])
        assert (ts_sec, ts_usec) == (1, 500_000)
        assert incl == orig == 74

    def test_reader_round_trip(self):
        frames = [(0, bytes(60)), (2_750_000_000_000, bytes(90))]
        records = wire.read_pcap(wire.pcap_bytes(frames))
        assert [(r[0], r[1]) for r in records] == [(0, 0), (2, 750_000)]
        assert records[1][2] == bytes(90)

    def test_not_pcap(self):
        with pytest.raises(wire.NotPcap):
            wire.read_pcap(b"\x00" * 30)

    def test_unsupported_linktype(self):
        header = struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 101)
        with pytest.raises(wire.UnsupportedLinktype):
            wire.read_pcap(header)

    def test_truncated_record_names_index(self):
        good = wire.pcap_bytes([(0, bytes(60))])
        with pytest.raises(Truncated, match="record 2"):
            wire.read_pcap(good + struct.pack("<IIII", 0, 0, 50, 50) + bytes(10))
