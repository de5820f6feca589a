"""Verification harness: ingest captures, align reference and simulated
message sequences, diff routing-table snapshots, and render reports.

Everything here is a pure function over immutable inputs.  Alignment works
on message order and content; timestamps are reported but never used as a
match criterion, because control-plane timing on real devices is not
comparable with simulated timing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from difflib import SequenceMatcher
from pathlib import Path

from . import tables, wire
from .wire import EigrpPacket, Flags, Opcode

#: Messages farther apart than this never group into the same row.
ALIGNMENT_WINDOW = 4


class OpcodeMismatch(Exception):
    """diff_messages called on packets of different opcodes."""


class NodeMismatch(Exception):
    """diff_tables called on snapshots of different routers."""


@dataclass(frozen=True)
class MessageSummary:
    """One captured message reduced to its comparable fields."""

    index: int  # 1-based ordinal within the capture
    timestamp: float
    opcode: str
    flags: tuple[str, ...]
    src: str
    dst: str
    multicast: bool
    routes: tuple[tuple[str, str], ...]  # (prefix, "reachable"|"unreachable")
    tlv_kinds: tuple[str, ...]
    acknowledgment: int = 0
    warnings: tuple[str, ...] = ()
    packet: EigrpPacket | None = field(default=None, compare=False, repr=False)

    @property
    def is_ack(self) -> bool:
        return self.opcode == "Hello" and self.acknowledgment != 0

    def describe(self) -> str:
        if self.is_ack:
            return "Ack"
        cast = "multicast" if self.multicast else "unicast"
        parts = [self.opcode, cast]
        if self.flags:
            parts.append("+".join(self.flags))
        if self.routes:
            parts.append(
                " ".join(
                    f"{p}{'' if r == 'reachable' else ' (unreachable)'}"
                    for p, r in self.routes
                )
            )
        return " ".join(parts)


def summarize_packet(
    index: int,
    timestamp: float,
    pkt: EigrpPacket,
    src: str,
    dst: str,
    multicast: bool,
    warnings: tuple[str, ...] = (),
) -> MessageSummary:
    routes = tuple(
        (str(t.destination), "unreachable" if t.unreachable else "reachable")
        for t in pkt.routes()
    )
    flags = tuple(
        name for name, bit in (("INIT", Flags.INIT), ("CR", Flags.CR), ("EOT", Flags.EOT))
        if bit in pkt.flags
    )
    return MessageSummary(
        index=index,
        timestamp=timestamp,
        opcode=pkt.opcode.name.capitalize(),
        flags=flags,
        src=src,
        dst=dst,
        multicast=multicast,
        routes=routes,
        tlv_kinds=tuple(wire.tlv_kind_name(wire.tlv_kind(t)) for t in pkt.tlvs),
        acknowledgment=pkt.acknowledgment,
        warnings=warnings,
        packet=pkt,
    )


def ingest_pcap(data: bytes | str | Path) -> list[MessageSummary]:
    """Decode the EIGRP messages of a capture, in capture order.

    Non-EIGRP frames are skipped.  Frames whose EIGRP checksum fails are
    still summarized, with a warning flag, so a damaged reference capture
    remains inspectable.
    """
    if not isinstance(data, bytes):
        data = Path(data).read_bytes()
    summaries: list[MessageSummary] = []
    for ts_sec, ts_usec, frame in wire.read_pcap(data):
        decoded = wire.parse_eigrp_frame(frame)
        if decoded is None:
            continue
        warnings: tuple[str, ...] = ()
        if not wire.validate_checksum(decoded.eigrp):
            warnings = ("bad-checksum",)
        try:
            pkt = wire.decode_packet(decoded.eigrp, verify_checksum=False)
        except wire.CodecError:
            continue
        summaries.append(
            summarize_packet(
                len(summaries) + 1,
                ts_sec + ts_usec / 1e6,
                pkt,
                str(decoded.src_ip),
                str(decoded.dst_ip),
                decoded.multicast,
                warnings,
            )
        )
    return summaries


# -- trace fixtures ----------------------------------------------------------


def dump_trace(summaries: list[MessageSummary]) -> str:
    payload = [
        {
            "index": s.index,
            "timestamp": s.timestamp,
            "opcode": s.opcode,
            "flags": list(s.flags),
            "src": s.src,
            "dst": s.dst,
            "multicast": s.multicast,
            "routes": [list(r) for r in s.routes],
            "tlv_kinds": list(s.tlv_kinds),
            "acknowledgment": s.acknowledgment,
        }
        for s in summaries
    ]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def load_trace(data: str | Path) -> list[MessageSummary]:
    if isinstance(data, Path):
        data = data.read_text()
    rows = json.loads(data)
    return [
        MessageSummary(
            index=row["index"],
            timestamp=row.get("timestamp", 0.0),
            opcode=row["opcode"],
            flags=tuple(row.get("flags", [])),
            src=row.get("src", ""),
            dst=row.get("dst", ""),
            multicast=row.get("multicast", False),
            routes=tuple((p, r) for p, r in row.get("routes", [])),
            tlv_kinds=tuple(row.get("tlv_kinds", [])),
            acknowledgment=row.get("acknowledgment", 0),
        )
        for row in rows
    ]


# -- sequence alignment ---------------------------------------------------------


@dataclass(frozen=True)
class AlignmentRow:
    """One row of a reference-vs-simulated correspondence table."""

    reference_indices: tuple[int, ...]
    simulated_indices: tuple[int, ...]
    verdict: str  # match | partial | reference-only | simulated-only
    notes: tuple[str, ...] = ()
    description: str = ""

    @property
    def earliest(self) -> tuple[int, int]:
        ref = min(self.reference_indices, default=1 << 30)
        sim = min(self.simulated_indices, default=1 << 30)
        return (min(ref, sim), ref)


def _match_key(s: MessageSummary):
    """Identity used for content matching: opcode, flags, route signature.

    Acknowledgment-only packets collapse onto a single key so they match by
    opcode alone; cast mode and timing are compared, not matched on.
    """
    if s.is_ack:
        return ("ack",)
    return (s.opcode, s.flags, tuple(sorted(s.routes)))


def _pair_verdict(ref: MessageSummary, sim: MessageSummary) -> tuple[str, list[str]]:
    notes = []
    if ref.multicast != sim.multicast:
        notes.append(
            f"cast mode differs: reference "
            f"{'multicast' if ref.multicast else 'unicast'}, simulated "
            f"{'multicast' if sim.multicast else 'unicast'}"
        )
    if not ref.is_ack and ref.tlv_kinds != sim.tlv_kinds:
        notes.append(
            f"TLV sets differ: reference [{', '.join(ref.tlv_kinds)}] vs "
            f"simulated [{', '.join(sim.tlv_kinds)}]"
        )
    return ("partial" if notes else "match"), notes


def _cluster_retransmissions(summaries: list[MessageSummary]):
    """Within one trace, pull a repeat of an earlier message (same key and
    same sender, within the alignment window) into that message's cluster.
    This is how a retransmission ends up in the same row as its original
    even when other traffic sits between them."""
    clusters: list[list[MessageSummary]] = []
    recent: dict[tuple, int] = {}
    for s in summaries:
        if not s.is_ack:
            k = (_match_key(s), s.src)
            pos = recent.get(k)
            if (
                pos is not None
                and s.index - clusters[pos][-1].index <= ALIGNMENT_WINDOW
            ):
                clusters[pos].append(s)
                continue
            clusters.append([s])
            recent[k] = len(clusters) - 1
        else:
            clusters.append([s])
    return clusters


def _group_adjacent(clusters):
    """Merge neighboring clusters that share a key: consecutive acks become
    one group, as do both directions of a hello or INIT exchange.  Messages
    that carry routes stay separate so each keeps its own row."""
    groups: list[list[MessageSummary]] = []
    for cluster in clusters:
        if (
            groups
            and not cluster[0].routes
            and _match_key(groups[-1][0]) == _match_key(cluster[0])
        ):
            groups[-1].extend(cluster)
        else:
            groups.append(list(cluster))
    return groups


def _group_note(group: list[MessageSummary], side: str) -> list[str]:
    firsts: dict[tuple, int] = {}
    retx = []
    for s in group:
        k = (_match_key(s), s.src)
        if k in firsts:
            retx.append(s.index)
        else:
            firsts[k] = s.index
    if retx:
        return [
            f"{side} message{'s' if len(retx) > 1 else ''} "
            f"{','.join(map(str, retx))} grouped as retransmission"
        ]
    return []


def align_traces(
    reference: list[MessageSummary], simulated: list[MessageSummary]
) -> list[AlignmentRow]:
    """Greedy ordered matching of two captures of the same scenario.

    Messages match on (opcode, flags, route-set signature); runs of
    equal-key messages group many-to-many, retransmissions group with their
    original inside a sliding window, and acknowledgment-only packets match
    by opcode alone.  Unmatched messages produce reference-only or
    simulated-only rows.  Every input ordinal appears in exactly one row.
    """
    ref_groups = _group_adjacent(_cluster_retransmissions(reference))
    sim_groups = _group_adjacent(_cluster_retransmissions(simulated))

    matcher = SequenceMatcher(
        a=[_match_key(g[0]) for g in ref_groups],
        b=[_match_key(g[0]) for g in sim_groups],
        autojunk=False,
    )
    rows: list[AlignmentRow] = []
    leftovers_ref: list[list[MessageSummary]] = []
    leftovers_sim: list[list[MessageSummary]] = []

    def emit(ref_group, sim_group) -> None:
        verdict, notes = _pair_verdict(ref_group[0], sim_group[0])
        notes += _group_note(ref_group, "reference")
        notes += _group_note(sim_group, "simulated")
        rows.append(
            AlignmentRow(
                tuple(s.index for s in ref_group),
                tuple(s.index for s in sim_group),
                verdict,
                tuple(notes),
                ref_group[0].describe(),
            )
        )

    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag == "equal":
            for offset in range(i2 - i1):
                emit(ref_groups[i1 + offset], sim_groups[j1 + offset])
        else:
            leftovers_ref.extend(ref_groups[i1:i2])
            leftovers_sim.extend(sim_groups[j1:j2])

    # Second chance: pair equal-key leftover groups in order when their
    # positions fall inside the window (the sequence matcher can strand the
    # original of a retransmission cluster this way).
    remaining_sim = list(leftovers_sim)
    for ref_group in list(leftovers_ref):
        for sim_group in remaining_sim:
            if _match_key(ref_group[0]) != _match_key(sim_group[0]):
                continue
            if abs(ref_group[0].index - sim_group[0].index) > ALIGNMENT_WINDOW:
                continue
            emit(ref_group, sim_group)
            leftovers_ref.remove(ref_group)
            remaining_sim.remove(sim_group)
            break
    leftovers_sim = remaining_sim

    for group in leftovers_ref:
        rows.append(
            AlignmentRow(
                tuple(s.index for s in group), (), "reference-only", (),
                group[0].describe(),
            )
        )
    for group in leftovers_sim:
        rows.append(
            AlignmentRow(
                (), tuple(s.index for s in group), "simulated-only", (),
                group[0].describe(),
            )
        )

    rows.sort(key=lambda r: r.earliest)
    return rows


# -- message diffing --------------------------------------------------------------


def diff_messages(a: MessageSummary, b: MessageSummary) -> list[str]:
    """Field-level differences between two same-opcode messages."""
    if a.opcode != b.opcode:
        raise OpcodeMismatch(f"{a.opcode} vs {b.opcode}")
    diffs: list[str] = []
    if a.tlv_kinds != b.tlv_kinds:
        diffs.append(
            f"tlv kinds: [{', '.join(a.tlv_kinds)}] vs [{', '.join(b.tlv_kinds)}]"
        )
    if a.routes != b.routes:
        diffs.append(f"routes: {list(a.routes)} vs {list(b.routes)}")
    if a.flags != b.flags:
        diffs.append(f"flags: {a.flags} vs {b.flags}")
    if a.multicast != b.multicast:
        diffs.append(
            f"cast mode: {'multicast' if a.multicast else 'unicast'} vs "
            f"{'multicast' if b.multicast else 'unicast'}"
        )
    if a.packet is not None and b.packet is not None:
        for ta, tb in zip(a.packet.tlvs, b.packet.tlvs):
            if type(ta) is type(tb) and ta != tb:
                diffs.append(f"{wire.tlv_kind_name(wire.tlv_kind(ta))}: {ta} vs {tb}")
    return diffs


# -- table diffing ------------------------------------------------------------------


@dataclass(frozen=True)
class TableDiff:
    destination: str
    next_hop: str
    field: str  # route source | destination | metric | next-hop | exit-interface
    reference: str
    simulated: str


def diff_tables(
    reference: tables.TableSnapshot, simulated: tables.TableSnapshot
) -> list[TableDiff]:
    """Side-by-side comparison over the five routing-table fields."""
    if reference.node != simulated.node:
        raise NodeMismatch(f"{reference.node} vs {simulated.node}")

    def keyed(snapshot):
        return {
            (str(e.destination), str(e.next_hop)): e for e in snapshot.routing
        }

    ref, sim = keyed(reference), keyed(simulated)
    diffs: list[TableDiff] = []
    for key in sorted(set(ref) | set(sim)):
        dest, nh = key
        a, b = ref.get(key), sim.get(key)
        if a is None:
            diffs.append(TableDiff(dest, nh, "destination", "absent", b.render()))
            continue
        if b is None:
            diffs.append(TableDiff(dest, nh, "destination", a.render(), "absent"))
            continue
        for field_name, ra, rb in (
            ("route source", a.source, b.source),
            ("metric", f"{a.administrative_distance}/{a.metric}",
             f"{b.administrative_distance}/{b.metric}"),
            ("exit-interface", a.exit_interface, b.exit_interface),
        ):
            if ra != rb:
                diffs.append(TableDiff(dest, nh, field_name, str(ra), str(rb)))
    return diffs


# -- report -------------------------------------------------------------------------


@dataclass(frozen=True)
class DiffReport:
    title: str
    rows: tuple[AlignmentRow, ...]
    table_diffs: tuple[TableDiff, ...]

    @property
    def verdict(self) -> str:
        ok = not self.table_diffs and all(r.verdict == "match" for r in self.rows)
        return "pass" if ok else "fail"


def render_report(report: DiffReport, fmt: str = "text") -> str:
    """Deterministic rendering; ``text`` mirrors a two-column-plus-
    description comparison table, ``json`` has stable keys."""
    if fmt == "json":
        return json.dumps(
            {
                "title": report.title,
                "verdict": report.verdict,
                "rows": [
                    {
                        "reference": list(r.reference_indices),
                        "simulated": list(r.simulated_indices),
                        "verdict": r.verdict,
                        "notes": list(r.notes),
                        "description": r.description,
                    }
                    for r in report.rows
                ],
                "table_diffs": [
                    {
                        "destination": d.destination,
                        "next_hop": d.next_hop,
                        "field": d.field,
                        "reference": d.reference,
                        "simulated": d.simulated,
                    }
                    for d in report.table_diffs
                ],
            },
            indent=2,
            sort_keys=True,
        ) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")

    def fmt_indices(indices: tuple[int, ...]) -> str:
        return ",".join(str(i) for i in indices) if indices else "-"

    lines = [
        f"{report.verdict.upper()}: {report.title}",
        "policy: overall PASS requires every row to match and an empty "
        "table diff; contextual deviations always fail",
        "",
        f"{'reference':>12} | {'simulated':>12} | verdict        | description",
        "-" * 78,
    ]
    for row in report.rows:
        lines.append(
            f"{fmt_indices(row.reference_indices):>12} | "
            f"{fmt_indices(row.simulated_indices):>12} | "
            f"{row.verdict:<14} | {row.description}"
        )
        for note in row.notes:
            lines.append(f"{'':>12} | {'':>12} |                |   note: {note}")
    if report.table_diffs:
        lines.append("")
        lines.append("table differences:")
        for d in report.table_diffs:
            lines.append(
                f"  {d.destination} via {d.next_hop}: {d.field}: "
                f"{d.reference} vs {d.simulated}"
            )
    else:
        lines.append("")
        lines.append("table differences: none")
    return "\n".join(lines) + "\n"
