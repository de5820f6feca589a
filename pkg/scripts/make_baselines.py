#!/usr/bin/env python3
"""Regenerate the bundled baselines under src/eigrpsim/data/.

Two kinds of baseline ship with the package:

* fixtures/<scenario>/: hand-transcribed reference captures from the
  trusted-device measurement of each scenario (message kinds, flags, route
  sets, cast modes) plus the reference routing tables.  The transcriptions
  are maintained here as literals; rerunning the script rewrites the same
  content.

* goldens/<scenario>/: frozen outputs of this simulator, used as the
  regression baseline by `eigrpsim repro`.  Rerunning the script refreshes
  them from a live run, so only run it after deliberately changing
  protocol behavior, and review the diff.
"""

from __future__ import annotations

import json
import shutil
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from eigrpsim import runner  # noqa: E402

DATA = Path(__file__).resolve().parent.parent / "src" / "eigrpsim" / "data"

MCAST = "224.0.0.10"
HELLO_TLVS = ["parameters", "software-version", "peer-topology-id-list"]


def msg(
    index: int,
    opcode: str,
    src: str,
    dst: str,
    *,
    flags: list[str] | None = None,
    routes: list[tuple[str, str]] | None = None,
    ack: int = 0,
    tlv_kinds: list[str] | None = None,
) -> dict:
    routes = routes or []
    if tlv_kinds is None:
        tlv_kinds = HELLO_TLVS if opcode == "Hello" and ack == 0 else []
        if routes:
            tlv_kinds = ["internal-route"] * len(routes)
    return {
        "index": index,
        "timestamp": round(0.1 * (index - 1), 3),
        "opcode": opcode,
        "flags": flags or [],
        "src": src,
        "dst": dst,
        "multicast": dst == MCAST,
        "routes": [list(r) for r in routes],
        "tlv_kinds": tlv_kinds,
        "acknowledgment": ack,
    }


R = "reachable"
U = "unreachable"

# Scenario 1 reference capture on the R1-R2 wire: adjacency formation after
# the link comes up.  Messages 4 and 10 are retransmissions (the reference
# device missed two ack deadlines); retransmissions go out unicast.
R1_12, R2_12 = "10.0.12.1", "10.0.12.2"
SYNC_ROUTES = [
    ("1.0.0.0/24", R),
    ("2.0.0.0/24", R),
    ("3.0.0.0/24", R),
    ("10.0.13.0/30", R),
    ("10.0.23.0/30", R),
]
SCENARIO1_TRACE = [
    msg(1, "Hello", R1_12, MCAST),
    msg(2, "Hello", R2_12, MCAST),
    msg(3, "Update", R2_12, R1_12, flags=["INIT"]),
    msg(4, "Update", R2_12, R1_12, flags=["INIT"]),
    msg(5, "Update", R1_12, R2_12, flags=["INIT"], ack=1),
    msg(6, "Update", R2_12, MCAST, flags=["EOT"], routes=SYNC_ROUTES),
    msg(7, "Hello", R2_12, R1_12, ack=1),
    msg(8, "Update", R1_12, MCAST, flags=["EOT"], routes=SYNC_ROUTES),
    msg(9, "Hello", R2_12, R1_12, ack=2),
    msg(10, "Update", R2_12, R1_12, flags=["EOT"], routes=SYNC_ROUTES),
    msg(11, "Hello", R1_12, R2_12, ack=2),
    msg(12, "Update", R1_12, MCAST,
        routes=[("2.0.0.0/24", U), ("10.0.23.0/30", U)]),
    msg(13, "Update", R2_12, MCAST,
        routes=[("1.0.0.0/24", U), ("10.0.13.0/30", U)]),
    msg(14, "Hello", R2_12, R1_12, ack=3),
    msg(15, "Hello", R1_12, R2_12, ack=3),
]

# Scenario 2 reference capture on the R1-R3 wire: diffusing computation
# after the R1-R2 link fails.  The reference reply (message 4) still offers
# 10.0.12.0/30 with a metric because the other router's query had not
# reached R3 yet.
R1_13, R3_13 = "10.0.13.1", "10.0.13.2"
SCENARIO2_TRACE = [
    msg(1, "Query", R1_13, MCAST,
        routes=[("2.0.0.0/24", U), ("10.0.12.0/30", U)]),
    msg(2, "Hello", R3_13, R1_13, ack=1),
    msg(3, "Update", R1_13, MCAST, routes=[("10.0.23.0/30", U)]),
    msg(4, "Reply", R3_13, R1_13, ack=2,
        routes=[("2.0.0.0/24", R), ("10.0.12.0/30", R)]),
    msg(5, "Hello", R1_13, R3_13, ack=1),
    msg(6, "Update", R3_13, MCAST, routes=[("10.0.12.0/30", R)]),
    msg(7, "Update", R1_13, MCAST,
        routes=[("2.0.0.0/24", U), ("10.0.12.0/30", U)]),
    msg(8, "Hello", R3_13, R1_13, ack=3),
    msg(9, "Hello", R1_13, R3_13, ack=2),
    msg(10, "Query", R3_13, MCAST, routes=[("10.0.12.0/30", U)]),
    msg(11, "Hello", R1_13, R3_13, ack=3),
    msg(12, "Reply", R1_13, R3_13, ack=3, routes=[("10.0.12.0/30", U)]),
    msg(13, "Hello", R3_13, R1_13, ack=4),
]

# Reference routing tables for R1, transcribed from the measurement's
# before/after table dumps.  The device prints no composite metric for
# connected routes; learned entries carry [administrative distance/metric].
TABLE_NO_LINK = """\
# node=R1 t=0
C 1.0.0.0/24 is directly connected, lan0
D 2.0.0.0/24 [90/332800] via 10.0.13.2, ethg1
D 3.0.0.0/24 [90/307200] via 10.0.13.2, ethg1
C 10.0.13.0/30 is directly connected, ethg1
D 10.0.23.0/30 [90/307200] via 10.0.13.2, ethg1
"""

TABLE_FULL = """\
# node=R1 t=0
C 1.0.0.0/24 is directly connected, lan0
D 2.0.0.0/24 [90/307200] via 10.0.12.2, ethg0
D 3.0.0.0/24 [90/307200] via 10.0.13.2, ethg1
C 10.0.12.0/30 is directly connected, ethg0
C 10.0.13.0/30 is directly connected, ethg1
D 10.0.23.0/30 [90/307200] via 10.0.12.2, ethg0
D 10.0.23.0/30 [90/307200] via 10.0.13.2, ethg1
"""

FIXTURES = {
    "scenario1": {
        "meta": {
            "node": "R1",
            "capture": ["R1", "ethg0"],
            "title": "scenario1: initial route discovery, reference capture",
        },
        "trace": SCENARIO1_TRACE,
        "R1-begin.snap": TABLE_NO_LINK,
        "R1-end.snap": TABLE_FULL,
    },
    "scenario2": {
        "meta": {
            "node": "R1",
            "capture": ["R1", "ethg1"],
            "title": "scenario2: topology change propagation, reference capture",
        },
        "trace": SCENARIO2_TRACE,
        "R1-begin.snap": TABLE_FULL,
        "R1-end.snap": TABLE_NO_LINK,
    },
}


def write_fixtures() -> None:
    for name, parts in FIXTURES.items():
        root = DATA / "fixtures" / name
        root.mkdir(parents=True, exist_ok=True)
        (root / "meta.json").write_text(
            json.dumps(parts["meta"], indent=2, sort_keys=True) + "\n"
        )
        (root / "trace.json").write_text(
            json.dumps(parts["trace"], indent=2, sort_keys=True) + "\n"
        )
        for key, value in parts.items():
            if key.endswith(".snap"):
                (root / key).write_text(value)
        print(f"fixture: {root}")


def write_goldens() -> None:
    for name in sorted(runner.BUILTIN_SCENARIOS):
        root = DATA / "goldens" / name
        if root.exists():
            shutil.rmtree(root)
        root.mkdir(parents=True)
        with tempfile.TemporaryDirectory() as tmp:
            rundir = Path(tmp) / name
            manifest = runner.run_and_write(name, rundir, seed=0)
            node, iface = manifest.captures[0]
            shutil.copy(rundir / f"{node}-{iface}.trace.json", root / "trace.json")
            for label in ("begin", "end"):
                shutil.copy(rundir / f"{node}-{label}.snap", root / f"{node}-{label}.snap")
        meta = {
            "node": runner.BUILTIN_SCENARIOS[name].captures[0][0],
            "capture": list(runner.BUILTIN_SCENARIOS[name].captures[0][:2]),
            "title": f"{name}: regression golden (frozen simulator output)",
        }
        (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        print(f"golden: {root}")


if __name__ == "__main__":
    write_fixtures()
    write_goldens()
