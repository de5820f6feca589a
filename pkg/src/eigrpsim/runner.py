"""Built-in scenarios, artifact production, and run manifests.

A run turns (topology, scenario, seed) into a directory of artifacts:
PCAPs for the configured capture points, begin/end routing snapshots per
router, message-summary JSON per capture, and a manifest with content
hashes so a run can be verified and reproduced bit for bit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path

from . import engine, harness, tables
from .simtime import ps_from_seconds


def data_path(relative: str) -> Path:
    return Path(str(files("eigrpsim") / "data" / relative))


@dataclass(frozen=True)
class ScenarioSpec:
    """One runnable experiment over a topology and a scenario script."""

    name: str
    topology: str  # path relative to the package data dir, or absolute
    scenario: str
    until_seconds: int
    captures: tuple[tuple[str, str, float, float | None], ...]
    # "begin" snapshots are taken at this instant, before any scenario
    # action scheduled at the same time executes.
    begin_snapshot_at: float | None = None


BUILTIN_SCENARIOS = {
    # Initial route discovery: the R1-R2 link is down at boot and comes up
    # at t=100; measured on the R1-R2 wire.
    "scenario1": ScenarioSpec(
        name="scenario1",
        topology="topologies/triangle_nolink.cfg",
        scenario="scenarios/paper.xml",
        until_seconds=104,
        captures=(("R1", "ethg0", 0.0, None),),
        begin_snapshot_at=100,
    ),
    # Topology change propagation: the converged triangle loses the R1-R2
    # link at t=50; measured on the R1-R3 wire.  The run stops before the
    # scripted reconnect at t=100.
    "scenario2": ScenarioSpec(
        name="scenario2",
        topology="topologies/triangle.cfg",
        scenario="scenarios/paper.xml",
        until_seconds=99,
        captures=(("R1", "ethg1", 50.0, 51.0),),
        begin_snapshot_at=50,
    ),
}


@dataclass
class RunResult:
    spec: ScenarioSpec
    sim: engine.Simulation
    snapshots: dict[tuple[str, str], tables.TableSnapshot] = field(
        default_factory=dict
    )  # (node, label) -> snapshot

    def pcap(self, node: str, iface: str) -> bytes:
        return self.sim.export_pcap(node, iface)

    def summaries(self, node: str, iface: str) -> list[harness.MessageSummary]:
        return harness.ingest_pcap(self.pcap(node, iface))


def _resolve(path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() or p.exists() else data_path(path)


def run_scenario(
    spec: ScenarioSpec,
    *,
    seed: int = 0,
    jitter: tuple[float, float] | None = None,
) -> RunResult:
    topology = engine.load_topology(_resolve(spec.topology))
    actions = engine.load_scenario(_resolve(spec.scenario).read_text())
    sim = engine.Simulation(topology, seed=seed, jitter=jitter)
    for node, iface, from_s, until_s in spec.captures:
        sim.enable_capture(
            node, iface, from_seconds=from_s, until_seconds=until_s
        )
    sim.apply_scenario(actions)
    result = RunResult(spec, sim)

    def snap_all(label: str) -> None:
        for name in sorted(sim.nodes):
            result.snapshots[(name, label)] = tables.take_snapshot(
                sim.nodes[name].instance, sim.scheduler.now
            )

    if spec.begin_snapshot_at is not None:
        sim.scheduler.schedule(
            ps_from_seconds(spec.begin_snapshot_at),
            engine.PRIO_SNAPSHOT,
            lambda: snap_all("begin"),
        )
    sim.start()
    sim.run(spec.until_seconds)
    snap_all("end")
    return result


# -- artifacts ---------------------------------------------------------------


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    scenario: str
    topology: str
    scenario_file: str
    seed: int
    captures: tuple[tuple[str, str], ...]
    artifacts: dict  # relative path -> sha256

    def to_json(self) -> str:
        return json.dumps(
            {
                "scenario": self.scenario,
                "topology": self.topology,
                "scenario_file": self.scenario_file,
                "seed": self.seed,
                "captures": [list(c) for c in self.captures],
                "artifacts": dict(sorted(self.artifacts.items())),
            },
            indent=2,
            sort_keys=True,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        raw = json.loads(text)
        return cls(
            scenario=raw["scenario"],
            topology=raw["topology"],
            scenario_file=raw["scenario_file"],
            seed=raw["seed"],
            captures=tuple(tuple(c) for c in raw["captures"]),
            artifacts=raw["artifacts"],
        )

    def verify(self, outdir: Path) -> list[str]:
        """Names of artifacts that are missing or whose hash changed."""
        bad = []
        for name, digest in self.artifacts.items():
            path = outdir / name
            if not path.exists() or _sha256(path.read_bytes()) != digest:
                bad.append(name)
        return bad


def write_artifacts(result: RunResult, outdir: Path, *, seed: int) -> RunManifest:
    outdir.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, str] = {}

    def emit(name: str, payload: bytes) -> None:
        (outdir / name).write_bytes(payload)
        artifacts[name] = _sha256(payload)

    for node, iface, _, _ in result.spec.captures:
        pcap = result.pcap(node, iface)
        emit(f"{node}-{iface}.pcap", pcap)
        emit(
            f"{node}-{iface}.trace.json",
            harness.dump_trace(harness.ingest_pcap(pcap)).encode(),
        )
    for (node, label), snapshot in sorted(result.snapshots.items()):
        emit(f"{node}-{label}.snap", tables.render_snapshot(snapshot).encode())

    manifest = RunManifest(
        scenario=result.spec.name,
        topology=Path(result.spec.topology).name,
        scenario_file=Path(result.spec.scenario).name,
        seed=seed,
        captures=tuple((n, i) for n, i, _, _ in result.spec.captures),
        artifacts=artifacts,
    )
    (outdir / "manifest.json").write_text(manifest.to_json())
    return manifest


def run_and_write(
    name_or_spec: str | ScenarioSpec,
    outdir: Path,
    *,
    seed: int = 0,
    jitter: tuple[float, float] | None = None,
) -> RunManifest:
    spec = (
        BUILTIN_SCENARIOS[name_or_spec]
        if isinstance(name_or_spec, str)
        else name_or_spec
    )
    result = run_scenario(spec, seed=seed, jitter=jitter)
    return write_artifacts(result, outdir, seed=seed)


# -- comparison against a reference directory -----------------------------------


@dataclass(frozen=True)
class ReferenceBundle:
    """A reference fixture directory: a trace plus routing snapshots.

    Layout: ``meta.json`` naming the capture point and node, ``trace.json``
    with message summaries, and ``<node>-<label>.snap`` routing tables.
    """

    root: Path
    node: str
    capture: tuple[str, str]
    title: str

    @classmethod
    def load(cls, root: Path) -> "ReferenceBundle":
        meta = json.loads((root / "meta.json").read_text())
        return cls(
            root=root,
            node=meta["node"],
            capture=tuple(meta["capture"]),
            title=meta.get("title", root.name),
        )

    def trace(self) -> list[harness.MessageSummary]:
        return harness.load_trace(self.root / "trace.json")

    def snapshot(self, label: str) -> tables.TableSnapshot | None:
        path = self.root / f"{self.node}-{label}.snap"
        if not path.exists():
            return None
        return tables.parse_snapshot(path.read_text())


def compare_run(reference: ReferenceBundle, rundir: Path) -> harness.DiffReport:
    """Align the reference trace with a run's capture and diff the
    begin/end routing snapshots of the reference node."""
    node, iface = reference.capture
    simulated = harness.load_trace(rundir / f"{node}-{iface}.trace.json")
    rows = harness.align_traces(reference.trace(), simulated)
    table_diffs: list[harness.TableDiff] = []
    for label in ("begin", "end"):
        ref_snap = reference.snapshot(label)
        sim_path = rundir / f"{reference.node}-{label}.snap"
        if ref_snap is None or not sim_path.exists():
            continue
        sim_snap = tables.parse_snapshot(sim_path.read_text())
        for diff in harness.diff_tables(ref_snap, sim_snap):
            table_diffs.append(
                harness.TableDiff(
                    diff.destination, diff.next_hop,
                    f"{label}: {diff.field}", diff.reference, diff.simulated,
                )
            )
    return harness.DiffReport(
        title=reference.title,
        rows=tuple(rows),
        table_diffs=tuple(table_diffs),
    )
