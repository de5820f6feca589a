"""Command-line front door: run scenarios, compare against baselines, and
regenerate the reproduction bundle.

Exit codes are a stable contract for CI: 0 pass, 1 comparison mismatch,
2 usage or input error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
from pathlib import Path

from . import engine, harness, runner

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2


def _parse_jitter(value: str | None) -> tuple[float, float] | None:
    if value is None:
        return None
    try:
        low, high = (float(v) for v in value.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected --jitter MIN,MAX in seconds"
        ) from None
    if low < 0 or high < low:
        raise argparse.ArgumentTypeError("need 0 <= MIN <= MAX")
    return (low, high)


def _spec_from_args(args) -> runner.ScenarioSpec:
    if args.scenario_name:
        try:
            return runner.BUILTIN_SCENARIOS[args.scenario_name]
        except KeyError:
            raise SystemExit(
                f"unknown built-in scenario {args.scenario_name!r}; "
                f"choose from {sorted(runner.BUILTIN_SCENARIOS)}"
            ) from None
    if not (args.topology and args.scenario):
        raise SystemExit("need a built-in scenario name or --topology and --scenario")
    captures = []
    for spec in args.capture or []:
        parts = spec.split(":")
        if len(parts) < 2:
            raise SystemExit(f"bad --capture {spec!r}, expected NODE:IFACE[:FROM[:UNTIL]]")
        node, iface = parts[0], parts[1]
        from_s = float(parts[2]) if len(parts) > 2 else 0.0
        until_s = float(parts[3]) if len(parts) > 3 else None
        captures.append((node, iface, from_s, until_s))
    return runner.ScenarioSpec(
        name=Path(args.scenario).stem,
        topology=args.topology,
        scenario=args.scenario,
        until_seconds=args.until,
        captures=tuple(captures),
        begin_snapshot_at=args.snapshot_at,
    )


def cmd_run(args) -> int:
    spec = _spec_from_args(args)
    outdir = Path(args.out)
    try:
        manifest = runner.run_and_write(
            spec, outdir, seed=args.seed, jitter=args.jitter
        )
    except (engine.ParseError, engine.UnknownLink, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {len(manifest.artifacts)} artifacts to {outdir}")
    for name in sorted(manifest.artifacts):
        print(f"  {name}")
    return EXIT_OK


def cmd_compare(args) -> int:
    refdir = Path(args.reference)
    rundir = Path(args.simulated)
    outdir = Path(args.out) if args.out else rundir
    for path, what in ((refdir, "reference"), (rundir, "simulated")):
        if not path.is_dir():
            print(f"error: {what} directory {path} does not exist", file=sys.stderr)
            return EXIT_USAGE
    try:
        reference = runner.ReferenceBundle.load(refdir)
        report = runner.compare_run(reference, rundir)
    except harness.NodeMismatch as exc:
        print(f"error: snapshot node mismatch: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, engine.ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outdir.mkdir(parents=True, exist_ok=True)
    stem = args.report_name or "report"
    (outdir / f"{stem}.txt").write_text(harness.render_report(report, "text"))
    (outdir / f"{stem}.json").write_text(harness.render_report(report, "json"))
    print(harness.render_report(report, "text"))
    return EXIT_OK if report.verdict == "pass" else EXIT_MISMATCH


def cmd_repro(args) -> int:
    """Run both built-in scenarios with pinned seeds and compare them
    against the bundled baselines.

    Each scenario is checked against its regression golden (expected to
    pass) and additionally reported against the bundled reference-capture
    transcription, which documents where simulated behavior still differs
    contextually from the reference device trace.
    """
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    names = sorted(runner.BUILTIN_SCENARIOS)

    def one(name: str):
        rundir = outdir / name
        runner.run_and_write(name, rundir, seed=0)
        return rundir

    if args.parallel and args.parallel > 1:
        with concurrent.futures.ThreadPoolExecutor(args.parallel) as pool:
            rundirs = dict(zip(names, pool.map(one, names)))
    else:
        rundirs = {name: one(name) for name in names}

    verdicts = {}
    for name in names:
        rundir = rundirs[name]
        golden = runner.ReferenceBundle.load(runner.data_path(f"goldens/{name}"))
        report = runner.compare_run(golden, rundir)
        (rundir / "golden-report.txt").write_text(
            harness.render_report(report, "text")
        )
        (rundir / "golden-report.json").write_text(
            harness.render_report(report, "json")
        )
        verdicts[name] = report.verdict
        print(f"{name}: golden comparison {report.verdict.upper()}")

        reference = runner.ReferenceBundle.load(
            runner.data_path(f"fixtures/{name}")
        )
        ref_report = runner.compare_run(reference, rundir)
        (rundir / "reference-report.txt").write_text(
            harness.render_report(ref_report, "text")
        )
        (rundir / "reference-report.json").write_text(
            harness.render_report(ref_report, "json")
        )
        print(f"{name}: reference comparison {ref_report.verdict.upper()}")

    bundle = {
        "runs": {
            name: json.loads((rundirs[name] / "manifest.json").read_text())
            for name in names
        },
        "verdicts": verdicts,
    }
    (outdir / "bundle.json").write_text(
        json.dumps(bundle, indent=2, sort_keys=True) + "\n"
    )
    return EXIT_OK if all(v == "pass" for v in verdicts.values()) else EXIT_MISMATCH


def cmd_export_pcap(args) -> int:
    spec = _spec_from_args(args)
    if not spec.captures:
        print("error: no capture point; use a built-in scenario or --capture",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        result = runner.run_scenario(spec, seed=args.seed, jitter=args.jitter)
    except (engine.ParseError, engine.UnknownLink, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    node, iface = spec.captures[0][:2]
    out = Path(args.out)
    try:
        out.write_bytes(result.pcap(node, iface))
    except OSError as exc:
        raise engine.IoFailure(str(exc)) from exc
    print(f"wrote {out} ({node}.{iface})")
    return EXIT_OK


def _add_run_like_args(sub, *, needs_out_dir: bool) -> None:
    sub.add_argument("scenario_name", nargs="?", default=None,
                     help="built-in scenario name (scenario1, scenario2)")
    sub.add_argument("--topology", help="topology config file")
    sub.add_argument("--scenario", help="scenario XML file")
    sub.add_argument("--until", type=float, default=120.0,
                     help="simulated run length in seconds")
    sub.add_argument("--capture", action="append",
                     help="capture point NODE:IFACE[:FROM[:UNTIL]]")
    sub.add_argument("--snapshot-at", type=float, default=None,
                     help="take the 'begin' snapshots at this instant")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--jitter", type=_parse_jitter, default=None,
                     metavar="MIN,MAX",
                     help="uniform pacing jitter for protocol transmissions")
    if needs_out_dir:
        sub.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eigrpsim",
        description="Deterministic EIGRP simulator and verification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write artifacts")
    _add_run_like_args(run, needs_out_dir=True)
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser(
        "compare", help="compare a run against a reference bundle"
    )
    compare.add_argument("--reference", required=True,
                         help="reference bundle directory (meta.json, ...)")
    compare.add_argument("--simulated", required=True,
                         help="run directory produced by 'run'")
    compare.add_argument("--out", help="report directory (default: run dir)")
    compare.add_argument("--report-name", default=None)
    compare.set_defaults(func=cmd_compare)

    repro = sub.add_parser(
        "repro", help="re-run both built-in scenarios and verify baselines"
    )
    repro.add_argument("--out", required=True)
    repro.add_argument("--parallel", type=int, default=1,
                       help="run scenarios concurrently")
    repro.set_defaults(func=cmd_repro)

    export = sub.add_parser("export-pcap", help="run and write a single PCAP")
    _add_run_like_args(export, needs_out_dir=False)
    export.add_argument("--out", required=True, help="output .pcap path")
    export.set_defaults(func=cmd_export_pcap)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(f"error: {exc.code}", file=sys.stderr)
            return EXIT_USAGE
        raise


if __name__ == "__main__":
    sys.exit(main())
