"""Command-line entry point: ``wavelace run | validate | corpus``.

Exit codes: 0 when every checked invariant holds, 1 on an invariant
violation, 2 on a usage or scenario error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..simnet import INVARIANTS, check_invariants, run
from .corpus import corpus_dir, corpus_files
from .metrics import emit_metrics
from .scenario import ScenarioError, parse_scenario

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2


def _checks(arg: Optional[str]) -> Optional[list[str]]:
    if arg is None or arg == "default":
        return None
    if arg == "all":
        return list(INVARIANTS)
    names = [x.strip() for x in arg.split(",") if x.strip()]
    unknown = [x for x in names if x not in INVARIANTS]
    if unknown:
        raise ValueError(f"unknown invariant(s): {', '.join(unknown)}; choose from {', '.join(INVARIANTS)}")
    return names


def _report_failures(name: str, seed: int, report) -> None:
    for r in report.failures():
        where = "" if r.pointer is None else " " + json.dumps(r.pointer, sort_keys=True)
        print(f"{name} seed {seed}: invariant {r.name} violated: {r.detail}{where}", file=sys.stderr)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        loaded = parse_scenario(args.scenario)
        checks = _checks(args.check)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    seed = args.seed if args.seed is not None else loaded.seeds[0]
    trace = run(loaded.scenario, seed)
    report = check_invariants(trace, checks)
    metrics = emit_metrics(trace)
    if args.trace:
        trace.export(args.trace)
    doc = metrics.to_dict()
    doc["invariants"] = {
        name: {"ok": r.ok, "detail": r.detail, "pointer": r.pointer} for name, r in report.results.items()
    }
    if args.metrics:
        Path(args.metrics).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.json:
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(metrics.render_text())
        for name, r in report.results.items():
            print(f"  {'PASS' if r.ok else 'FAIL'} {name}" + ("" if r.ok else f": {r.detail}"))
    if not report.ok:
        _report_failures(loaded.name, seed, report)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        loaded = parse_scenario(args.scenario)
    except ScenarioError as exc:
        for issue in exc.issues:
            print(f"invalid: {issue}", file=sys.stderr)
        return EXIT_USAGE
    print(f"ok: {loaded.name}")
    for iid, d in loaded.derived().items():
        print(f"  instance {iid}: n={d['n']} sigma={d['sigma']} f={d['f']} delta={d['delta']}")
    return EXIT_OK


def cmd_corpus(args: argparse.Namespace) -> int:
    directory = Path(args.dir) if args.dir else corpus_dir()
    files = corpus_files(directory)
    if not args.all and not args.names:
        print("error: give scenario names or --all", file=sys.stderr)
        return EXIT_USAGE
    if args.names:
        by = {p.stem: p for p in files}
        missing = [n for n in args.names if n not in by]
        if missing:
            print(f"error: no such corpus scenario(s): {', '.join(missing)}", file=sys.stderr)
            return EXIT_USAGE
        files = [by[n] for n in args.names]
    if not files:
        print(f"error: no scenarios found in {directory}", file=sys.stderr)
        return EXIT_USAGE
    status = EXIT_OK
    for path in files:
        try:
            loaded = parse_scenario(path)
        except ScenarioError as exc:
            print(f"INVALID {path.stem}: {exc}", file=sys.stderr)
            status = EXIT_USAGE
            continue
        seeds = list(range(args.seeds)) if args.seeds else loaded.seeds
        bad = 0
        for seed in seeds:
            report = check_invariants(run(loaded.scenario, seed))
            if not report.ok:
                bad += 1
                _report_failures(loaded.name, seed, report)
        print(f"{'PASS' if not bad else 'FAIL'} {loaded.name} ({len(seeds) - bad}/{len(seeds)} seeds)")
        if bad and status == EXIT_OK:
            status = EXIT_VIOLATION
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavelace", description="Simulate and check blocklace consensus scenarios.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario with one seed")
    r.add_argument("--scenario", required=True, help="scenario file (YAML or JSON)")
    r.add_argument("--seed", type=int, default=None, help="RNG seed (default: the scenario's first seed)")
    r.add_argument("--trace", help="write the JSON-lines trace here")
    r.add_argument("--metrics", help="write the metrics document (JSON) here")
    r.add_argument(
        "--check",
        nargs="?",
        const="default",
        help="comma-separated invariants, or 'all' (default: those the scenario's expectations enable)",
    )
    r.add_argument("--json", action="store_true", help="print the metrics document instead of the summary")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="validate a scenario file")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("corpus", help="run the regression corpus")
    c.add_argument("names", nargs="*", help="scenario names (file stems)")
    c.add_argument("--all", action="store_true", help="run every scenario in the corpus")
    c.add_argument("--dir", help="corpus directory (default: $WAVELACE_CORPUS or the bundled corpus)")
    c.add_argument("--seeds", type=int, default=0, help="run seeds 0..N-1 instead of the scenario's seeds")
    c.set_defaults(func=cmd_corpus)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
