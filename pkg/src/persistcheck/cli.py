"""Command-line driver.

Exit codes: 0 when every requested check holds, 1 when a violation or
witness was found (artifacts are written first), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .checker import HOLDS
from .errors import BoundsExceeded, ConfigError
from .reports import (
    ReportError,
    canonical_json,
    check_payload,
    emit_witness_trace,
    explore_payload,
    retry_payload,
    rseq_payload,
    run_check,
)
from .scenario import CHECKS, Scenario, bundled_names, load

EXIT_OK, EXIT_FOUND, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON path or bundled name")
    common.add_argument("--out", help="directory for report and witness files")
    common.add_argument("--bounds", type=int, metavar="K", help="override the maximum injected faults per run")
    common.add_argument("--seed", type=int, help="override the scenario seed (simulations)")
    common.add_argument("--format", choices=["json"], default="json")

    p = argparse.ArgumentParser(prog="persistcheck", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("explore", parents=[common], help="enumerate every outcome within bounds")
    for name, text in (("check", "run one named check"), ("witness", "run a check and emit its witness trace")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("name", choices=CHECKS)
    sub.add_parser("simulate-retry", parents=[common], help="retry-storm simulation")
    sub.add_parser("simulate-rseq", parents=[common], help="restartable-sequence Monte Carlo")
    sub.add_parser("report", parents=[common], help="run every check listed in the scenario")
    sub.add_parser("list", help="list bundled scenarios", add_help=True)
    return p


def _emit(args, stem: str, payload: dict) -> None:
    text = canonical_json(payload)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _witness_files(args, scenario: Scenario, check: str, report) -> list[str]:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, w in enumerate(report.witnesses):
        path = out / f"{scenario.name}.{check}.witness{i}.jsonl"
        emit_witness_trace(w, path)
        paths.append(path.name)
    return paths


def _scenario(args) -> Scenario:
    scenario = load(args.scenario)
    if args.bounds is not None:
        scenario.bounds = dataclasses.replace(scenario.bounds, max_faults=args.bounds)
    return scenario


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    if args.command == "list":
        sys.stdout.write("\n".join(bundled_names()) + "\n")
        return EXIT_OK
    try:
        scenario = _scenario(args)
        if args.command == "explore":
            _emit(args, f"{scenario.name}.explore", explore_payload(scenario))
            return EXIT_OK
        if args.command == "simulate-retry":
            _emit(args, f"{scenario.name}.retry", retry_payload(scenario, args.seed))
            return EXIT_OK
        if args.command == "simulate-rseq":
            _emit(args, f"{scenario.name}.rseq", rseq_payload(scenario, args.seed))
            return EXIT_OK
        if args.command in ("check", "witness"):
            report = run_check(scenario, args.name)
            payload = check_payload(scenario, report)
            if report.witnesses and (args.command == "witness" or args.out):
                payload["witness_files"] = _witness_files(args, scenario, args.name, report)
            elif args.command == "witness" and report.verdict != HOLDS:
                sys.stderr.write(f"{args.name}: {report.verdict} but no witness pair exists; nothing emitted\n")
            _emit(args, f"{scenario.name}.{args.name}", payload)
            return EXIT_OK if report.verdict == HOLDS else EXIT_FOUND
        # report: every check the scenario asks for, plus any simulations it configures
        if not (scenario.checks or scenario.retry or scenario.rseq):
            raise ConfigError(f"scenario {scenario.name!r} lists no checks or simulations")
        results, worst = {}, EXIT_OK
        for name in scenario.checks:
            report = run_check(scenario, name)
            results[name] = report.to_dict()
            if report.verdict != HOLDS:
                worst = EXIT_FOUND
                if args.out and report.witnesses:
                    results[name]["witness_files"] = _witness_files(args, scenario, name, report)
        payload = {"scenario": scenario.name, "checks": results}
        if scenario.retry is not None:
            payload["simulate-retry"] = retry_payload(scenario, args.seed)["result"]
        if scenario.rseq is not None:
            payload["simulate-rseq"] = rseq_payload(scenario, args.seed)["result"]
        _emit(args, f"{scenario.name}.report", payload)
        return worst
    except (ConfigError, BoundsExceeded, ReportError) as e:
        msg = str(e)
        if isinstance(e, BoundsExceeded):
            msg += "; raise bounds.max_schedules or lower --bounds"
        sys.stderr.write(f"persistcheck: error: {msg}\n")
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
