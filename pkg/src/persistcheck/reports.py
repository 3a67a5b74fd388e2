"""Running scenarios, canonical report JSON and witness trace files."""

from __future__ import annotations

import dataclasses
import io
import itertools
import json
from pathlib import Path
from typing import IO

from . import checker
from .checker import CheckReport, Witness
from .device import Query, verify_q
from .errors import ConfigError
from .faults import Event, FaultSchedule
from .retry import RseqModel, simulate_retry_storm, simulate_rseq
from .scenario import Scenario, protocol_steps, retry_config
from .state import durable, state_digest
from .workload import replay


class ReportError(ValueError):
    pass


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


# -- running checks ----------------------------------------------------------


def run_check(scenario: Scenario, name: str) -> CheckReport:
    """Run one named check against a scenario."""
    init = scenario.initial()
    bounds = scenario.bounds
    if name == "commit-boundary":
        return checker.check_commit_boundary(scenario.workload, init, scenario.writes(), bounds)
    if name == "retry-soundness":
        return checker.check_retry_soundness(scenario.workload, init, scenario.writes(), bounds,
                                             control=scenario.control_initial())
    if name == "clean-not-durable":
        return checker.check_clean_not_durable(scenario.workload, init, scenario.writes(), bounds)
    if name == "prefix-consistency":
        return checker.check_prefix_consistency(scenario.workload, init, bounds)
    if name == "write-sync-rename":
        return checker.check_write_sync_rename(scenario.wsr_steps, init, bounds)
    if name == "completeness":
        steps, initial, max_faults = protocol_steps(scenario.protocol)
        return checker.check_completeness(steps, initial, max_faults)
    if name == "no-commit-time":
        return checker.check_no_commit_time(scenario.workload, init, scenario.writes(), bounds)
    if name == "flush-noop":
        # bring the stack to a non-trivial state first, then flush
        state = replay(scenario.workload, init, FaultSchedule()).final
        return checker.check_flush_noop(state)
    if name == "plp-equivalence":
        return checker.check_plp_equivalence(scenario.workload, init, bounds)
    if name == "device-queries":
        answers = {q.value: verify_q(init, q, bounds) for q in Query}
        verdict = checker.HOLDS if answers["Q4"] else checker.VIOLATED
        return CheckReport("device-queries", verdict, explored=1, details={"answers": answers})
    raise ConfigError(f"unknown check {name!r}")


def check_payload(scenario: Scenario, report: CheckReport) -> dict:
    return {"scenario": scenario.name, "report": report.to_dict()}


def explore_payload(scenario: Scenario) -> dict:
    init = scenario.initial()
    exp = checker.explore(scenario.workload, init, scenario.bounds)
    writes = scenario.writes() if scenario.write_set else None
    outcomes = []
    for o in exp.outcomes:
        rec = {
            "schedule": o.schedule.to_dict(),
            "trace": [list(t) for t in o.trace],
            "crashed": o.crashed,
            "digest": state_digest(o.state),
        }
        if writes is not None:
            rec["durable"] = durable(o.state, writes, strict=False)
        if o.crashed and o.recovered.recovery_flags:
            rec["recovery_flags"] = list(o.recovered.recovery_flags)
        outcomes.append(rec)
    return {
        "scenario": scenario.name,
        "bounds": scenario.bounds.to_dict(),
        "explored": exp.explored,
        "outcomes": outcomes,
    }


def retry_payload(scenario: Scenario, seed: int | None = None) -> dict:
    if scenario.retry is None:
        raise ConfigError(f"scenario {scenario.name!r} has no 'retry' section")
    service, policy, horizon = retry_config(scenario.retry)
    seed = scenario.seed if seed is None else seed
    result = simulate_retry_storm(service, policy, seed, horizon)
    return {
        "scenario": scenario.name,
        "seed": seed,
        "horizon": horizon,
        "policy": dataclasses.asdict(policy),
        "result": result.to_dict(),
    }


def rseq_payload(scenario: Scenario, seed: int | None = None) -> dict:
    if scenario.rseq is None:
        raise ConfigError(f"scenario {scenario.name!r} has no 'rseq' section")
    model = RseqModel(**scenario.rseq)
    seed = scenario.seed if seed is None else seed
    return {
        "scenario": scenario.name,
        "seed": seed,
        "model": {"length": model.length, "p": model.p, "trials": model.trials},
        "result": simulate_rseq(model, seed).to_dict(),
    }


# -- witness traces ----------------------------------------------------------


def _event_json(e: Event | None):
    if e is None:
        return None
    return {
        "layer": e.layer.name,
        "transition": e.transition,
        "fault": e.fault.value if e.fault is not None else None,
        "digest": e.digest,
    }


def witness_records(witness: Witness) -> list[dict]:
    """Both schedules replayed with event recording, aligned step by step."""
    sides = []
    for schedule, init in ((witness.schedule_a, witness.init_a), (witness.schedule_b, witness.init_b)):
        sides.append(replay(witness.workload, init, schedule, record=True).events)
    steps = sorted({e.step for side in sides for e in side})
    records: list[dict] = [{
        "kind": "header",
        "predicate": witness.predicate,
        "shared_trace": [list(t) for t in witness.trace],
        "a": {"label": witness.label_a, "schedule": witness.schedule_a.to_dict(), "verdict": witness.verdict_a},
        "b": {"label": witness.label_b, "schedule": witness.schedule_b.to_dict(), "verdict": witness.verdict_b},
    }]
    row = 0
    for step in steps:
        a = [e for e in sides[0] if e.step == step]
        b = [e for e in sides[1] if e.step == step]
        for ea, eb in itertools.zip_longest(a, b):
            ja, jb = _event_json(ea), _event_json(eb)
            records.append({"kind": "step", "row": row, "step": step, "a": ja, "b": jb, "same": ja == jb})
            row += 1
    records.append({
        "kind": "verdict",
        "a": {"verdict": witness.verdict_a, "digest": state_digest(witness.state_a)},
        "b": {"verdict": witness.verdict_b, "digest": state_digest(witness.state_b)},
    })
    return records


def emit_witness_trace(witness: Witness | None, out: str | Path | IO[str]) -> int:
    """Write one JSON record per line. Refuses to write an empty witness."""
    if witness is None:
        raise ReportError("no witness to emit")
    records = witness_records(witness)
    if len(records) <= 2:
        raise ReportError("witness replay produced no steps")
    text = "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)
    if isinstance(out, (str, Path)):
        Path(out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return len(records)


def witness_text(witness: Witness) -> str:
    buf = io.StringIO()
    emit_witness_trace(witness, buf)
    return buf.getvalue()
