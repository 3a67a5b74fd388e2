"""Explicit-state exploration and the named persistence checks.

Every check explores a bounded schedule space (see
:func:`persistcheck.workload.expand`) and reports a :class:`CheckReport`.
Witness pairs are two schedules with the same observable trace and different
verdicts for the property under test; the minimal pair has the fewest
injected faults, ties broken by canonical schedule order.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .device import DeviceConfig, issue_flush
from .errors import ConfigError
from .faults import Bounds, FaultSchedule, crash_choices, recover
from .state import (
    DataWrite,
    NamespaceWrite,
    SystemState,
    WriteRef,
    _check_member,
    durable,
    layer_states,
    logical_view,
    pages_clean,
)
from .syscalls import Errno, FsProfile, initial_state
from .workload import Op, Workload, expand, replay

HOLDS = "holds"
VIOLATED = "violated"
WITNESS_FOUND = "witness-found"
INCOMPLETE = "structurally-incomplete"


@dataclass
class Outcome:
    schedule: FaultSchedule
    final: SystemState  # state when the run stopped or crashed
    recovered: SystemState | None = None
    states: list = field(default_factory=list, repr=False)

    @property
    def trace(self):
        return self.final.trace

    @property
    def crashed(self) -> bool:
        return self.recovered is not None

    @property
    def state(self) -> SystemState:
        return self.recovered if self.recovered is not None else self.final


@dataclass
class Exploration:
    workload: Workload
    init: SystemState
    bounds: Bounds
    outcomes: list[Outcome]

    @property
    def explored(self) -> int:
        return len(self.outcomes)

    def no_crash(self) -> list[Outcome]:
        return [o for o in self.outcomes if not o.crashed]

    def crashes(self) -> list[Outcome]:
        return [o for o in self.outcomes if o.crashed]


def explore(workload: Workload, init: SystemState, bounds: Bounds | None = None) -> Exploration:
    """Every outcome within ``bounds``, canonically ordered by schedule."""
    bounds = bounds or Bounds()
    outcomes = []
    for schedule, ex, media in expand(workload, init, bounds):
        if media is None:
            outcomes.append(Outcome(schedule, ex.final, None, ex.states))
        else:
            k = schedule.crash_after
            pre = ex.states[k]
            outcomes.append(Outcome(schedule, pre, recover(media, pre), ex.states[: k + 1]))
    outcomes.sort(key=lambda o: o.schedule.sort_key())
    return Exploration(workload, init, bounds, outcomes)


# -- reports -----------------------------------------------------------------


@dataclass
class Witness:
    """Two schedules, one observable trace, two verdicts."""

    predicate: str
    schedule_a: FaultSchedule
    schedule_b: FaultSchedule
    state_a: SystemState
    state_b: SystemState
    trace: tuple
    verdict_a: bool
    verdict_b: bool
    workload: Workload
    init_a: SystemState
    init_b: SystemState
    label_a: str = ""
    label_b: str = ""
    judge: Callable[[SystemState], bool] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.state_a.trace != self.state_b.trace or self.state_a.trace != self.trace:
            raise ValueError("witness states must share the observable trace")
        if self.verdict_a == self.verdict_b:
            raise ValueError("witness verdicts must differ")

    @property
    def faults(self) -> int:
        return self.schedule_a.faults + self.schedule_b.faults

    def to_dict(self) -> dict:
        return {
            "predicate": self.predicate,
            "trace": [list(t) for t in self.trace],
            "a": {"label": self.label_a, "schedule": self.schedule_a.to_dict(), "verdict": self.verdict_a},
            "b": {"label": self.label_b, "schedule": self.schedule_b.to_dict(), "verdict": self.verdict_b},
        }


@dataclass
class CheckReport:
    check: str
    verdict: str
    witnesses: list[Witness] = field(default_factory=list)
    counterexamples: list[dict] = field(default_factory=list)
    commit_time_exists: bool | None = None
    explored: int = 0
    details: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.verdict not in (HOLDS, VIOLATED, WITNESS_FOUND, INCOMPLETE):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == WITNESS_FOUND and not self.witnesses:
            raise ValueError("witness-found needs at least one witness")

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "verdict": self.verdict,
            "explored": self.explored,
            "commit_time_exists": self.commit_time_exists,
            "witnesses": [w.to_dict() for w in self.witnesses],
            "counterexamples": self.counterexamples,
            "details": self.details,
        }


def _validate_writes(state: SystemState, writes: Sequence[WriteRef]) -> None:
    for w in writes:
        _check_member(state, w)


def _issued_state(workload: Workload, init: SystemState) -> SystemState:
    # the fault-free run issues every version the workload can write
    return replay(workload, init, FaultSchedule()).final


def _judge_durable(writes: Sequence[WriteRef]) -> Callable[[SystemState], bool]:
    writes = tuple(writes)
    return lambda s: durable(s, writes, strict=False)


def _make_witness(predicate, judge, workload, a: Outcome, b: Outcome, init_a, init_b=None, labels=("", "")):
    return Witness(
        predicate=predicate,
        schedule_a=a.schedule,
        schedule_b=b.schedule,
        state_a=witness_state(a),
        state_b=witness_state(b),
        trace=a.trace,
        verdict_a=judge(witness_state(a)),
        verdict_b=judge(witness_state(b)),
        workload=workload,
        init_a=init_a,
        init_b=init_b if init_b is not None else init_a,
        label_a=labels[0],
        label_b=labels[1],
        judge=judge,
    )


def _traced(o: Outcome) -> SystemState:
    # a recovered state boots with an empty trace; keep the pre-crash one for comparison
    return dataclasses.replace(o.recovered, trace=o.final.trace)


def witness_state(o: Outcome) -> SystemState:
    """The state a verdict is judged on; crash states keep the pre-crash trace."""
    return _traced(o) if o.crashed else o.final


def witness_pairs(outcomes: Iterable[Outcome], judge: Callable[[SystemState], bool]):
    """Pairs (bad, good) with equal traces, ordered fewest faults first then canonically."""
    groups: dict[tuple, list[Outcome]] = {}
    for o in outcomes:
        groups.setdefault(o.trace, []).append(o)
    pairs = []
    for group in groups.values():
        verdicts = [(o, judge(witness_state(o))) for o in group]
        bad = [o for o, v in verdicts if not v]
        good = [o for o, v in verdicts if v]
        pairs.extend(itertools.product(bad, good))
    pairs.sort(key=lambda ab: (ab[0].schedule.faults + ab[1].schedule.faults,
                               ab[0].schedule.sort_key(), ab[1].schedule.sort_key()))
    return pairs


def validate_witness(w: Witness) -> bool:
    """Re-run both schedules from scratch and confirm trace and verdicts."""
    judge = w.judge or (lambda s: durable(s, (), strict=False))
    for schedule, init, verdict in ((w.schedule_a, w.init_a, w.verdict_a), (w.schedule_b, w.init_b, w.verdict_b)):
        ex = replay(w.workload, init, schedule)
        trace = ex.states[schedule.crash_after].trace if schedule.crash_after is not None else ex.final.trace
        if trace != w.trace:
            return False
        state = ex.final if ex.recovered is None else dataclasses.replace(ex.recovered, trace=trace)
        if judge(state) != verdict:
            return False
    return True


# -- checks ------------------------------------------------------------------


def check_commit_boundary(
    workload: Workload, init: SystemState, writes: Sequence[WriteRef], bounds: Bounds | None = None
) -> CheckReport:
    """Does the final syscall's return value determine durability of ``writes``?"""
    _validate_writes(_issued_state(workload, init), writes)
    exp = explore(workload, init, bounds)
    judge = _judge_durable(writes)
    outcomes = exp.no_crash()
    groups: dict[tuple, set[bool]] = {}
    for o in outcomes:
        groups.setdefault(o.trace, set()).add(judge(o.state))
    details = {
        "traces": [
            {"trace": [list(t) for t in trace], "verdicts": sorted(v)}
            for trace, v in sorted(groups.items())
        ]
    }
    pairs = witness_pairs(outcomes, judge)
    if not pairs:
        return CheckReport("commit-boundary", HOLDS, explored=exp.explored, details=details)
    a, b = pairs[0]
    w = _make_witness("durable", judge, workload, a, b, init)
    return CheckReport("commit-boundary", WITNESS_FOUND, [w], explored=exp.explored, details=details)


def check_retry_soundness(
    workload: Workload,
    init: SystemState,
    writes: Sequence[WriteRef],
    bounds: Bounds | None = None,
    control: SystemState | None = None,
) -> CheckReport:
    """Is an fsync that succeeds after an earlier EIO a sign of durability?

    Violated iff some schedule has an fsync return EIO, a later fsync return
    ok, and ``writes`` not durable at the end. With a ``control`` initial
    state (same files, another profile) the first counterexample is replayed
    there; if it shares the trace but differs in verdict it becomes a witness.
    """
    _validate_writes(_issued_state(workload, init), writes)
    exp = explore(workload, init, bounds)
    judge = _judge_durable(writes)
    bad = []
    for o in exp.no_crash():
        codes = [c for name, c in o.trace if name == "fsync"]
        if "EIO" in codes and codes[-1] == "ok" and codes.index("EIO") < len(codes) - 1 and not judge(o.state):
            bad.append(o)
    if not bad:
        return CheckReport("retry-soundness", HOLDS, explored=exp.explored)
    counterexamples = [
        {"schedule": o.schedule.to_dict(), "trace": [list(t) for t in o.trace], "durable": False} for o in bad
    ]
    witnesses = []
    pairs = witness_pairs(exp.no_crash(), judge)
    bad_ids = {id(o) for o in bad}
    pairs = [(a, b) for a, b in pairs if id(a) in bad_ids]
    if pairs:
        witnesses.append(_make_witness("durable", judge, workload, pairs[0][0], pairs[0][1], init))
    details = {}
    if control is not None:
        first = bad[0]
        ex = replay(workload, control, first.schedule)
        ctl_verdict = judge(ex.final)
        details["control"] = {
            "profile": control.profile.to_dict(),
            "trace": [list(t) for t in ex.final.trace],
            "durable": ctl_verdict,
        }
        if ex.final.trace == first.trace and ctl_verdict and not witnesses:
            ctl = Outcome(first.schedule, ex.final, None, ex.states)
            witnesses.append(
                _make_witness("durable", judge, workload, first, ctl, init, control,
                              labels=(init.profile.name, "control"))
            )
    return CheckReport("retry-soundness", VIOLATED, witnesses, counterexamples, explored=exp.explored,
                       details=details)


def check_clean_not_durable(
    workload: Workload, init: SystemState, writes: Sequence[WriteRef], bounds: Bounds | None = None
) -> CheckReport:
    """Search for a reachable state whose write-set pages are all clean but not durable."""
    _validate_writes(_issued_state(workload, init), writes)
    exp = explore(workload, init, bounds)
    judge = _judge_durable(writes)
    found = []
    for o in exp.no_crash():
        for k, s in enumerate(o.states):
            if k and _issued(s, writes) and pages_clean(s, writes) and not judge(s):
                found.append({"schedule": o.schedule.to_dict(), "step": k, "trace": [list(t) for t in s.trace]})
                break
    verdict = VIOLATED if found else HOLDS
    return CheckReport("clean-not-durable", verdict, counterexamples=found, explored=exp.explored,
                       details={"claim": "clean implies durable"})


def _issued(state: SystemState, writes) -> bool:
    for w in writes:
        if isinstance(w, DataWrite) and state.app.get((w.file, w.index), 0) < w.version:
            return False
    return True


def _freeze_view(view: dict) -> tuple:
    return tuple(sorted(view.items()))


def check_prefix_consistency(workload: Workload, init: SystemState, bounds: Bounds | None = None) -> CheckReport:
    """Does every crash state equal the in-memory view after some prefix of the workload?"""
    if any(op.kind in ("fsync", "fsync_retry", "fsync_dir") or op.sync for op in workload.ops):
        raise ConfigError("prefix consistency is checked on workloads without explicit syncs")
    bounds = bounds or Bounds(max_faults=0, allow_crash=True)
    exp = explore(workload, init, bounds)
    bad = []
    for o in exp.crashes():
        k = o.schedule.crash_after
        prefixes = {_freeze_view(logical_view(s)) for s in o.states[: k + 1]}
        got = _freeze_view(logical_view(o.recovered))
        if got not in prefixes:
            bad.append({
                "schedule": o.schedule.to_dict(),
                "crash_after": k,
                "recovered": _view_json(got),
                "flags": list(o.recovered.recovery_flags),
            })
    return CheckReport("prefix-consistency", VIOLATED if bad else HOLDS, counterexamples=bad,
                       explored=exp.explored)


def _view_json(frozen: tuple) -> dict:
    return {path: {"inode": ino, "pages": [list(p) for p in pages]} for path, (ino, pages) in frozen}


WSR_STEPS = ("write temp", "fsync temp", "rename", "fsync dir")


def write_sync_rename_workload(steps: Sequence[bool] = (True, True, True, True), temp="/target.tmp",
                               target="/target") -> Workload:
    if len(steps) != 4:
        raise ConfigError("write-sync-rename takes exactly four step flags")
    ops = [Op("create", temp)]
    if steps[0]:
        ops.append(Op("write", temp, 0))
    if steps[1]:
        ops.append(Op("fsync", temp))
    if steps[2]:
        ops.append(Op("rename", temp, dest=target))
    if steps[3]:
        ops.append(Op("fsync_dir", "/"))
    return Workload(tuple(ops), stop_on_error=True)


def wsr_initial(profile: FsProfile | str = "ext4-ordered", device: DeviceConfig | None = None,
                target="/target") -> SystemState:
    return initial_state(profile, device, files={target: {0: 1}})


def check_write_sync_rename(
    steps: Sequence[bool],
    init: SystemState,
    bounds: Bounds | None = None,
    temp: str = "/target.tmp",
    target: str = "/target",
) -> CheckReport:
    """Every crash state must show the target as complete-old or complete-new.

    Additionally, once every step has returned ok, a crash must show the new
    content: a protocol that reports success while the replacement can still
    be lost is reported as NEW-not-durable.
    """
    workload = write_sync_rename_workload(steps, temp, target)
    bounds = bounds or Bounds(max_faults=1, allow_crash=True)
    if not bounds.crashes:
        raise ConfigError("write-sync-rename needs crash placement enabled")
    old_ino = init.namespace.get(target)
    if old_ino is None:
        raise ConfigError(f"target {target} must exist with old content")
    old = (old_ino, tuple((i, v) for i, v in sorted(_content(init, old_ino)) if v))
    new_ino = init.next_inode  # the temp file's inode
    new = (new_ino, ((0, 1),))
    exp = explore(workload, init, bounds)
    n = len(workload)

    def classify(o: Outcome) -> str:
        got = logical_view(o.recovered).get(target)
        if got == new:
            return "new"
        if got == old:
            k = o.schedule.crash_after
            completed = k == n and all(code == "ok" for _, code in o.final.trace)
            return "new-not-durable" if completed else "old"
        return "neither"

    counts: dict[str, int] = {}
    bad = []
    for o in exp.crashes():
        c = classify(o)
        counts[c] = counts.get(c, 0) + 1
        if c in ("neither", "new-not-durable"):
            bad.append({
                "schedule": o.schedule.to_dict(),
                "class": c,
                "trace": [list(t) for t in o.trace],
                "target": _view_json(((target, logical_view(o.recovered)[target]),))
                if target in logical_view(o.recovered) else None,
            })
    details = {"steps": dict(zip(WSR_STEPS, map(bool, steps))), "classes": dict(sorted(counts.items()))}
    if not bad:
        return CheckReport("write-sync-rename", HOLDS, explored=exp.explored, details=details)
    judge = _wsr_judge(target, old, new, n)
    pairs = witness_pairs(exp.crashes(), judge)
    witnesses = []
    if pairs:
        a, b = pairs[0]
        witnesses.append(_make_witness("old-or-new", judge, workload, a, b, init))
    return CheckReport("write-sync-rename", VIOLATED, witnesses, bad, explored=exp.explored, details=details)


def _wsr_judge(target, old, new, n):
    # judged on a recovered state whose trace was restored from before the crash
    def judge(s: SystemState) -> bool:
        got = logical_view(s).get(target)
        if got == new:
            return True
        completed = len(s.trace) == n and all(code == "ok" for _, code in s.trace)
        return got == old and not completed

    return judge


def _content(state: SystemState, inode: int):
    for (ino, idx), v in state.app.sorted_items():
        if ino == inode:
            yield idx, v


# -- completeness ------------------------------------------------------------


@dataclass(frozen=True)
class Step:
    """One forward action over a set of abstract facts, with an optional undo."""

    name: str
    adds: frozenset = frozenset()
    removes: frozenset = frozenset()
    reverse: "Step | None" = None
    fallible: bool = True

    def apply(self, facts: frozenset) -> frozenset:
        return (facts - self.removes) | self.adds

    @classmethod
    def from_dict(cls, d: dict) -> "Step":
        rev = d.get("reverse")
        return cls(
            d["name"],
            frozenset(d.get("adds", ())),
            frozenset(d.get("removes", ())),
            cls.from_dict(rev) if rev else None,
            d.get("fallible", True),
        )

    def to_dict(self) -> dict:
        d = {"name": self.name, "adds": sorted(self.adds), "removes": sorted(self.removes)}
        if self.reverse is not None:
            d["reverse"] = self.reverse.to_dict()
        if not self.fallible:
            d["fallible"] = False
        return d


def run_protocol(steps: Sequence[Step], initial: frozenset, decisions: Sequence[bool]):
    """Execute forward steps, unwinding on the first failure.

    Every fallible step or reverse attempt consumes one decision. Returns
    ``(status, facts, log, opportunities)`` where status is one of
    completed, reversed, stranded.
    """
    facts = frozenset(initial)
    log, done = [], []
    it = iter(decisions)
    opp = 0

    def fails(step: Step) -> bool:
        nonlocal opp
        if not step.fallible:
            return False
        opp += 1
        return bool(next(it, False))

    for step in steps:
        if fails(step):
            log.append(f"{step.name}: failed")
            break
        facts = step.apply(facts)
        done.append(step)
        log.append(f"{step.name}: ok")
    else:
        return "completed", facts, log, opp
    for step in reversed(done):
        if step.reverse is None:
            log.append(f"{step.name}: no reverse")
            return "stranded", facts, log, opp
        if fails(step.reverse):
            log.append(f"{step.reverse.name}: failed")
            return "stranded", facts, log, opp
        facts = step.reverse.apply(facts)
        log.append(f"{step.reverse.name}: ok")
    return ("reversed" if facts == frozenset(initial) else "stranded"), facts, log, opp


def check_completeness(steps: Sequence[Step], initial=frozenset(), max_faults: int = 1) -> CheckReport:
    """Every execution completes forward or unwinds in exact reverse order."""
    initial = frozenset(initial)
    runs = []
    stack = [()]
    while stack:
        prefix = stack.pop()
        status, facts, log, opp = run_protocol(steps, initial, prefix)
        runs.append((prefix, status, facts, log))
        if sum(prefix) < max_faults:
            for j in range(opp - 1, len(prefix) - 1, -1):
                stack.append(prefix + (False,) * (j - len(prefix)) + (True,))
    runs.sort(key=lambda r: (sum(r[0]), [i for i, d in enumerate(r[0]) if d], len(r[0])))
    stranded = [
        {"decisions": [int(d) for d in p], "log": log, "facts": sorted(facts)}
        for p, status, facts, log in runs
        if status == "stranded"
    ]
    missing = []
    if max_faults >= 1:
        for i, step in enumerate(steps):
            if step.reverse is None and any(s.fallible for s in steps[i + 1:]):
                missing.append(step.name)
    details = {"executions": len(runs), "missing_reverse": missing}
    if missing:
        verdict = INCOMPLETE
    elif stranded:
        verdict = VIOLATED
    else:
        verdict = HOLDS
    return CheckReport("completeness", verdict, counterexamples=stranded, explored=len(runs), details=details)


# -- no commit time ----------------------------------------------------------


def check_no_commit_time(
    workload: Workload, init: SystemState, writes: Sequence[WriteRef], bounds: Bounds | None = None
) -> CheckReport:
    """Is there a step index after which ``writes`` are durable in every continuation?

    A candidate k holds when, for every schedule, every state from step k on
    (and, with crashes enabled, every crash state placed at k or later) has
    ``writes`` durable. Candidates are the step indices 1..n.
    """
    _validate_writes(_issued_state(workload, init), writes)
    exp = explore(workload, init, bounds)
    judge = _judge_durable(writes)
    n = len(workload)
    refuted: dict[int, dict] = {}
    for o in exp.outcomes:
        if o.crashed:
            last_bad = o.schedule.crash_after if not judge(o.state) else 0
        else:
            # a run that stopped early stays in its final state for the remaining steps
            m = len(o.states) - 1
            verdicts = [judge(o.states[min(j, m)]) for j in range(n + 1)]
            last_bad = max((j for j, v in enumerate(verdicts) if not v), default=0)
        for k in range(1, last_bad + 1):
            refuted.setdefault(k, {"candidate": k, "schedule": o.schedule.to_dict(), "step": last_bad})
    candidates = [k for k in range(1, n + 1) if k not in refuted]
    exists = bool(candidates)
    details = {
        "candidates": candidates,
        "earliest": candidates[0] if candidates else None,
        "refutations": {str(k): refuted[k] for k in sorted(refuted)},
    }
    return CheckReport(
        "no-commit-time",
        HOLDS if exists else VIOLATED,
        counterexamples=[refuted[k] for k in sorted(refuted)],
        commit_time_exists=exists,
        explored=exp.explored,
        details=details,
    )


# -- device checks -----------------------------------------------------------


def check_flush_noop(state: SystemState) -> CheckReport:
    """A flush with no volatile cache succeeds and leaves every layer untouched."""
    after, ok = issue_flush(state)
    same = layer_states(after) == layer_states(state)
    volatile = state.device.volatile
    details = {"ok": ok, "zero_delta": same, "volatile": volatile, "epoch": [state.epoch, after.epoch]}
    verdict = HOLDS if ok and (same or volatile) else VIOLATED
    return CheckReport("flush-noop", verdict, explored=1, details=details)


PLP_DEVICE = DeviceConfig(volatile_cache_present=True, volatile_cache_enabled=True, fua_supported=True, plp=True)
NO_CACHE_DEVICE = DeviceConfig(volatile_cache_present=False, volatile_cache_enabled=False, fua_supported=True)


def crash_state_sets(workload: Workload, init: SystemState, bounds: Bounds) -> dict[int, frozenset]:
    """Post-crash media states per crash position, over all fault schedules."""
    out: dict[int, set] = {}
    for schedule, ex, media in expand(workload, init, bounds):
        if media is not None:
            out.setdefault(schedule.crash_after, set()).add(media)
    return {k: frozenset(v) for k, v in sorted(out.items())}


def check_plp_equivalence(
    workload: Workload, init: SystemState, bounds: Bounds | None = None, reference: DeviceConfig | None = None
) -> CheckReport:
    """Crash-state sets under a PLP cache equal those with no volatile cache at all."""
    bounds = bounds or Bounds(max_faults=0, allow_crash=True)
    plp = dataclasses.replace(init, device=dataclasses.replace(PLP_DEVICE, fua_supported=init.device.fua_supported))
    bare = dataclasses.replace(init, device=reference or dataclasses.replace(
        NO_CACHE_DEVICE, fua_supported=init.device.fua_supported))
    a = crash_state_sets(workload, plp, bounds)
    b = crash_state_sets(workload, bare, bounds)
    differing = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    # the same workload on a volatile cache, to show the comparison is not vacuous
    volatile = crash_state_sets(workload, dataclasses.replace(init, device=dataclasses.replace(
        PLP_DEVICE, plp=False, fua_supported=init.device.fua_supported)), bounds)
    details = {
        "positions": sorted(set(a) | set(b)),
        "sizes_volatile": [len(volatile.get(k, ())) for k in sorted(set(a) | set(b))],
        "sizes_plp": [len(a.get(k, ())) for k in sorted(set(a) | set(b))],
        "sizes_no_cache": [len(b.get(k, ())) for k in sorted(set(a) | set(b))],
        "differing_positions": differing,
    }
    return CheckReport("plp-equivalence", VIOLATED if differing else HOLDS,
                       explored=sum(map(len, a.values())) + sum(map(len, b.values())), details=details)


def q4_well_defined(state: SystemState, bounds: Bounds | None = None) -> bool:
    """Does every fsync outcome map to a single durability verdict on this stack?

    Runs write + fsync on a file whose page already has a block (so the only
    journal traffic is unrelated inode metadata) with failures injected.
    """
    path = None
    for p, ino in state.namespace.sorted_items():
        if any(k[0] == ino for k in state.mem_alloc):
            path = p
            break
    if path is None:
        state = initial_state(state.profile, state.device, files={"/q4": {0: 0}})
        path = "/q4"
    ino = state.namespace[path]
    index = min(k[1] for k in state.mem_alloc if k[0] == ino)
    version = state.app.get((ino, index), 0) + 1
    workload = Workload((Op("write", path, index), Op("fsync", path)))
    report = check_commit_boundary(workload, state, [DataWrite(ino, index, version)], bounds or Bounds(max_faults=1))
    return report.verdict == HOLDS


__all__ = [
    "HOLDS", "VIOLATED", "WITNESS_FOUND", "INCOMPLETE",
    "Outcome", "Exploration", "Witness", "CheckReport", "Step",
    "explore", "witness_pairs", "validate_witness",
    "check_commit_boundary", "check_retry_soundness", "check_clean_not_durable",
    "check_prefix_consistency", "check_write_sync_rename", "check_completeness",
    "check_no_commit_time", "check_flush_noop", "check_plp_equivalence",
    "crash_state_sets", "q4_well_defined", "run_protocol",
    "write_sync_rename_workload", "wsr_initial", "NamespaceWrite",
]
