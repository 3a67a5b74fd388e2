"""Workloads, deterministic replay and exhaustive schedule enumeration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import BoundsExceeded, ConfigError
from .faults import Bounds, CrashChoice, FaultContext, FaultSchedule, crash_choices, recover
from .state import LayerId, MediaState, SystemState
from .syscalls import (
    Errno,
    sys_create,
    sys_fsync,
    sys_fsync_dir,
    sys_fsync_retry,
    sys_rename,
    sys_unlink,
    sys_write,
)

OP_KINDS = ("write", "fsync", "fsync_retry", "fsync_dir", "rename", "create", "unlink")
MUTATING = frozenset({"write", "rename", "create", "unlink"})


@dataclass(frozen=True)
class Op:
    kind: str
    path: str
    index: int = 0
    dest: str | None = None
    exclusive: bool = True
    sync: bool = False
    version: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in OP_KINDS:
            raise ConfigError(f"unknown op {self.kind!r}; expected one of {OP_KINDS}")
        if self.kind == "rename" and not self.dest:
            raise ConfigError("rename needs 'dest'")

    @classmethod
    def from_dict(cls, d: dict) -> "Op":
        d = dict(d)
        kind = d.pop("op", None)
        if kind is None:
            raise ConfigError(f"workload entry {d} has no 'op' field")
        path = d.pop("path", None)
        if path is None:
            raise ConfigError(f"workload entry {kind!r} has no 'path' field")
        allowed = {"index", "dest", "exclusive", "sync", "version"}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"workload entry {kind!r} has unknown fields {sorted(extra)}")
        return cls(kind=kind, path=path, **d)

    def to_dict(self) -> dict:
        d: dict = {"op": self.kind, "path": self.path}
        if self.kind == "write":
            d["index"] = self.index
            if self.sync:
                d["sync"] = True
            if self.version is not None:
                d["version"] = self.version
        if self.kind == "rename":
            d["dest"] = self.dest
        if self.kind == "create" and not self.exclusive:
            d["exclusive"] = False
        return d

    def label(self) -> str:
        if self.kind == "rename":
            return f"rename({self.path}, {self.dest})"
        if self.kind == "write":
            return f"write({self.path}[{self.index}]{', sync' if self.sync else ''})"
        return f"{self.kind}({self.path})"


@dataclass(frozen=True)
class Workload:
    ops: tuple[Op, ...] = ()
    stop_on_error: bool = False

    def __len__(self) -> int:
        return len(self.ops)

    @classmethod
    def of(cls, ops: Iterable[Op | dict], stop_on_error: bool = False) -> "Workload":
        return cls(tuple(o if isinstance(o, Op) else Op.from_dict(o) for o in ops), stop_on_error)


def apply_op(state: SystemState, op: Op, ctx: FaultContext) -> tuple[SystemState, Errno]:
    if op.kind == "write":
        return sys_write(state, op.path, op.index, op.version, op.sync, ctx)
    if op.kind == "fsync":
        return sys_fsync(state, op.path, ctx)
    if op.kind == "fsync_retry":
        return sys_fsync_retry(state, op.path, ctx)
    if op.kind == "fsync_dir":
        return sys_fsync_dir(state, op.path, ctx)
    if op.kind == "rename":
        return sys_rename(state, op.path, op.dest, ctx)
    if op.kind == "create":
        return sys_create(state, op.path, op.exclusive, ctx)
    return sys_unlink(state, op.path, ctx)


@dataclass
class Execution:
    schedule: FaultSchedule
    states: list[SystemState]  # states[k] is the state after k executed steps
    codes: list[Errno]
    opportunities: list
    opp_after: list[int]  # fault opportunities consumed by the first k steps
    events: list = field(default_factory=list)
    crash_media: MediaState | None = None
    recovered: SystemState | None = None

    @property
    def final(self) -> SystemState:
        return self.states[-1]

    @property
    def trace(self):
        return self.final.trace

    @property
    def completed(self) -> bool:
        return all(c is Errno.OK for c in self.codes)


def execute(
    workload: Workload,
    init: SystemState,
    decisions: Sequence[bool] = (),
    allowed=None,
    record: bool = False,
    upto: int | None = None,
) -> Execution:
    """Run ``workload`` from ``init`` under fault ``decisions``."""
    kwargs = {} if allowed is None else {"allowed": allowed}
    ctx = FaultContext(decisions, record=record, **kwargs)
    states, codes, opp_after = [init], [], [0]
    state = init
    ops = workload.ops if upto is None else workload.ops[:upto]
    for i, op in enumerate(ops):
        ctx.step = i + 1
        state, code = apply_op(state, op, ctx)
        states.append(state)
        codes.append(code)
        opp_after.append(len(ctx.opportunities))
        if workload.stop_on_error and code is not Errno.OK:
            break
    consumed = tuple(bool(d) for d in decisions[: len(ctx.opportunities)])
    consumed = consumed + (False,) * (len(ctx.opportunities) - len(consumed))
    if len(decisions) > len(ctx.opportunities) and any(decisions[len(ctx.opportunities):]):
        raise ConfigError("schedule injects at opportunities the run never reached")
    return Execution(FaultSchedule(consumed), states, codes, list(ctx.opportunities), opp_after, ctx.events)


def replay(workload: Workload, init: SystemState, schedule: FaultSchedule, record: bool = False) -> Execution:
    """Deterministically re-run one schedule, including its crash if any."""
    upto = schedule.crash_after
    ex = execute(workload, init, schedule.decisions, record=record, upto=upto)
    if schedule.crash_after is None:
        ex.schedule = schedule
        return ex
    if schedule.crash_after >= len(ex.states):
        raise ConfigError(f"crash after step {schedule.crash_after} but the run stopped at {len(ex.states) - 1}")
    pre = ex.states[schedule.crash_after]
    choice = schedule.crash or CrashChoice()
    media = dict((c, m) for c, m in crash_choices(pre)).get(choice)
    if media is None:
        raise ConfigError(f"crash choice {choice.describe()} is not a crash state of step {schedule.crash_after}")
    ex.schedule = schedule
    ex.crash_media = media
    ex.recovered = recover(media, pre)
    if record:
        from .faults import Event, FaultPoint
        from .state import state_digest

        ex.events.append(
            Event(schedule.crash_after + 1, LayerId.ControllerCache, f"F4 power loss; landed {choice.describe()}",
                  FaultPoint.F4, True, state_digest(ex.recovered))
        )
    return ex


def decision_vectors(workload: Workload, init: SystemState, bounds: Bounds) -> list[Execution]:
    """All fault-decision executions with at most ``bounds.max_faults`` injections.

    Depth-first: run a prefix with every later opportunity passing, then branch
    on injecting at each later opportunity whose point is enabled.
    """
    injectable = bounds.injectable
    out: list[Execution] = []
    stack: list[tuple[bool, ...]] = [()]
    while stack:
        prefix = stack.pop()
        ex = execute(workload, init, prefix)
        out.append(ex)
        if len(out) > bounds.max_schedules:
            raise BoundsExceeded("fault-decision space exceeds max_schedules", _estimate(ex, bounds))
        if sum(prefix) >= bounds.max_faults:
            continue
        n = len(ex.opportunities)
        for j in range(n - 1, len(prefix) - 1, -1):
            if ex.opportunities[j][0] in injectable:
                stack.append(prefix + (False,) * (j - len(prefix)) + (True,))
    out.sort(key=lambda e: e.schedule.sort_key())
    return out


def _estimate(ex: Execution, bounds: Bounds) -> int:
    n = max(len(ex.opportunities), 1)
    vectors = sum(math.comb(n, k) for k in range(bounds.max_faults + 1))
    return vectors * (1 + (len(ex.states) if bounds.crashes else 0))


def crash_positions(bounds: Bounds, steps: int) -> list[int]:
    if not bounds.crashes:
        return []
    if bounds.crash_positions is None:
        return list(range(steps + 1))
    return [k for k in bounds.crash_positions if 0 <= k <= steps]


def expand(workload: Workload, init: SystemState, bounds: Bounds):
    """Yield ``(schedule, execution, media)`` for every schedule within ``bounds``.

    Each fault-decision vector contributes its no-crash schedule (``media`` is
    None), and for every allowed crash position every distinct crash state at
    that step, with decisions truncated to the opportunities consumed before
    the crash. Yield order is not canonical; callers sort.
    """
    seen: set[FaultSchedule] = set()
    for ex in decision_vectors(workload, init, bounds):
        if ex.schedule not in seen:
            seen.add(ex.schedule)
            yield ex.schedule, ex, None
        for k in crash_positions(bounds, len(ex.states) - 1):
            truncated = ex.schedule.decisions[: ex.opp_after[k]]
            for choice, media in crash_choices(ex.states[k]):
                s = FaultSchedule(truncated, k, choice)
                if s in seen:
                    continue
                seen.add(s)
                if len(seen) > bounds.max_schedules:
                    raise BoundsExceeded("schedule space exceeds max_schedules", _estimate(ex, bounds) * 2)
                yield s, ex, media


def enumerate_schedules(workload: Workload, init: SystemState, bounds: Bounds) -> list[FaultSchedule]:
    """Every fault schedule within ``bounds``, in canonical order."""
    return sorted((s for s, _, _ in expand(workload, init, bounds)), key=FaultSchedule.sort_key)
