"""Fault points, schedules, crash-state enumeration and journal recovery."""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from ._frozen import FrozenMap
from .errors import ConfigError
from .state import (
    Health,
    JournalMode,
    JournalTxn,
    LayerId,
    MediaState,
    MetaOp,
    SystemState,
    TxnPhase,
    apply_txn,
    committed_txns,
    state_digest,
)


class FaultPoint(str, Enum):
    F1 = "F1"  # data page submission fails; page already marked clean
    F2 = "F2"  # journal block write fails; filesystem aborts read-only
    F3 = "F3"  # flush barrier fails
    F4 = "F4"  # power loss with un-flushed volatile cache

    @property
    def layer(self) -> LayerId:
        return _POINT_LAYER[self]


_POINT_LAYER = {
    FaultPoint.F1: LayerId.PageCache,
    FaultPoint.F2: LayerId.FilesystemJournal,
    FaultPoint.F3: LayerId.BlockLayer,
    FaultPoint.F4: LayerId.ControllerCache,
}

ALL_POINTS = frozenset(FaultPoint)


@dataclass(frozen=True)
class Event:
    """One internal transition, recorded for witness traces."""

    step: int
    layer: LayerId
    transition: str
    fault: FaultPoint | None = None
    decision: bool = False  # True when this event is a fault decision (injected or passed)
    digest: str = ""


class FaultContext:
    """Supplies fault decisions to the syscall layer and records what happened.

    ``decisions`` is consumed one entry per fault opportunity; opportunities
    beyond its end pass. Opportunities at points outside ``allowed`` always
    pass and are still counted, so the opportunity sequence does not depend on
    which points are enabled.
    """

    def __init__(self, decisions: Iterable[bool] = (), allowed=ALL_POINTS, record: bool = False):
        self.decisions = tuple(decisions)
        self.allowed = frozenset(FaultPoint(p) for p in allowed)
        self.opportunities: list[tuple[FaultPoint, str]] = []
        self.events: list[Event] = []
        self.record_events = record
        self.step = 0

    def decide(self, point: FaultPoint, label: str, state: SystemState | None = None) -> bool:
        i = len(self.opportunities)
        self.opportunities.append((point, label))
        inject = i < len(self.decisions) and bool(self.decisions[i])
        if inject and point not in self.allowed:
            raise ConfigError(f"decision {i} injects {point.value}, which is not enabled")
        verb = "injected" if inject else "passed"
        self.log(point.layer, f"{point.value} {verb}: {label}", state, fault=point if inject else None, decision=True)
        return inject

    def log(self, layer: LayerId, transition: str, state: SystemState | None = None, fault=None, decision=False):
        if not self.record_events:
            return
        d = state_digest(state) if state is not None else ""
        self.events.append(Event(self.step, layer, transition, fault, decision, d))

    @property
    def injected(self) -> int:
        return sum(1 for i in range(len(self.opportunities)) if i < len(self.decisions) and self.decisions[i])


def context(ctx: FaultContext | None) -> FaultContext:
    return ctx if ctx is not None else FaultContext()


@dataclass(frozen=True)
class Bounds:
    max_faults: int = 1
    allow_crash: bool = False
    crash_positions: tuple[int, ...] | None = None  # None means after every step (0..n)
    fault_points: frozenset = ALL_POINTS
    max_schedules: int = 10_000

    def __post_init__(self) -> None:
        if self.max_faults < 0:
            raise ConfigError("max_faults must be >= 0")
        if self.max_schedules < 1:
            raise ConfigError("max_schedules must be >= 1")
        object.__setattr__(self, "fault_points", frozenset(FaultPoint(p) for p in self.fault_points))

    @property
    def injectable(self) -> frozenset:
        # F4 is the crash itself, placed by crash position rather than a decision
        return self.fault_points - {FaultPoint.F4}

    @property
    def crashes(self) -> bool:
        return self.allow_crash and FaultPoint.F4 in self.fault_points

    def to_dict(self) -> dict:
        return {
            "max_faults": self.max_faults,
            "allow_crash": self.allow_crash,
            "crash_positions": None if self.crash_positions is None else list(self.crash_positions),
            "fault_points": sorted(p.value for p in self.fault_points),
            "max_schedules": self.max_schedules,
        }


@dataclass(frozen=True)
class CrashChoice:
    """Which in-flight units landed before power was lost."""

    cache: frozenset = frozenset()  # controller-cache addresses that reached media
    # ((inode, index), how) for background writeback: "submitted" (block allocated in
    # the running txn, data not yet landed), "persisted" (allocated and landed), or
    # "late" (submitted only after the background commit, so its allocation is not in
    # the committed txn, but the data landed)
    pages: tuple = ()
    commit: bool = False  # running transaction committed in the background

    def describe(self) -> dict:
        return {
            "cache": sorted(_addr_str(a) for a in self.cache),
            "pages": [[f"ino {k[0]}[{k[1]}]", how] for k, how in self.pages],
            "commit": self.commit,
        }

    def sort_key(self):
        return (self.commit, sorted(map(repr, self.cache)), self.pages)


@dataclass(frozen=True)
class FaultSchedule:
    decisions: tuple[bool, ...] = ()
    crash_after: int | None = None
    crash: CrashChoice | None = None

    @property
    def faults(self) -> int:
        return sum(self.decisions)

    def injected_at(self) -> tuple[int, ...]:
        return tuple(i for i, d in enumerate(self.decisions) if d)

    def sort_key(self):
        crash = (-1,) if self.crash_after is None else (self.crash_after,)
        ck = self.crash.sort_key() if self.crash is not None else ()
        return (self.faults, self.injected_at(), len(self.decisions), crash, repr(ck))

    def to_dict(self) -> dict:
        return {
            "decisions": [int(d) for d in self.decisions],
            "injected_at": list(self.injected_at()),
            "crash_after": self.crash_after,
            "crash": None if self.crash is None else self.crash.describe(),
        }


def _addr_str(addr) -> str:
    return ":".join(str(a) for a in addr)


# -- crash states ------------------------------------------------------------


def _background_units(state: SystemState):
    """Dirty pages the kernel may have written back, and whether a commit is possible."""
    if state.health is Health.ABORTED:
        return [], False
    dirty = [k for k, p in state.pages.sorted_items() if p.dirty]
    return dirty, True


def crash_choices(state: SystemState, writeback: bool = True) -> list[tuple[CrashChoice, MediaState]]:
    """Every media state power loss could leave behind, with the choice producing it.

    Controller-cache writes of the current epoch land in any subset (earlier
    epochs are already on media). With ``writeback`` the kernel may also have
    written back dirty pages and committed the running transaction before the
    crash; a background commit drains the cache first (pre-flush) and, in
    data=ordered, requires the data of every block it allocates.
    """
    volatile = state.device.volatile
    cache_addrs = [a for a, _ in state.cache.sorted_items()]
    if state.device.plp:
        base = state.media.write_blocks({a: w.payload for a, w in state.cache.sorted_items()})
        cache_subsets = [frozenset(cache_addrs)]
    elif volatile:
        base = state.media
        cache_subsets = [
            frozenset(c) for r in range(len(cache_addrs) + 1) for c in itertools.combinations(cache_addrs, r)
        ]
    else:
        base = state.media
        cache_subsets = [frozenset()]
    dirty, can_commit = _background_units(state) if writeback else ([], False)
    mode = state.mode

    out: dict[MediaState, CrashChoice] = {}
    page_options = []
    for key in dirty:
        if mode is JournalMode.JOURNAL:
            page_options.append([None])
        elif key in state.mem_alloc:
            page_options.append([None, "persisted"])
        else:
            page_options.append([None, "submitted", "persisted", "late"])

    for cache_sel in cache_subsets:
        for page_sel in itertools.product(*page_options):
            chosen = tuple((k, how) for k, how in zip(dirty, page_sel) if how is not None)
            commits = [False]
            if can_commit:
                commits.append(True)
            for commit in commits:
                choice = CrashChoice(cache_sel, chosen, commit)
                media = _apply_choice(state, base, choice)
                if media is None:
                    continue
                prev = out.get(media)
                if prev is None or choice.sort_key() < prev.sort_key():
                    out[media] = choice
    return sorted(((c, m) for m, c in out.items()), key=lambda cm: cm[0].sort_key())


def _apply_choice(state: SystemState, base: MediaState, choice: CrashChoice) -> MediaState | None:
    mode = state.mode
    blocks = {}
    if choice.commit and state.device.volatile and choice.cache != frozenset(state.cache):
        return None  # the commit's pre-flush drains the whole cache
    for addr in sorted(choice.cache, key=repr):
        blocks[addr] = state.cache[addr].payload
    txn = state.running
    for key, how in choice.pages:
        page = state.pages[key]
        if how == "late":
            if not choice.commit:
                return None  # same media as "persisted" without a commit
            blocks[("data",) + key] = page.version
            continue
        if key not in state.mem_alloc:
            txn = txn.add_op(MetaOp("alloc", key[0], index=key[1]))
        if how == "persisted":
            blocks[("data",) + key] = page.version
        elif mode is JournalMode.ORDERED and choice.commit:
            return None  # ordered: commit record never precedes the data it allocates
    if choice.commit:
        if mode is JournalMode.JOURNAL:
            for key, page in state.pages.sorted_items():
                if page.dirty:
                    if key not in state.mem_alloc:
                        txn = txn.add_op(MetaOp("alloc", key[0], index=key[1]))
                    txn = txn.add_data(key[0], key[1], page.version)
        if not txn:
            return None
        txn = dataclasses.replace(txn, phase=TxnPhase.COMMIT_RECORD_WRITTEN)
        blocks[("jdesc", txn.seq)] = txn
        blocks[("jcommit", txn.seq)] = txn.seq
    return base.write_blocks(blocks)


def crash_states(state: SystemState, writeback: bool = True) -> set[MediaState]:
    return {m for _, m in crash_choices(state, writeback)}


# -- recovery ----------------------------------------------------------------


def recover(media: MediaState, state: SystemState) -> SystemState:
    """Replay committed journal transactions and boot a fresh state on the result.

    ``state`` supplies configuration (profile, device) and the inode counter;
    none of its volatile layers survive. Inconsistencies are reported in
    ``recovery_flags`` and never repaired.
    """
    ns = media.namespace.thaw()
    extents = set(media.extents)
    bitmap = set(media.bitmap)
    data = {(a[1], a[2]): v for a, v in media.blocks.items() if a[0] == "data"}
    flags = []
    txns = committed_txns(media)
    for txn in txns:
        apply_txn(ns, extents, bitmap, data, txn)
        if state.mode is JournalMode.ORDERED:
            for inode, index in sorted(txn.allocs()):
                if data.get((inode, index), 0) == 0:
                    flags.append(f"ordered: txn {txn.seq} allocates ino {inode}[{index}] but its data is absent")
    for inode, index in sorted(extents - bitmap):
        flags.append(f"ino {inode} references block [{index}] not marked allocated")
    for path, inode in sorted(ns.items()):
        if inode >= state.next_inode:
            flags.append(f"{path} references unknown inode {inode}")
    last_seq = txns[-1].seq if txns else media.checkpoint_seq
    blocks = {("data",) + k: v for k, v in data.items()}
    recovered = MediaState(
        namespace=FrozenMap(ns),
        extents=frozenset(extents),
        bitmap=frozenset(bitmap),
        blocks=FrozenMap(blocks),
        checkpoint_seq=last_seq,
    )
    app = FrozenMap({k: data.get(k, 0) for k in sorted(extents)})
    dirs = set(state.dirs)
    return SystemState(
        profile=state.profile,
        device=state.device,
        app=app,
        namespace=recovered.namespace,
        dirs=frozenset(dirs),
        mem_alloc=recovered.extents,
        running=JournalTxn(seq=last_seq + 1, mode=state.mode),
        media=recovered,
        epoch=0,
        next_inode=state.next_inode,
        recovery_flags=tuple(flags),
    )
