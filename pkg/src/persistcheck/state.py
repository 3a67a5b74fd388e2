"""Six-layer persistence state machine and the durability predicate.

A :class:`SystemState` is an immutable snapshot of every layer between the
application and persistent media. Contents are symbolic version numbers per
``(inode, page index)``: version 0 is whatever was on media initially, and each
application write to a page issues the next version.

A write-set member is *committed at a layer* when its effect has propagated
strictly below that layer (or, for the media layer itself, is on media).
``durable`` is the conjunction over all six layers.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import TYPE_CHECKING, Iterable, NamedTuple, Union

from ._frozen import EMPTY, FrozenMap
from .device import BlockWrite, DeviceConfig
from .errors import ConfigError

if TYPE_CHECKING:
    from .syscalls import FsProfile

ROOT = "/"


class LayerId(IntEnum):
    """Causal layers, ordered from the application down to media."""

    Application = 0
    PageCache = 1
    FilesystemJournal = 2
    BlockLayer = 3
    ControllerCache = 4
    PersistentMedia = 5


class JournalMode(str, Enum):
    JOURNAL = "data=journal"
    ORDERED = "data=ordered"
    WRITEBACK = "data=writeback"


class TxnPhase(IntEnum):
    OPEN = 0
    LOGGED = 1
    COMMIT_RECORD_WRITTEN = 2
    CHECKPOINTED = 3


class Health(str, Enum):
    NORMAL = "normal"
    ABORTED = "aborted-read-only"


@dataclass(frozen=True)
class Page:
    file: int
    index: int
    version: int
    dirty: bool = False
    submitted: bool = False


class MetaOp(NamedTuple):
    """One journaled metadata operation.

    kind is one of ``create``, ``unlink``, ``rename``, ``alloc``, ``inode``.
    """

    kind: str
    inode: int
    path: str | None = None
    dest: str | None = None
    index: int | None = None

    def describe(self) -> str:
        if self.kind == "rename":
            return f"rename {self.path} -> {self.dest} (ino {self.inode})"
        if self.kind == "alloc":
            return f"alloc ino {self.inode}[{self.index}]"
        if self.kind == "inode":
            return f"inode update ino {self.inode}"
        return f"{self.kind} {self.path} (ino {self.inode})"


@dataclass(frozen=True)
class JournalTxn:
    seq: int
    ops: tuple[MetaOp, ...] = ()
    data: tuple[tuple[int, int, int], ...] = ()  # (inode, index, version), data=journal only
    phase: TxnPhase = TxnPhase.OPEN
    mode: JournalMode = JournalMode.ORDERED

    def __bool__(self) -> bool:  # an empty running transaction has nothing to commit
        return bool(self.ops or self.data)

    def add_op(self, op: MetaOp) -> "JournalTxn":
        if op in self.ops:
            return self
        return dataclasses.replace(self, ops=self.ops + (op,))

    def add_data(self, inode: int, index: int, version: int) -> "JournalTxn":
        kept = tuple(d for d in self.data if d[:2] != (inode, index))
        return dataclasses.replace(self, data=kept + ((inode, index, version),))

    def allocs(self) -> set[tuple[int, int]]:
        return {(op.inode, op.index) for op in self.ops if op.kind == "alloc"}


@dataclass(frozen=True)
class MediaState:
    """Persistent media: a checkpointed image plus raw device blocks.

    ``extents`` records which (inode, index) pages an inode maps, ``bitmap``
    which of them are marked allocated. Normal operation keeps the two equal;
    recovery flags any extent whose block is not in the bitmap.
    """

    namespace: FrozenMap = EMPTY
    extents: frozenset = frozenset()
    bitmap: frozenset = frozenset()
    blocks: FrozenMap = EMPTY
    checkpoint_seq: int = 0

    def write_blocks(self, blocks) -> "MediaState":
        return dataclasses.replace(self, blocks=self.blocks.update(blocks))

    def canonical(self) -> dict:
        return {
            "namespace": {p: i for p, i in self.namespace.sorted_items()},
            "extents": sorted(self.extents),
            "bitmap": sorted(self.bitmap),
            "blocks": [[_jsonable(a), _jsonable(v)] for a, v in self.blocks.sorted_items()],
            "checkpoint_seq": self.checkpoint_seq,
        }


@dataclass(frozen=True)
class SystemState:
    profile: "FsProfile"
    device: DeviceConfig
    # Application: latest version issued per (inode, index)
    app: FrozenMap = EMPTY
    # PageCache: pages plus the in-memory namespace and delayed-allocation map
    pages: FrozenMap = EMPTY
    namespace: FrozenMap = EMPTY
    dirs: frozenset = frozenset({ROOT})
    mem_alloc: frozenset = frozenset()
    # FilesystemJournal
    running: JournalTxn = field(default_factory=lambda: JournalTxn(seq=1))
    journal: tuple[JournalTxn, ...] = ()
    # BlockLayer: writes handed to the block layer but not yet at the device
    block_queue: tuple[BlockWrite, ...] = ()
    # ControllerCache: completed writes held in the volatile cache, by address
    cache: FrozenMap = EMPTY
    # PersistentMedia
    media: MediaState = field(default_factory=MediaState)
    epoch: int = 0
    trace: tuple[tuple[str, str], ...] = ()
    health: Health = Health.NORMAL
    error_flags: frozenset = frozenset()
    next_inode: int = 2
    recovery_flags: tuple[str, ...] = ()

    @property
    def mode(self) -> JournalMode:
        return self.profile.journal_mode

    def inode_of(self, path: str) -> int | None:
        return self.namespace.get(path)


@dataclass(frozen=True)
class DataWrite:
    file: int
    index: int
    version: int

    def describe(self) -> str:
        return f"ino {self.file}[{self.index}]@v{self.version}"


@dataclass(frozen=True)
class NamespaceWrite:
    """Path bound to ``inode`` (or unbound when ``inode`` is None)."""

    path: str
    inode: int | None

    def describe(self) -> str:
        return f"{self.path}->{self.inode}"


WriteRef = Union[DataWrite, NamespaceWrite]


# -- views -------------------------------------------------------------------


@dataclass(frozen=True)
class View:
    namespace: FrozenMap
    extents: frozenset
    bitmap: frozenset
    data: FrozenMap
    replayed: tuple[int, ...] = ()

    def read(self, inode: int, index: int) -> int:
        if (inode, index) not in self.extents:
            return 0
        return self.data.get((inode, index), 0)


def apply_txn(ns: dict, extents: set, bitmap: set, data: dict, txn: JournalTxn) -> None:
    for op in txn.ops:
        if op.kind == "create":
            ns[op.path] = op.inode
        elif op.kind == "unlink":
            if ns.get(op.path) == op.inode:
                del ns[op.path]
        elif op.kind == "rename":
            if ns.get(op.path) == op.inode:
                del ns[op.path]
            ns[op.dest] = op.inode
        elif op.kind == "alloc":
            extents.add((op.inode, op.index))
            bitmap.add((op.inode, op.index))
    for inode, index, version in txn.data:
        data[(inode, index)] = version


def committed_txns(media: MediaState, blocks=None) -> list[JournalTxn]:
    """Transactions replayable from ``blocks``: contiguous seqs with a commit record."""
    blocks = media.blocks if blocks is None else blocks
    out = []
    seq = media.checkpoint_seq + 1
    while ("jdesc", seq) in blocks and ("jcommit", seq) in blocks:
        out.append(blocks[("jdesc", seq)])
        seq += 1
    return out


def materialize(media: MediaState, overlay=None, pending: Iterable[JournalTxn] = ()) -> View:
    """Replay the journal found in ``media`` (plus ``overlay`` blocks) onto the checkpoint."""
    blocks = media.blocks.update(overlay) if overlay else media.blocks
    ns = media.namespace.thaw()
    extents = set(media.extents)
    bitmap = set(media.bitmap)
    data = {(a[1], a[2]): v for a, v in blocks.items() if a[0] == "data"}
    replayed = []
    for txn in committed_txns(media, blocks):
        apply_txn(ns, extents, bitmap, data, txn)
        replayed.append(txn.seq)
    for txn in pending:
        apply_txn(ns, extents, bitmap, data, txn)
    return View(FrozenMap(ns), frozenset(extents), frozenset(bitmap), FrozenMap(data), tuple(replayed))


def media_view(state: SystemState) -> View:
    return materialize(state.media)


def device_view(state: SystemState) -> View:
    return materialize(state.media, {a: w.payload for a, w in state.cache.items()})


def block_view(state: SystemState) -> View:
    overlay = {a: w.payload for a, w in state.cache.items()}
    overlay.update({w.addr: w.payload for w in state.block_queue})
    return materialize(state.media, overlay)


def journal_view(state: SystemState) -> View:
    overlay = {a: w.payload for a, w in state.cache.items()}
    overlay.update({w.addr: w.payload for w in state.block_queue})
    return materialize(state.media, overlay, pending=[state.running])


def memory_read(state: SystemState, inode: int, index: int) -> int:
    """Content an application read would observe for one page right now."""
    page = state.pages.get((inode, index))
    if page is not None:
        return page.version
    if (inode, index) not in state.mem_alloc:
        return 0
    return device_view(state).data.get((inode, index), 0)


def logical_view(state: SystemState) -> dict[str, tuple]:
    """What an application would see: path -> (inode, ((index, version), ...)).

    Pages reading as v0 are omitted so an unwritten page and a missing one
    compare equal.
    """
    indices: dict[int, set[int]] = {}
    for key in list(state.app) + list(state.pages) + list(state.mem_alloc):
        indices.setdefault(key[0], set()).add(key[1])
    view = {}
    for path, inode in state.namespace.sorted_items():
        content = tuple(
            (i, v) for i in sorted(indices.get(inode, ())) if (v := memory_read(state, inode, i))
        )
        view[path] = (inode, content)
    return view


# -- durability --------------------------------------------------------------


def _check_member(state: SystemState, w: WriteRef) -> None:
    if isinstance(w, DataWrite):
        issued = state.app.get((w.file, w.index), 0)
        if w.version < 0 or w.version > issued:
            raise ConfigError(f"write-set member {w.describe()} was never issued (latest v{issued})")
    elif isinstance(w, NamespaceWrite):
        if w.inode is not None and not (1 <= w.inode < state.next_inode):
            raise ConfigError(f"write-set member {w.describe()} names an unknown inode")
    else:
        raise ConfigError(f"unknown write-set member {w!r}")


def _satisfied(view: View, w: WriteRef) -> bool:
    if isinstance(w, DataWrite):
        if w.version == 0:
            return True
        return (w.file, w.index) in view.extents and view.data.get((w.file, w.index), 0) >= w.version
    return view.namespace.get(w.path) == w.inode


def _layer_views(state: SystemState):
    yield LayerId.PersistentMedia, media_view(state)
    yield LayerId.ControllerCache, device_view(state)
    yield LayerId.BlockLayer, block_view(state)
    yield LayerId.FilesystemJournal, journal_view(state)


def position(state: SystemState, w: WriteRef, strict: bool = True) -> LayerId:
    """Deepest layer that currently holds the effect of ``w``.

    ``strict`` rejects members the application never issued in ``state``;
    callers judging recovered states (whose application layer restarts from
    media) validate once against the pre-crash state and pass False.
    """
    if strict:
        _check_member(state, w)
    for layer, view in _layer_views(state):
        if _satisfied(view, w):
            return layer
    if isinstance(w, DataWrite):
        page = state.pages.get((w.file, w.index))
        if page is not None and page.version >= w.version:
            return LayerId.PageCache
    elif state.namespace.get(w.path) == w.inode:
        return LayerId.PageCache
    return LayerId.Application


def layer_committed(state: SystemState, layer: LayerId, writes: Iterable[WriteRef], strict: bool = True) -> bool:
    """True iff nothing of ``writes`` is still pending at ``layer``."""
    layer = LayerId(layer)
    for w in writes:
        pos = position(state, w, strict)
        if pos == LayerId.PersistentMedia:
            continue
        if pos <= layer:
            return False
    return True


def durable(state: SystemState, writes: Iterable[WriteRef], strict: bool = True) -> bool:
    writes = list(writes)
    return all(layer_committed(state, layer, writes, strict) for layer in LayerId)


def reachable_durable(state: SystemState, writes: Iterable[WriteRef], strict: bool = True) -> bool:
    """``durable`` plus: each written inode is reachable by some path on media."""
    writes = list(writes)
    if not durable(state, writes, strict):
        return False
    bound = set(media_view(state).namespace.values())
    return all(w.file in bound for w in writes if isinstance(w, DataWrite))


def observable_trace(state: SystemState) -> tuple[tuple[str, str], ...]:
    return state.trace


def pages_clean(state: SystemState, writes: Iterable[WriteRef]) -> bool:
    """Every data page of ``writes`` is resident and not dirty."""
    for w in writes:
        if isinstance(w, DataWrite):
            page = state.pages.get((w.file, w.index))
            if page is None or page.dirty:
                return False
    return True


# -- canonical forms ---------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, JournalTxn):
        return {
            "seq": obj.seq,
            "ops": [op.describe() for op in obj.ops],
            "data": [list(d) for d in obj.data],
            "phase": obj.phase.name,
        }
    if isinstance(obj, BlockWrite):
        return {"addr": _jsonable(obj.addr), "payload": _jsonable(obj.payload), "fua": obj.fua, "epoch": obj.epoch}
    if isinstance(obj, (tuple, list)):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, Page):
        return [obj.version, obj.dirty, obj.submitted]
    return obj


def layer_states(state: SystemState) -> dict:
    """Per-layer canonical content, used for digests and zero-delta checks."""
    return {
        LayerId.Application.name: [[list(k), v] for k, v in state.app.sorted_items()],
        LayerId.PageCache.name: {
            "pages": [[list(k), _jsonable(p)] for k, p in state.pages.sorted_items()],
            "namespace": [[p, i] for p, i in state.namespace.sorted_items()],
            "mem_alloc": sorted(state.mem_alloc),
        },
        LayerId.FilesystemJournal.name: {
            "running": _jsonable(state.running),
            "log": [_jsonable(t) for t in state.journal],
            "health": state.health.value,
        },
        LayerId.BlockLayer.name: [_jsonable(w) for w in state.block_queue],
        LayerId.ControllerCache.name: [_jsonable(w) for _, w in state.cache.sorted_items()],
        LayerId.PersistentMedia.name: state.media.canonical(),
    }


def digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def state_digest(state: SystemState) -> str:
    return digest(layer_states(state))
