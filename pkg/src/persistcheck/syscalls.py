"""Application-visible syscalls over the layer state machine.

Every syscall takes a state and returns ``(state, code)`` with the result
appended to the observable trace. Fault decisions come from a
:class:`~persistcheck.faults.FaultContext`; without one nothing fails.

fsync follows the ext4 shape: write back the file's dirty pages (clearing
the dirty bit at submission), return the pending writeback error if any
page failed, then commit the running journal transaction (journal blocks,
pre-flush, commit record with FUA or a trailing flush). With nothing to
commit it issues a plain cache flush instead.
"""

from __future__ import annotations

import dataclasses
import posixpath
from dataclasses import dataclass
from enum import Enum

from ._frozen import FrozenMap
from .device import BlockWrite, DeviceConfig, issue_flush, submit_write
from .errors import ConfigError
from .faults import FaultContext, FaultPoint, context
from .state import (
    ROOT,
    Health,
    JournalMode,
    JournalTxn,
    LayerId,
    MediaState,
    MetaOp,
    Page,
    SystemState,
    TxnPhase,
    memory_read,
)


class Errno(str, Enum):
    OK = "ok"
    EIO = "EIO"
    EROFS = "EROFS"
    ENOENT = "ENOENT"
    EEXIST = "EEXIST"


@dataclass(frozen=True)
class FsProfile:
    name: str
    journal_mode: JournalMode
    clears_dirty_on_submit: bool = True
    restores_dirty_on_failure: bool = False
    reverts_content_on_failure: bool = False
    retries_metadata: bool = False
    error_flag_cleared_after_first_report: bool = True

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["journal_mode"] = self.journal_mode.value
        return d


PROFILES: dict[str, FsProfile] = {
    "ext4-ordered": FsProfile("ext4-ordered", JournalMode.ORDERED),
    "ext4-writeback": FsProfile("ext4-writeback", JournalMode.WRITEBACK),
    "ext4-journal": FsProfile("ext4-journal", JournalMode.JOURNAL),
    "xfs": FsProfile("xfs", JournalMode.ORDERED, retries_metadata=True),
    "btrfs": FsProfile("btrfs", JournalMode.ORDERED, reverts_content_on_failure=True),
}


def get_profile(name: str, journal_mode: str | JournalMode | None = None, **overrides) -> FsProfile:
    try:
        profile = PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; expected one of {sorted(PROFILES)}") from None
    if journal_mode is not None:
        overrides["journal_mode"] = JournalMode(journal_mode)
    fields = {f.name for f in dataclasses.fields(FsProfile)} - {"name"}
    unknown = set(overrides) - fields
    if unknown:
        raise ConfigError(f"unknown profile fields {sorted(unknown)}")
    return dataclasses.replace(profile, **overrides) if overrides else profile


def initial_state(
    profile: FsProfile | str = "ext4-ordered",
    device: DeviceConfig | None = None,
    files: dict[str, dict[int, int]] | None = None,
    dirs=(),
) -> SystemState:
    """Boot a clean filesystem.

    ``files`` maps path -> {page index: version already on media}; each listed
    page is allocated. Inodes are numbered from 2 in path order.
    """
    if isinstance(profile, str):
        profile = get_profile(profile)
    device = device or DeviceConfig()
    files = files or {}
    all_dirs = {ROOT} | {d.rstrip("/") or ROOT for d in dirs}
    ns, extents, blocks, app = {}, set(), {}, {}
    inode = 2
    for path in sorted(files):
        parent = posixpath.dirname(path)
        while parent not in all_dirs:
            all_dirs.add(parent)
            parent = posixpath.dirname(parent)
        ns[path] = inode
        for index, version in sorted(files[path].items()):
            key = (inode, int(index))
            extents.add(key)
            app[key] = int(version)
            if version:
                blocks[("data",) + key] = int(version)
        inode += 1
    media = MediaState(
        namespace=FrozenMap(ns),
        extents=frozenset(extents),
        bitmap=frozenset(extents),
        blocks=FrozenMap(blocks),
    )
    return SystemState(
        profile=profile,
        device=device,
        app=FrozenMap(app),
        namespace=media.namespace,
        dirs=frozenset(all_dirs),
        mem_alloc=media.extents,
        running=JournalTxn(seq=1, mode=profile.journal_mode),
        media=media,
        next_inode=inode,
    )


# -- helpers -----------------------------------------------------------------


def _ret(state: SystemState, name: str, code: Errno) -> tuple[SystemState, Errno]:
    return dataclasses.replace(state, trace=state.trace + ((name, code.value),)), code


def _with_op(state: SystemState, op: MetaOp) -> SystemState:
    return dataclasses.replace(state, running=state.running.add_op(op))


def _on_device(state: SystemState, addr) -> object:
    w = state.cache.get(addr)
    if w is not None:
        return w.payload
    return state.media.blocks.get(addr)


def _device_write(state: SystemState, write: BlockWrite, ctx: FaultContext) -> SystemState:
    # passes through the block layer queue on its way to the device
    state = dataclasses.replace(state, block_queue=state.block_queue + (write,))
    ctx.log(LayerId.BlockLayer, f"queue {_addr(write.addr)}{' FUA' if write.fua else ''}", state)
    state = dataclasses.replace(state, block_queue=state.block_queue[:-1])
    state = submit_write(state, write)
    where = "controller cache" if write.addr in state.cache else "media"
    layer = LayerId.PersistentMedia if where == "media" else LayerId.ControllerCache
    ctx.log(layer, f"complete {_addr(write.addr)} -> {where}", state)
    return state


def _addr(addr) -> str:
    if addr[0] == "data":
        return f"data ino {addr[1]}[{addr[2]}]"
    return f"{addr[0]} #{addr[1]}"


def _writeback_page(state: SystemState, key, ctx: FaultContext, fua: bool = False) -> tuple[SystemState, bool]:
    """Submit one dirty page. Returns (state, ok)."""
    profile = state.profile
    page = state.pages[key]
    inode, index = key
    submitted = dataclasses.replace(page, submitted=True, dirty=not profile.clears_dirty_on_submit)
    state = dataclasses.replace(state, pages=state.pages.set(key, submitted))
    ctx.log(LayerId.PageCache, f"submit ino {inode}[{index}] v{page.version}; dirty={submitted.dirty}", state)
    if key not in state.mem_alloc:
        # delayed allocation: the block is chosen now, journaled with the running txn
        state = dataclasses.replace(state, mem_alloc=state.mem_alloc | {key})
        state = _with_op(state, MetaOp("alloc", inode, index=index))
        ctx.log(LayerId.FilesystemJournal, f"allocate block for ino {inode}[{index}]", state)
    if state.mode is JournalMode.JOURNAL:
        state = dataclasses.replace(state, running=state.running.add_data(inode, index, page.version))
        state = dataclasses.replace(state, pages=state.pages.set(key, dataclasses.replace(submitted, dirty=False)))
        ctx.log(LayerId.FilesystemJournal, f"journal data ino {inode}[{index}] v{page.version}", state)
        return state, True
    if ctx.decide(FaultPoint.F1, f"write ino {inode}[{index}] v{page.version}", state):
        after = submitted
        if profile.restores_dirty_on_failure:
            after = dataclasses.replace(after, dirty=True)
        if profile.reverts_content_on_failure:
            on_disk = _on_device(state, ("data", inode, index)) or 0
            after = dataclasses.replace(after, version=on_disk, dirty=False)
        state = dataclasses.replace(
            state, pages=state.pages.set(key, after), error_flags=state.error_flags | {inode}
        )
        ctx.log(LayerId.PageCache, f"write dropped; page v{after.version} dirty={after.dirty}; error flag set", state)
        return state, False
    state = _device_write(state, BlockWrite(("data", inode, index), page.version, fua=fua), ctx)
    if not profile.clears_dirty_on_submit:
        current = state.pages[key]
        if current.version == page.version:
            state = dataclasses.replace(state, pages=state.pages.set(key, dataclasses.replace(current, dirty=False)))
    return state, True


def _abort(state: SystemState, ctx: FaultContext, why: str) -> SystemState:
    state = dataclasses.replace(
        state,
        health=Health.ABORTED,
        running=JournalTxn(seq=state.running.seq + 1, mode=state.mode),
    )
    ctx.log(LayerId.FilesystemJournal, f"journal aborted ({why}); read-only", state)
    return state


def _journal_write(state: SystemState, ctx: FaultContext, label: str) -> bool:
    """Fault decision for one journal block write. True when the write failed for good."""
    if not ctx.decide(FaultPoint.F2, label, state):
        return False
    if state.profile.retries_metadata:
        ctx.log(LayerId.FilesystemJournal, f"metadata write re-queued: {label}", state)
        return ctx.decide(FaultPoint.F2, f"{label} (retry)", state)
    return True


def _commit(state: SystemState, ctx: FaultContext) -> tuple[SystemState, bool]:
    """Commit the running transaction. Returns (state, ok)."""
    if state.mode is JournalMode.JOURNAL:
        for key, page in state.pages.sorted_items():
            if page.dirty:
                state, _ = _writeback_page(state, key, ctx)
    txn = dataclasses.replace(state.running, phase=TxnPhase.LOGGED)
    seq = txn.seq
    if _journal_write(state, ctx, f"journal blocks txn {seq}"):
        return _abort(state, ctx, "journal block write failed"), False
    state = _device_write(state, BlockWrite(("jdesc", seq), txn), ctx)
    state = dataclasses.replace(state, journal=state.journal + (txn,), running=JournalTxn(seq=seq + 1, mode=state.mode))
    if ctx.decide(FaultPoint.F3, f"pre-flush before commit record txn {seq}", state):
        return _abort(state, ctx, "pre-flush failed"), False
    state, _ = issue_flush(state)
    ctx.log(LayerId.ControllerCache, f"flush (epoch {state.epoch})", state)
    if _journal_write(state, ctx, f"commit record txn {seq}"):
        return _abort(state, ctx, "commit record write failed"), False
    fua = state.device.fua_supported
    state = _device_write(state, BlockWrite(("jcommit", seq), seq, fua=fua), ctx)
    done = dataclasses.replace(txn, phase=TxnPhase.COMMIT_RECORD_WRITTEN)
    state = dataclasses.replace(state, journal=state.journal[:-1] + (done,))
    if not fua:
        state, ok = _flush(state, ctx, f"flush after commit record txn {seq}")
        if not ok:
            return state, False
    return state, True


def _flush(state: SystemState, ctx: FaultContext, label: str) -> tuple[SystemState, bool]:
    if ctx.decide(FaultPoint.F3, label, state):
        ctx.log(LayerId.BlockLayer, "flush failed; cache unchanged", state)
        return state, False
    state, ok = issue_flush(state)
    ctx.log(LayerId.ControllerCache, f"flush (epoch {state.epoch})", state)
    return state, ok


def _step(ctx: FaultContext, state: SystemState, name: str, detail: str) -> None:
    ctx.log(LayerId.Application, f"{name} {detail}", state)


def _readonly(state: SystemState, name: str) -> tuple[SystemState, Errno] | None:
    if state.health is Health.ABORTED:
        return _ret(state, name, Errno.EROFS)
    return None


# -- syscalls ----------------------------------------------------------------


def sys_write(
    state: SystemState,
    path: str,
    index: int = 0,
    version: int | None = None,
    sync: bool = False,
    ctx: FaultContext | None = None,
) -> tuple[SystemState, Errno]:
    """Buffered write of the next version of one page.

    With ``sync`` the page is written through immediately (FUA when the
    device supports it, else write + flush), O_DSYNC style: the running
    transaction is committed only when the write had to allocate a block.
    """
    ctx = context(ctx)
    _step(ctx, state, "write", f"{path}[{index}]")
    if (r := _readonly(state, "write")) is not None:
        return r
    inode = state.namespace.get(path)
    if inode is None:
        return _ret(state, "write", Errno.ENOENT)
    key = (inode, index)
    latest = state.app.get(key, 0)
    if version is None:
        version = latest + 1
    elif version <= latest:
        raise ConfigError(f"version v{version} for {path}[{index}] is not newer than v{latest}")
    state = dataclasses.replace(
        state,
        app=state.app.set(key, version),
        pages=state.pages.set(key, Page(inode, index, version, dirty=True)),
    )
    state = _with_op(state, MetaOp("inode", inode))
    ctx.log(LayerId.PageCache, f"page ino {inode}[{index}] <- v{version} (dirty, no block yet)"
            if key not in state.mem_alloc else f"page ino {inode}[{index}] <- v{version} (dirty)", state)
    if not sync:
        return _ret(state, "write", Errno.OK)
    needs_commit = key not in state.mem_alloc or state.mode is JournalMode.JOURNAL
    fua = state.device.fua_supported and not needs_commit
    state, ok = _writeback_page(state, key, ctx, fua=fua)
    if not ok or inode in state.error_flags:
        state = dataclasses.replace(state, error_flags=state.error_flags - {inode})
        return _ret(state, "write", Errno.EIO)
    if needs_commit:
        state, ok = _commit(state, ctx)
    elif not fua:
        state, ok = _flush(state, ctx, "flush after O_DSYNC write")
    return _ret(state, "write", Errno.OK if ok else Errno.EIO)


def sys_fsync(state: SystemState, path: str, ctx: FaultContext | None = None) -> tuple[SystemState, Errno]:
    ctx = context(ctx)
    _step(ctx, state, "fsync", path)
    if (r := _readonly(state, "fsync")) is not None:
        return r
    inode = state.namespace.get(path)
    if inode is None:
        return _ret(state, "fsync", Errno.ENOENT)
    if state.mode is not JournalMode.JOURNAL:
        for key, page in state.pages.sorted_items():
            if key[0] == inode and page.dirty:
                state, _ = _writeback_page(state, key, ctx)
    if inode in state.error_flags:
        flags = state.error_flags
        if state.profile.error_flag_cleared_after_first_report:
            flags = flags - {inode}
        state = dataclasses.replace(state, error_flags=flags)
        ctx.log(LayerId.PageCache, f"report writeback error for ino {inode}; flag cleared", state)
        return _ret(state, "fsync", Errno.EIO)
    if state.running or (state.mode is JournalMode.JOURNAL and _has_dirty(state)):
        state, ok = _commit(state, ctx)
    else:
        state, ok = _flush(state, ctx, "flush (nothing to commit)")
    return _ret(state, "fsync", Errno.OK if ok else Errno.EIO)


def sys_fsync_retry(state: SystemState, path: str, ctx: FaultContext | None = None) -> tuple[SystemState, Errno]:
    """fsync issued again after a failed fsync; identical semantics, named for clarity."""
    return sys_fsync(state, path, ctx)


def _has_dirty(state: SystemState) -> bool:
    return any(p.dirty for p in state.pages.values())


def sys_fsync_dir(state: SystemState, path: str, ctx: FaultContext | None = None) -> tuple[SystemState, Errno]:
    ctx = context(ctx)
    _step(ctx, state, "fsync_dir", path)
    if (r := _readonly(state, "fsync_dir")) is not None:
        return r
    path = path.rstrip("/") or ROOT
    if path not in state.dirs:
        return _ret(state, "fsync_dir", Errno.ENOENT)
    if not state.running:
        return _ret(state, "fsync_dir", Errno.OK)
    state, ok = _commit(state, ctx)
    return _ret(state, "fsync_dir", Errno.OK if ok else Errno.EIO)


def sys_rename(state: SystemState, src: str, dst: str, ctx: FaultContext | None = None) -> tuple[SystemState, Errno]:
    ctx = context(ctx)
    _step(ctx, state, "rename", f"{src} -> {dst}")
    if (r := _readonly(state, "rename")) is not None:
        return r
    inode = state.namespace.get(src)
    if inode is None or posixpath.dirname(dst) not in state.dirs:
        return _ret(state, "rename", Errno.ENOENT)
    ns = state.namespace.delete(src).set(dst, inode)
    state = dataclasses.replace(state, namespace=ns)
    state = _with_op(state, MetaOp("rename", inode, path=src, dest=dst))
    ctx.log(LayerId.PageCache, f"namespace {dst} -> ino {inode} (txn {state.running.seq} open)", state)
    return _ret(state, "rename", Errno.OK)


def sys_create(
    state: SystemState, path: str, exclusive: bool = True, ctx: FaultContext | None = None
) -> tuple[SystemState, Errno]:
    ctx = context(ctx)
    _step(ctx, state, "create", path)
    if (r := _readonly(state, "create")) is not None:
        return r
    if posixpath.dirname(path) not in state.dirs:
        return _ret(state, "create", Errno.ENOENT)
    if path in state.namespace:
        return _ret(state, "create", Errno.EEXIST if exclusive else Errno.OK)
    inode = state.next_inode
    state = dataclasses.replace(state, namespace=state.namespace.set(path, inode), next_inode=inode + 1)
    state = _with_op(state, MetaOp("create", inode, path=path))
    ctx.log(LayerId.PageCache, f"namespace {path} -> ino {inode} (txn {state.running.seq} open)", state)
    return _ret(state, "create", Errno.OK)


def sys_unlink(state: SystemState, path: str, ctx: FaultContext | None = None) -> tuple[SystemState, Errno]:
    ctx = context(ctx)
    _step(ctx, state, "unlink", path)
    if (r := _readonly(state, "unlink")) is not None:
        return r
    inode = state.namespace.get(path)
    if inode is None:
        return _ret(state, "unlink", Errno.ENOENT)
    state = dataclasses.replace(state, namespace=state.namespace.delete(path))
    state = _with_op(state, MetaOp("unlink", inode, path=path))
    ctx.log(LayerId.PageCache, f"namespace {path} unbound; ino {inode} retained", state)
    return _ret(state, "unlink", Errno.OK)


def sys_read(state: SystemState, path: str, index: int = 0) -> int | None:
    """Version an application read would return, or None if ``path`` is unbound."""
    inode = state.namespace.get(path)
    if inode is None:
        return None
    return memory_read(state, inode, index)
