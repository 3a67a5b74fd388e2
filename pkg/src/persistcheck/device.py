"""Block layer, NVMe controller cache and media.

Device writes are addressed by tuples:

* ``("data", inode, index)`` carries a content version,
* ``("jdesc", seq)`` carries a :class:`~persistcheck.state.JournalTxn`,
* ``("jcommit", seq)`` carries the commit record for that transaction.

A write either lands on media at completion (FUA, no enabled volatile cache,
or power-loss protection) or sits in the controller cache until a flush.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Any

from ._frozen import EMPTY
from .errors import ConfigError


@dataclass(frozen=True)
class DeviceConfig:
    volatile_cache_present: bool = True
    volatile_cache_enabled: bool = True
    fua_supported: bool = True
    plp: bool = False

    def __post_init__(self) -> None:
        if self.volatile_cache_enabled and not self.volatile_cache_present:
            raise ConfigError("volatile_cache_enabled requires volatile_cache_present")

    @property
    def volatile(self) -> bool:
        """True when completed-but-unflushed writes can be lost at power failure."""
        return self.volatile_cache_present and self.volatile_cache_enabled and not self.plp

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class BlockWrite:
    addr: tuple
    payload: Any
    fua: bool = False
    epoch: int = 0


class Query(str, Enum):
    Q1 = "Q1"  # volatile write cache present
    Q2 = "Q2"  # volatile write caching enabled
    Q3 = "Q3"  # FUA supported by the stack
    Q4 = "Q4"  # fsync failure leaves a well-defined epistemic state


def submit_write(state, write: BlockWrite):
    """Complete ``write`` at the device and return the new state."""
    device: DeviceConfig = state.device
    if write.fua and not device.fua_supported:
        raise ConfigError(f"FUA write to {write.addr} on a device without FUA support")
    write = dataclasses.replace(write, epoch=state.epoch)
    media = state.media
    cache = state.cache
    if write.fua or not device.volatile:
        # a FUA write also supersedes any stale cached copy of the same block
        media = media.write_blocks({write.addr: write.payload})
        cache = cache.delete(write.addr)
    else:
        cache = cache.set(write.addr, write)
    return dataclasses.replace(state, media=media, cache=cache)


def issue_flush(state, fail: bool = False):
    """Flush the controller cache. Returns ``(state, ok)``.

    A flush with nothing volatile to drain succeeds without touching any
    layer; the barrier epoch still advances. A failed flush leaves the cache
    and the epoch untouched.
    """
    if fail:
        return state, False
    if state.device.volatile and state.cache:
        media = state.media.write_blocks({a: w.payload for a, w in state.cache.sorted_items()})
        return dataclasses.replace(state, media=media, cache=EMPTY, epoch=state.epoch + 1), True
    return dataclasses.replace(state, epoch=state.epoch + 1), True


def power_loss(state):
    """Media contents after losing power with no in-flight write landing."""
    if state.device.plp and state.cache:
        return state.media.write_blocks({a: w.payload for a, w in state.cache.sorted_items()})
    return state.media


def verify_q(state, which: Query | str, bounds=None) -> bool:
    """Answer one of the four device-verification questions.

    Q1 to Q3 read the configuration. Q4 runs the commit-boundary check on a
    write+fsync workload with failures injected and answers whether every
    observable fsync outcome maps to a single durability verdict.
    """
    which = Query(which)
    device: DeviceConfig = state.device
    if which is Query.Q1:
        return device.volatile_cache_present
    if which is Query.Q2:
        return device.volatile_cache_enabled
    if which is Query.Q3:
        return device.fua_supported
    from .checker import q4_well_defined

    return q4_well_defined(state, bounds)
