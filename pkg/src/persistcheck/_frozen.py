"""Small immutable mapping used for hashable state snapshots."""

from __future__ import annotations

from collections.abc import Iterator, Mapping
from typing import Any, TypeVar

K = TypeVar("K")
V = TypeVar("V")


class FrozenMap(Mapping):
    """Hashable read-only dict. Updates return new instances."""

    __slots__ = ("_d", "_h")

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        self._d = dict(*args, **kwargs)
        self._h: int | None = None

    def __getitem__(self, key):
        return self._d[key]

    def __iter__(self) -> Iterator:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __hash__(self) -> int:
        if self._h is None:
            self._h = hash(frozenset(self._d.items()))
        return self._h

    def __repr__(self) -> str:
        return f"FrozenMap({dict(sorted(self._d.items(), key=repr))!r})"

    def set(self, key, value) -> "FrozenMap":
        d = dict(self._d)
        d[key] = value
        return FrozenMap(d)

    def update(self, other: Mapping) -> "FrozenMap":
        if not other:
            return self
        d = dict(self._d)
        d.update(other)
        return FrozenMap(d)

    def delete(self, key) -> "FrozenMap":
        if key not in self._d:
            return self
        d = dict(self._d)
        del d[key]
        return FrozenMap(d)

    def thaw(self) -> dict:
        return dict(self._d)

    def sorted_items(self) -> list:
        try:
            return sorted(self._d.items())
        except TypeError:
            return sorted(self._d.items(), key=lambda kv: repr(kv[0]))


EMPTY = FrozenMap()
