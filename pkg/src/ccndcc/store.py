"""Content Store with pluggable replacement."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .core import ChunkId

POLICIES = ("priority-lru", "lru", "lfu", "random")


@dataclass
class Entry:
    payload: bytes | None
    popularity: int
    last_used: int
    inserted: int
    uses: int = 1


class ContentStore:
    """Bounded store of uncoded chunks.

    ``priority-lru`` evicts the least recently used chunk of the least popular
    level present (highest level index); ``lru``, ``lfu`` and ``random``
    ignore popularity.
    """

    def __init__(self, capacity: int, policy: str = "priority-lru", seed: int = 0):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        if policy not in POLICIES:
            raise ValueError(f"unknown replacement policy {policy!r}")
        self.capacity = capacity
        self.policy = policy
        self.entries: dict[ChunkId, Entry] = {}
        # recency order per popularity level (priority-lru) or overall (others)
        self._order: dict[int, OrderedDict] = {}
        self._rng = np.random.default_rng([seed, 5])
        self._tick = 0
        self.evictions: list[ChunkId] = []

    def __len__(self):
        return len(self.entries)

    def __contains__(self, chunk):
        return chunk in self.entries

    def _bucket(self, popularity: int) -> OrderedDict:
        key = popularity if self.policy == "priority-lru" else 0
        return self._order.setdefault(key, OrderedDict())

    def _stamp(self) -> int:
        self._tick += 1
        return self._tick

    def touch(self, chunk: ChunkId) -> bool:
        """Record a hit; return whether the chunk is stored."""
        e = self.entries.get(chunk)
        if e is None:
            return False
        e.last_used = self._stamp()
        e.uses += 1
        self._bucket(e.popularity).move_to_end(chunk)
        return True

    def get(self, chunk: ChunkId) -> bytes | None:
        return self.entries[chunk].payload

    def insert(self, chunk: ChunkId, popularity: int, payload: bytes | None = None) -> list[ChunkId]:
        """Store ``chunk``; return the chunks evicted to make room."""
        if chunk in self.entries:
            self.touch(chunk)
            return []
        if self.capacity == 0:
            return []
        evicted = []
        while len(self.entries) >= self.capacity:
            victim = self._victim()
            self._remove(victim)
            evicted.append(victim)
        now = self._stamp()
        self.entries[chunk] = Entry(payload, popularity, now, now)
        self._bucket(popularity)[chunk] = None
        self.evictions.extend(evicted)
        return evicted

    def _remove(self, chunk: ChunkId) -> None:
        e = self.entries.pop(chunk)
        self._bucket(e.popularity).pop(chunk)

    def _victim(self) -> ChunkId:
        if self.policy == "priority-lru":
            level = max(k for k, b in self._order.items() if b)
            return next(iter(self._order[level]))
        if self.policy == "lru":
            return next(iter(self._order[0]))
        if self.policy == "lfu":
            return min(self.entries, key=lambda c: (self.entries[c].uses,
                                                    self.entries[c].last_used,
                                                    self.entries[c].inserted))
        keys = list(self._order[0])
        return keys[int(self._rng.integers(len(keys)))]
