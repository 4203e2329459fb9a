"""Interest and Data packets carrying coded-caching side information."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property, reduce

import numpy as np

from .core import ChunkId, xor_bytes

INTEREST = 0
DATA = 1


def xor_payload(a: bytes, b: bytes) -> bytes:
    """Bitwise XOR of two equal-length blocks."""
    return xor_bytes(a, b)


@dataclass(frozen=True)
class InterestPacket:
    """Request for the chunks of ``file`` the requester does not hold.

    ``caches`` are the edge caches the requester reads; ``request_id`` names
    the request for PIT bookkeeping downstream.
    """

    file: int
    popularity: int
    color: int
    s_cache: frozenset[int]
    s_new: frozenset[int] = frozenset()
    hop_limit: int = 16
    origin: int = -1
    created_at: int = 0
    request_id: int = -1
    caches: tuple[int, ...] = ()

    kind = INTEREST

    @property
    def names(self) -> tuple[int, ...]:
        return (self.file,)

    def known(self) -> frozenset[int]:
        return self.s_cache | self.s_new

    def forwarded(self, found: frozenset[int] = frozenset()) -> "InterestPacket":
        return replace(self, s_new=self.s_new | (found - self.s_cache), hop_limit=self.hop_limit - 1)


@dataclass(frozen=True)
class DataPacket:
    """One chunk, or the XOR of several chunks of different requests.

    ``targets[i]`` holds the request ids operand ``names[i]`` is meant for;
    an empty set marks an operand carried only as XOR side information on
    this branch.
    """

    names: tuple[ChunkId, ...]
    targets: tuple[frozenset[int], ...]
    popularity: int = 1
    color: int = 0
    s_cache: frozenset[int] = frozenset()
    s_new: frozenset[int] = frozenset()
    hop_limit: int = 16
    created_at: int = 0
    payload: bytes | None = None
    hops: int = 0

    kind = DATA

    def __post_init__(self):
        if not self.names:
            raise ValueError("data packet without names")
        if len(self.names) != len(self.targets):
            raise ValueError("names and targets differ in length")

    def evolve(self, **changes) -> "DataPacket":
        """Cheap copy with some fields changed (hot path; skips re-validation)."""
        if "targets" in changes and len(changes["targets"]) != len(self.names):
            raise ValueError("names and targets differ in length")
        state = dict(self.__dict__)
        state.pop("served", None)
        state.update(changes)
        out = object.__new__(DataPacket)
        out.__dict__.update(state)
        return out

    @property
    def coded(self) -> bool:
        return len(self.names) > 1

    @cached_property
    def served(self) -> frozenset[int]:
        out: frozenset = frozenset()
        for t in self.targets:
            out |= t
        return out

    @property
    def chunk_index(self) -> int:
        return self.names[0].index


def build_payload(names, payloads) -> bytes | None:
    if payloads is None:
        return None
    return reduce(xor_payload, (payloads(c) for c in names))


def dump(pkt) -> str:
    """One-line diagnostic form: kind, names, P, color, S_Cache, S_New, hop limit."""

    def ints(s):
        return "{" + ",".join(str(i) for i in sorted(s)) + "}"

    if pkt.kind == INTEREST:
        names = f"f{pkt.file}"
    else:
        names = "+".join(f"f{c.file}/{c.index}" for c in pkt.names)
    return (f"{pkt.kind} {names} P={pkt.popularity} color={pkt.color} "
            f"S_Cache={ints(pkt.s_cache)} S_New={ints(pkt.s_new)} hop={pkt.hop_limit}")


@dataclass
class PacketPayloads:
    """Deterministic pseudo-random chunk contents, for XOR checks."""

    size: int
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, chunk: ChunkId) -> bytes:
        got = self._cache.get(chunk)
        if got is None:
            rng = np.random.default_rng([self.seed, 99, chunk.file, chunk.index])
            got = rng.integers(0, 256, size=self.size, dtype=np.uint8).tobytes()
            self._cache[chunk] = got
        return got
