"""Origin server: FIFO queues per (level, cache group) and coded delivery."""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .core import CacheContents, ChunkId, PopularityLevel, User, assign_colors, delivery_schedule
from .packets import DataPacket, InterestPacket, build_payload


@dataclass
class Pending:
    interest: InterestPacket
    arrived: int


class FifoQueue:
    """A FIFO that can only be consumed from the head; keeps a removal log."""

    def __init__(self):
        self._items: deque[Pending] = deque()
        self.pushed: list[int] = []
        self.popped: list[int] = []

    def __len__(self):
        return len(self._items)

    def push(self, item: Pending) -> None:
        self._items.append(item)
        self.pushed.append(item.interest.request_id)

    def head(self) -> Pending | None:
        return self._items[0] if self._items else None

    def pop_head(self) -> Pending:
        item = self._items.popleft()
        self.popped.append(item.interest.request_id)
        return item


class ColorQueueBank:
    """``K / d_max`` queues per popularity level.

    A cache always feeds the queue of its cache group (``k // d_max``); a
    group holds one cache of each color, so heads of two different queues
    never come from the same cache.
    """

    def __init__(self, K: int, d_max: int, levels: Sequence[PopularityLevel], chunks: int,
                 payloads: Callable[[ChunkId], bytes] | None = None):
        self.colors, self.num = assign_colors(K, d_max)
        self.d_max = d_max
        self.levels = {lvl.index: lvl for lvl in levels}
        self.chunks = chunks
        self.payloads = payloads
        self.queues: dict[tuple[int, int], FifoQueue] = {
            (lvl.index, g): FifoQueue() for lvl in levels for g in range(self.num)}
        self._next = {lvl.index: 0 for lvl in levels}
        self.stats: Counter = Counter()

    def depth(self) -> int:
        return sum(len(q) for q in self.queues.values())

    def queue_for(self, pkt: InterestPacket) -> tuple[int, int]:
        if pkt.popularity not in self.levels:
            raise ValueError(f"unknown popularity level {pkt.popularity}")
        if not pkt.caches:
            raise ValueError(f"interest {pkt.request_id} names no requesting cache")
        return pkt.popularity, pkt.caches[0] // self.d_max


def enqueue(bank: ColorQueueBank, pkt: InterestPacket, now: int = 0) -> tuple[int, int]:
    """Merge S_New into S_Cache and append to the requester's queue."""
    qid = bank.queue_for(pkt)
    merged = replace(pkt, s_cache=pkt.s_cache | pkt.s_new, s_new=frozenset())
    bank.queues[qid].push(Pending(merged, now))
    bank.stats["enqueued"] += 1
    return qid


def _packets(bank: ColorQueueBank, schedule, heads: list[InterestPacket], now: int) -> list[DataPacket]:
    first = heads[0]
    out = []
    for tx in schedule:
        out.append(DataPacket(names=tx.operands, targets=tx.targets,
                              popularity=first.popularity, color=first.color,
                              s_cache=first.s_cache, created_at=now,
                              payload=build_payload(tx.operands, bank.payloads)))
        bank.stats["coded" if tx.coded else "uncoded"] += 1
    return out


def _user(pkt: InterestPacket) -> User:
    return User(pkt.request_id, pkt.caches, pkt.file, pkt.s_cache | pkt.s_new)


def encode_round(bank: ColorQueueBank, cache_contents: CacheContents, now: int = 0) -> list[DataPacket]:
    """Code heads of different queues of a level together, two at a time.

    Repeats until at most one queue of each level is non-empty; what is left
    waits for a partner or for :func:`timeout_flush`.
    """
    out: list[DataPacket] = []
    for level in sorted(bank.levels):
        while True:
            start = bank._next[level]
            order = [(start + i) % bank.num for i in range(bank.num)]
            ready = [g for g in order if len(bank.queues[(level, g)])]
            if len(ready) < 2:
                break
            for a, b in zip(ready[0::2], ready[1::2]):
                heads = [bank.queues[(level, g)].pop_head().interest for g in (a, b)]
                schedule = delivery_schedule([_user(h) for h in heads], cache_contents, bank.chunks)
                out.extend(_packets(bank, schedule, heads, now))
                bank.stats["paired"] += 2
            bank._next[level] = (start + 1) % bank.num
    return out


def answer_uncoded(bank: ColorQueueBank, pkt: InterestPacket, now: int) -> list[DataPacket]:
    known = pkt.s_cache | pkt.s_new
    out = []
    for j in range(1, bank.chunks + 1):
        if j in known:
            continue
        c = ChunkId(pkt.file, j)
        out.append(DataPacket(names=(c,), targets=(frozenset({pkt.request_id}),),
                              popularity=pkt.popularity, color=pkt.color,
                              s_cache=pkt.s_cache, created_at=now,
                              payload=build_payload((c,), bank.payloads)))
        bank.stats["uncoded"] += 1
    return out


def timeout_flush(bank: ColorQueueBank, now: int, wait_slices: int) -> list[DataPacket]:
    """Answer uncoded every head that has waited ``wait_slices`` without a partner."""
    if wait_slices < 1:
        raise ValueError("wait_slices must be >= 1")
    out: list[DataPacket] = []
    for qid in sorted(bank.queues):
        q = bank.queues[qid]
        while q.head() is not None and now - q.head().arrived >= wait_slices:
            out.extend(answer_uncoded(bank, q.pop_head().interest, now))
            bank.stats["flushed"] += 1
    return out
