"""Per-node CCN state: Content Store, PIT, FIB and the packet pipelines."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, NamedTuple

from .core import ChunkId, color_part
from .packets import DATA, INTEREST, DataPacket, InterestPacket, xor_payload
from .store import ContentStore


class Action(NamedTuple):
    face: int
    packet: object


@dataclass
class PitEntry:
    """Requests waiting here for one chunk, by downstream face."""

    chunk: ChunkId
    faces: dict[int, set[int]]
    upstream: set[int]
    created_at: int
    asked: dict[int, InterestPacket] = field(default_factory=dict)

    @property
    def request_ids(self) -> set[int]:
        out: set[int] = set()
        for ids in self.faces.values():
            out |= ids
        return out


class Pit:
    def __init__(self):
        self.by_chunk: dict[ChunkId, PitEntry] = {}

    def __len__(self):
        return len(self.by_chunk)

    def __contains__(self, chunk):
        return chunk in self.by_chunk

    def entries(self):
        return iter(self.by_chunk.values())

    def get(self, chunk: ChunkId) -> PitEntry | None:
        return self.by_chunk.get(chunk)

    def add(self, entry: PitEntry) -> None:
        self.by_chunk[entry.chunk] = entry

    def remove(self, chunk: ChunkId) -> None:
        del self.by_chunk[chunk]


@dataclass
class Fib:
    """Name-prefix routes; everything else goes to ``default`` (toward the server)."""

    default: int | None
    routes: dict[int, int] = field(default_factory=dict)

    def lookup(self, file: int) -> int | None:
        return self.routes.get(file, self.default)


@dataclass
class NodeState:
    node_id: int
    chunks: int
    cs: ContentStore
    fib: Fib
    pit: Pit = field(default_factory=Pit)
    payloads: Callable[[ChunkId], bytes] | None = None
    counters: Counter = field(default_factory=Counter)
    # side information of live requests, when the node is allowed to know it
    receivers: Mapping[int, "Receiver"] | None = None


def _data_from_cs(node: NodeState, pkt: InterestPacket, idx: int, now: int) -> DataPacket:
    chunk = ChunkId(pkt.file, idx)
    return DataPacket(names=(chunk,), targets=(frozenset({pkt.request_id}),),
                      popularity=pkt.popularity, color=pkt.color, s_cache=pkt.s_cache,
                      s_new=pkt.s_new, hop_limit=pkt.hop_limit, created_at=now,
                      payload=node.cs.get(chunk))


def process_interest(node: NodeState, pkt: InterestPacket, in_face: int, now: int) -> list[Action]:
    """Answer what the CS holds, aggregate on pending chunks, forward the rest.

    Chunks found here are sent downstream right away.  They, and chunks
    already requested upstream by someone else, go into S_New so that
    upstream nodes and the server skip them.
    """
    if pkt.kind != INTEREST or pkt.request_id < 0:
        node.counters["malformed"] += 1
        return []
    if pkt.hop_limit <= 0:
        node.counters["dropped_hop_limit"] += 1
        return []
    wanted = [j for j in range(1, node.chunks + 1) if j not in pkt.s_cache and j not in pkt.s_new]
    hits = frozenset(j for j in wanted if node.cs.touch(ChunkId(pkt.file, j)))
    actions = [Action(in_face, _data_from_cs(node, pkt, j, now)) for j in sorted(hits)]
    if hits:
        node.counters["interest_hits"] += 1
        node.counters["chunk_hits"] += len(hits)
    fresh, joined = [], set()
    for j in wanted:
        if j in hits:
            continue
        entry = node.pit.get(ChunkId(pkt.file, j))
        if entry is None:
            fresh.append(j)
        else:
            entry.faces.setdefault(in_face, set()).add(pkt.request_id)
            entry.asked[pkt.request_id] = pkt
            joined.add(j)
    if joined:
        node.counters["aggregated"] += 1
    if not fresh:
        return actions
    up = node.fib.lookup(pkt.file)
    if up is None:
        node.counters["no_route"] += 1
        return actions
    for j in fresh:
        node.pit.add(PitEntry(ChunkId(pkt.file, j), {in_face: {pkt.request_id}},
                              {pkt.request_id}, now, {pkt.request_id: pkt}))
    actions.append(Action(up, pkt.forwarded(hits | joined)))
    return actions


def _decodable(node: NodeState, rid: int, others, targets) -> bool:
    if not others:
        return True
    if node.receivers is not None and rid in node.receivers:
        side = node.receivers[rid].side
        return all(c in side for c in others)
    return rid in targets


def _reissue(node: NodeState, entry: PitEntry) -> Action | None:
    """Ask upstream again for a chunk on behalf of requests that could not
    decode the copy that came down."""
    rid = min(entry.request_ids)
    orig = entry.asked[rid]
    up = node.fib.lookup(orig.file)
    if up is None:
        return None
    others = frozenset(range(1, node.chunks + 1)) - {entry.chunk.index} - orig.s_cache
    entry.upstream = {rid}
    node.counters["reissued"] += 1
    return Action(up, replace(orig, s_new=others, hop_limit=orig.hop_limit - 1))


def process_data(node: NodeState, pkt: DataPacket, in_face: int, now: int) -> list[Action]:
    """Forward data to every face with requests that can use it; cache it if
    uncoded.

    An operand is handed to a waiting request only if the request holds all
    the other operands.  Requests left waiting after their upstream copy
    arrived get a fresh interest sent upstream.
    """
    if pkt.kind != DATA:
        node.counters["malformed"] += 1
        return []
    per_face: dict[int, list[set[int]]] = {}
    retry = []
    for i, (name, targets) in enumerate(zip(pkt.names, pkt.targets)):
        entry = node.pit.get(name)
        if entry is None:
            continue
        others = pkt.names[:i] + pkt.names[i + 1:]
        for face in sorted(entry.faces):
            ids = entry.faces[face]
            ok = {r for r in ids if _decodable(node, r, others, targets)}
            if ok:
                per_face.setdefault(face, [set() for _ in pkt.names])[i] |= ok
                ids -= ok
            if not ids:
                del entry.faces[face]
        for r in list(entry.asked):
            if not any(r in ids for ids in entry.faces.values()):
                del entry.asked[r]
        if not entry.faces:
            node.pit.remove(name)
        elif entry.upstream & targets:
            retry.append(entry)
    actions = []
    for entry in retry:
        a = _reissue(node, entry)
        if a is not None:
            actions.append(a)
    if not per_face:
        if not retry:
            node.counters["dropped_unsolicited"] += 1
        return actions
    if not pkt.coded:
        node.cs.insert(pkt.names[0], pkt.popularity, pkt.payload)
    for face in sorted(per_face):
        targets = tuple(frozenset(s) for s in per_face[face])
        actions.append(Action(face, pkt.evolve(targets=targets)))
    return actions


@dataclass(frozen=True)
class Receiver:
    """What an intermediate node knows about a request's end point."""

    caches: tuple[int, ...]
    degree: int
    side: frozenset


def _can_pair(p: DataPacket, q: DataPacket, receivers: Mapping[int, Receiver],
              chunks: int, d_max: int) -> bool:
    if p.coded or q.coded or not p.served or not q.served or p.served & q.served:
        return False
    a, b = p.names[0], q.names[0]
    if a == b:
        return False
    try:
        rp = [receivers[r] for r in p.served]
        rq = [receivers[r] for r in q.served]
    except KeyError:
        return False
    if any(b not in r.side for r in rp) or any(a not in r.side for r in rq):
        return False
    if any(set(x.caches) & set(y.caches) for x in rp for y in rq):
        return False
    if any(r.degree > 1 for r in rp + rq):
        if color_part(a.index, chunks, d_max) != color_part(b.index, chunks, d_max):
            return False
    return True


def recode_at_intermediate(packets: list[DataPacket], receivers: Mapping[int, Receiver],
                           chunks: int, d_max: int) -> list[DataPacket]:
    """XOR pairs of buffered uncoded packets bound for different caches.

    A pair is merged only when each receiver already holds the other chunk,
    the two sides share no cache and, for multi-access traffic, both chunks
    come from the same color part.  Unpaired packets pass through in order.
    """
    out: list[DataPacket | None] = list(packets)
    for i, p in enumerate(out):
        if p is None or p.coded:
            continue
        rp = [receivers.get(r) for r in p.served]
        if None in rp:
            continue
        # chunks every receiver of p holds: the only useful partners
        held = frozenset.intersection(*(r.side for r in rp)) if rp else frozenset()
        for j in range(i + 1, len(out)):
            q = out[j]
            if q is None or q.coded or q.names[0] not in held:
                continue
            if not _can_pair(p, q, receivers, chunks, d_max):
                continue
            payload = None
            if p.payload is not None and q.payload is not None:
                payload = xor_payload(p.payload, q.payload)
            out[i] = DataPacket(names=p.names + q.names, targets=p.targets + q.targets,
                                popularity=min(p.popularity, q.popularity), color=p.color,
                                hop_limit=min(p.hop_limit, q.hop_limit),
                                created_at=min(p.created_at, q.created_at),
                                payload=payload, hops=max(p.hops, q.hops))
            out[j] = None
            break
    return [p for p in out if p is not None]
