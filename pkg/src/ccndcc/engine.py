"""Time-sliced simulation of a CCN tree with coded or plain delivery.

Within a slice: links transmit what was queued earlier (one hop per slice,
at most ``capacity`` packets each), nodes process what arrived, the server
runs enqueue -> encode -> flush, and finally new requests are drawn and
their interests queued at the sinks.
"""
from __future__ import annotations

import logging
import statistics
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .core import (CacheContents, ChunkId, PopularityLevel, assign_colors,
                   decentralized_placement, m_feasible_partition, validate_levels)
from .node import Fib, NodeState, Receiver, process_data, process_interest, recode_at_intermediate
from .packets import DATA, INTEREST, DataPacket, InterestPacket, PacketPayloads
from .server import ColorQueueBank, answer_uncoded, encode_round, enqueue, timeout_flush
from .store import ContentStore
from .topology import CACHE, ROUTER, SERVER, SINK, Topology, build_topology
from .workload import Request, WorkloadSpec, generate_requests, user_caches

log = logging.getLogger(__name__)

MODES = ("coded", "baseline")


class InvariantViolation(AssertionError):
    pass


def default_levels() -> list[PopularityLevel]:
    return [PopularityLevel(1, 30, 2, 1), PopularityLevel(2, 120, 1, 2)]


@dataclass
class SimConfig:
    mode: str = "coded"
    levels: list[PopularityLevel] = field(default_factory=default_levels)
    lambdas: tuple[float, ...] = (7.0, 7.0)
    cache_memory: float = 30          # files per edge cache
    cs_capacity: int = 150            # packets per content store
    chunks: int = 12
    policy: str = "priority-lru"
    slices: int = 60
    cooldown: int = 20
    drain: bool = False               # keep going until the network is idle
    max_drain: int = 100_000
    wait_slices: int = 3
    recode: bool = True
    recode_window: int = 1
    payload_bytes: int = 0            # >0 carries real payloads and checks XOR decoding
    seed: int = 1
    profile: str = "paper"
    K: int = 4
    node_count: int = 20
    link_capacity: int = 50
    overrides: list = field(default_factory=list)
    edges: list | None = None
    kinds: dict | None = None
    check: bool = True
    placement: CacheContents | None = None     # fixed cache contents instead of the random placement
    script: tuple | None = None                # (slice, sink, level, file) rows instead of Poisson draws

    @property
    def d_max(self) -> int:
        return max(lvl.degree for lvl in self.levels)


@dataclass
class RequestState:
    rid: int
    sink: int
    level: int
    file: int
    caches: tuple[int, ...]
    created: int
    side: frozenset
    have: set[int]
    hit: bool = False
    done_at: int | None = None


@dataclass
class Link:
    capacity: int
    queue: deque = field(default_factory=deque)
    sent: int = 0


@dataclass
class MetricsLedger:
    rows: list[dict] = field(default_factory=list)
    pkt_delays: list[int] = field(default_factory=list)
    req_delays: list[int] = field(default_factory=list)
    totals: Counter = field(default_factory=Counter)
    violations: Counter = field(default_factory=Counter)
    max_link_queue: int = 0

    window: int | None = None
    chunks: int = 1

    def summary(self) -> dict:
        """Run metrics over the measured window (slices plus cool-down).

        Slices added by a drain are left out so that draining does not
        change the numbers.
        """
        rows = self.rows[:self.window] if self.window else self.rows
        n = max(len(rows), 1)
        pkt = [d for r in rows for d in r["pkt_delays"]]
        req = [d for r in rows for d in r["req_delays"]]
        requests = sum(r["interests"] for r in rows)

        def total(key):
            return sum(r[key] for r in rows)

        return {
            "throughput": total("delivered") / n,
            "delay_pkt": statistics.fmean(pkt) if pkt else float("nan"),
            "delay_req": statistics.fmean(req) if req else float("nan"),
            "hit_ratio_interest": total("interest_hits") / requests if requests else 0.0,
            "hit_ratio_chunk": total("chunk_hits") / (requests * self.chunks) if requests else 0.0,
            "tx_total": total("tx"),
            "tx_coded": total("tx_coded"),
            "tx_uncoded": total("tx_uncoded"),
            "completed": len(req),
            "requests": requests,
        }


class World:
    def __init__(self, cfg: SimConfig):
        if cfg.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.cfg = cfg
        self.topo: Topology = build_topology(cfg.profile, cfg.K, cfg.node_count, cfg.link_capacity,
                                             cfg.overrides, cfg.edges, cfg.kinds)
        if self.topo.K != cfg.K:
            raise ValueError(f"topology has {self.topo.K} edge caches, config says K={cfg.K}")
        validate_levels(cfg.K, cfg.levels)
        for lvl in cfg.levels:
            if cfg.d_max % lvl.degree:
                raise ValueError(f"level {lvl.index}: degree {lvl.degree} does not divide d_max={cfg.d_max}")
        self.colors, _ = assign_colors(cfg.K, cfg.d_max)
        self.payloads = PacketPayloads(cfg.payload_bytes, cfg.seed) if cfg.payload_bytes else None
        self.hop_limit = self.topo.diameter() + 2

        M = Fraction(cfg.cache_memory).limit_denominator(10**6)
        if cfg.mode == "coded" and cfg.placement is not None:
            self.partition = None
            self.placement = cfg.placement
        elif cfg.mode == "coded" and M > 0:
            self.partition = m_feasible_partition(cfg.K, cfg.levels, M)
            self.placement = decentralized_placement(cfg.levels, self.partition, cfg.K, M,
                                                     cfg.chunks, cfg.seed, cfg.d_max)
        else:
            self.partition = None
            self.placement = CacheContents(tuple(self.colors), tuple(frozenset() for _ in range(cfg.K)))

        self.receivers: dict[int, Receiver] = {}
        self.nodes: dict[int, NodeState] = {}
        for n, kind in self.topo.kinds.items():
            if kind in (ROUTER, CACHE):
                self.nodes[n] = NodeState(n, cfg.chunks, ContentStore(cfg.cs_capacity, cfg.policy, cfg.seed * 1000 + n),
                                          Fib(self.topo.parent[n]), payloads=self.payloads,
                                          receivers=self.receivers)
        self.server = self.topo.server
        self.bank = ColorQueueBank(cfg.K, cfg.d_max, cfg.levels, cfg.chunks, self.payloads)
        self.server_faces: dict[int, int] = {}
        self.links = {uv: Link(cap) for uv, cap in sorted(self.topo.capacity.items())}
        self.workload = WorkloadSpec(tuple(cfg.lambdas), cfg.seed)
        self.sink_list = [(s, self.topo.sink_cache[s]) for s in self.topo.sinks]
        self.requests: dict[int, RequestState] = {}
        self.sink_requests: dict[int, set[int]] = {s: set() for s in self.topo.sinks}
        self.next_rid = 0
        self._side: dict[tuple[int, ...], frozenset] = {}
        self.ledger = MetricsLedger()
        self.now = 0

    # -- helpers -----------------------------------------------------------

    def send(self, src: int, dst: int, pkt) -> None:
        self.links[(src, dst)].queue.append((self.now, pkt))

    def idle(self) -> bool:
        return self.bank.depth() == 0 and not any(l.queue for l in self.links.values())

    def _recode_link(self, link: Link) -> None:
        cfg = self.cfg
        window = min(len(link.queue), 2 * link.capacity)
        if window < 2:
            return
        head = [link.queue.popleft() for _ in range(window)]
        fresh = [(i, p) for i, (t, p) in enumerate(head)
                 if p.kind == DATA and not p.coded and self.now - t <= cfg.recode_window]
        if len(fresh) >= 2:
            merged = recode_at_intermediate([p for _, p in fresh], self.receivers, cfg.chunks, cfg.d_max)
            if len(merged) < len(fresh):
                self.ledger.totals["recoded"] += len(fresh) - len(merged)
                slots = [i for i, _ in fresh]
                stamps = {i: head[i][0] for i in slots}
                keep = [e for i, e in enumerate(head) if i not in stamps]
                rebuilt = [(stamps[slots[0]], m) for m in merged]
                head = sorted(keep + rebuilt, key=lambda e: e[0])
        link.queue.extendleft(reversed(head))

    # -- slice phases --------------------------------------------------------

    def transmit(self) -> list[tuple[int, int, object]]:
        arrivals = []
        for (u, v), link in self.links.items():
            if not link.queue:
                continue
            if (self.cfg.recode and self.cfg.mode == "coded"
                    and self.topo.kinds[u] == ROUTER):
                self._recode_link(link)
            n = min(link.capacity, len(link.queue))
            for _ in range(n):
                _, pkt = link.queue.popleft()
                if pkt.kind == DATA:
                    pkt = pkt.evolve(hops=pkt.hops + 1)
                arrivals.append((v, u, pkt))
            link.sent += n
            self.ledger.totals["tx"] += n
            self._row["tx"] += n
            self.ledger.max_link_queue = max(self.ledger.max_link_queue, len(link.queue))
        # recount from what actually left each link this slice
        for (v, u), n in Counter((v, u) for v, u, _ in arrivals).items():
            if n > self.links[(u, v)].capacity:
                self.ledger.violations["link_capacity"] += 1
        return arrivals

    def deliver(self, node: int, face: int, pkt) -> None:
        kind = self.topo.kinds[node]
        if kind == SINK:
            if pkt.kind == DATA:
                self.at_sink(node, pkt)
            return
        if kind == SERVER:
            if pkt.kind != INTEREST:
                return
            self.server_faces[pkt.request_id] = face
            if self.cfg.mode == "coded":
                enqueue(self.bank, pkt, self.now)
            else:
                self.emit_from_server(answer_uncoded(self.bank, pkt, self.now))
            return
        state = self.nodes[node]
        if pkt.kind == INTEREST:
            actions = process_interest(state, pkt, face, self.now)
            for a in actions:
                if a.packet.kind == DATA:
                    self.note_hit(a.packet.served, 1)
        else:
            actions = process_data(state, pkt, face, self.now)
        for a in actions:
            self.send(node, a.face, a.packet)

    def note_hit(self, rids, chunks: int) -> None:
        for rid in rids:
            req = self.requests[rid]
            if not req.hit:
                req.hit = True
                self.ledger.totals["interest_hits"] += 1
                self._row["interest_hits"] += 1
            self.ledger.totals["chunk_hits"] += chunks
            self._row["chunk_hits"] += chunks

    def emit_from_server(self, packets: Sequence[DataPacket]) -> None:
        for pkt in packets:
            self.ledger.totals["tx_coded" if pkt.coded else "tx_uncoded"] += 1
            self._row["tx_coded" if pkt.coded else "tx_uncoded"] += 1
            faces: dict[int, list[set]] = {}
            for i, targets in enumerate(pkt.targets):
                for rid in targets:
                    f = self.server_faces[rid]
                    faces.setdefault(f, [set() for _ in pkt.names])[i].add(rid)
            for f in sorted(faces):
                tg = tuple(frozenset(s) for s in faces[f])
                self.send(self.server, f, pkt.evolve(targets=tg))

    def at_sink(self, sink: int, pkt: DataPacket) -> None:
        mine = self.sink_requests[sink]
        for i, (name, targets) in enumerate(zip(pkt.names, pkt.targets)):
            for rid in sorted(targets & mine):
                req = self.requests[rid]
                others = [c for j, c in enumerate(pkt.names) if j != i]
                if any(c not in req.side for c in others):
                    self.ledger.violations["undecodable"] += 1
                    continue
                if self.payloads is not None and pkt.payload is not None:
                    value = pkt.payload
                    for c in others:
                        value = bytes(x ^ y for x, y in zip(value, self.payloads(c)))
                    if value != self.payloads(name):
                        self.ledger.violations["payload_mismatch"] += 1
                        continue
                if name.file != req.file or name.index in req.have:
                    self.ledger.totals["duplicates"] += 1
                    continue
                req.have.add(name.index)
                delay = self.now - pkt.created_at
                if delay < pkt.hops:
                    self.ledger.violations["delay_below_hops"] += 1
                self.ledger.pkt_delays.append(delay)
                self._row["pkt_delays"].append(delay)
                self._delivered(req, 1)

    def _delivered(self, req: RequestState, n: int) -> None:
        self.ledger.totals["delivered"] += n
        self._row["delivered"] += n
        if len(req.have) == self.cfg.chunks and req.done_at is None:
            req.done_at = self.now
            self.sink_requests[req.sink].discard(req.rid)
            delay = self.now - req.created
            self.ledger.req_delays.append(delay)
            self._row["req_delays"].append(delay)
            self.ledger.totals["completed"] += 1

    def new_requests(self) -> None:
        cfg = self.cfg
        if cfg.script is None:
            batch = generate_requests(self.workload, self.sink_list, cfg.levels, cfg.K, self.now)
        else:
            degree = {lvl.index: lvl.degree for lvl in cfg.levels}
            batch = [Request(sink, lvl, f, user_caches(self.topo.sink_cache[sink], degree[lvl], cfg.K))
                     for t, sink, lvl, f in cfg.script if t == self.now]
        for r in batch:
            rid = self.next_rid
            self.next_rid += 1
            side = self._side.get(r.caches)
            if side is None:
                side = self._side[r.caches] = self.placement.visible(r.caches)
            local = frozenset(j for j in range(1, cfg.chunks + 1) if ChunkId(r.file, j) in side)
            req = RequestState(rid, r.sink, r.level, r.file, r.caches, self.now, side, set(local))
            self.requests[rid] = req
            self.receivers[rid] = Receiver(r.caches, len(r.caches), side)
            self.sink_requests[r.sink].add(rid)
            self.ledger.totals["requests"] += 1
            self.ledger.totals["chunks_requested"] += cfg.chunks
            self._row["interests"] += 1
            if local:
                self.note_hit([rid], len(local))
            self._delivered(req, len(local))
            if req.done_at is not None:
                continue
            pkt = InterestPacket(file=r.file, popularity=r.level, color=self.colors[r.caches[0]],
                                 s_cache=local, hop_limit=self.hop_limit, origin=r.sink,
                                 created_at=self.now, request_id=rid, caches=r.caches)
            self.send(r.sink, self.topo.parent[r.sink], pkt)

    def check_invariants(self) -> None:
        for n, state in self.nodes.items():
            if len(state.cs) > state.cs.capacity:
                self.ledger.violations["cs_capacity"] += 1
        for q in self.bank.queues.values():
            if q.popped != q.pushed[:len(q.popped)]:
                self.ledger.violations["queue_order"] += 1


def _new_row(t: int) -> dict:
    return {"slice": t, "delivered": 0, "tx": 0, "tx_coded": 0, "tx_uncoded": 0, "interests": 0,
            "interest_hits": 0, "chunk_hits": 0, "pkt_delays": [], "req_delays": []}


def step(world: World, t: int, generate: bool = True) -> dict:
    """Advance one slice; return that slice's ledger row."""
    world.now = t
    world._row = _new_row(t)
    for node, face, pkt in world.transmit():
        world.deliver(node, face, pkt)
    if world.cfg.mode == "coded":
        world.emit_from_server(encode_round(world.bank, world.placement, t))
        world.emit_from_server(timeout_flush(world.bank, t, world.cfg.wait_slices))
    if generate:
        world.new_requests()
    if world.cfg.check:
        world.check_invariants()
    world.ledger.rows.append(world._row)
    return world._row


def run(cfg: SimConfig) -> MetricsLedger:
    world = World(cfg)
    t = 0
    for t in range(cfg.slices):
        step(world, t)
    t = cfg.slices
    for _ in range(cfg.cooldown):
        step(world, t, generate=False)
        t += 1
    if cfg.drain:
        while not world.idle() and t < cfg.slices + cfg.cooldown + cfg.max_drain:
            step(world, t, generate=False)
            t += 1
        # one more slice so the last transmissions land
        step(world, t, generate=False)
    ledger = world.ledger
    ledger.window = cfg.slices + cfg.cooldown
    ledger.chunks = cfg.chunks
    ledger.totals["drained"] = int(world.idle())
    ledger.totals["pit_entries"] = sum(len(n.pit) for n in world.nodes.values())
    ledger.totals["open_requests"] = sum(1 for r in world.requests.values() if r.done_at is None)
    ledger.totals["server_queue"] = world.bank.depth()
    for n in world.nodes.values():
        for key, val in n.counters.items():
            ledger.totals[f"node_{key}"] += val
    if cfg.check and ledger.totals["drained"]:
        if ledger.totals["pit_entries"]:
            ledger.violations["pit_leak"] += ledger.totals["pit_entries"]
        if ledger.totals["open_requests"]:
            ledger.violations["unfinished_requests"] += ledger.totals["open_requests"]
    ledger.world = world
    return ledger
