from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccndcc.core import ChunkId
from ccndcc.node import (Fib, NodeState, Receiver, process_data, process_interest,
                         recode_at_intermediate)
from ccndcc.packets import DATA, INTEREST, DataPacket, InterestPacket, PacketPayloads, dump, xor_payload
from ccndcc.store import ContentStore

A, B = 0, 1


def node(capacity=150, policy="priority-lru", chunks=12, receivers=None):
    return NodeState(7, chunks, ContentStore(capacity, policy), Fib(99), receivers=receivers)


def interest(file=A, s_cache=(1, 2, 4, 5), rid=1, hop=8, **kw):
    return InterestPacket(file=file, popularity=1, color=0, s_cache=frozenset(s_cache), hop_limit=hop,
                          request_id=rid, caches=(0,), **kw)


def data(*names, targets=None):
    names = tuple(ChunkId(f, j) for f, j in names)
    targets = targets or tuple(frozenset() for _ in names)
    return DataPacket(names=names, targets=tuple(frozenset(t) for t in targets))


# -- packets ----------------------------------------------------------------------

def test_kind_bits():
    assert interest().kind == INTEREST == 0
    assert data((A, 1)).kind == DATA == 1


def test_forwarding_moves_found_chunks_into_s_new_only():
    pkt = interest().forwarded(frozenset({3, 7, 8, 1}))
    assert pkt.s_new == {3, 7, 8}
    assert pkt.s_cache == {1, 2, 4, 5}
    assert pkt.hop_limit == 7


def test_dump_line():
    line = dump(interest(s_new=frozenset({3})))
    assert line == "0 f0 P=1 color=0 S_Cache={1,2,4,5} S_New={3} hop=8"
    assert dump(data((A, 3), (B, 9))).startswith("1 f0/3+f1/9 P=1")


def test_data_packet_shape_checks():
    with pytest.raises(ValueError):
        DataPacket(names=(), targets=())
    with pytest.raises(ValueError):
        DataPacket(names=(ChunkId(0, 1),), targets=())
    with pytest.raises(ValueError):
        data((A, 1)).evolve(targets=())


def test_xor_laws_on_kib_blocks():
    pay = PacketPayloads(1024, seed=3)
    a, b = pay(ChunkId(0, 1)), pay(ChunkId(0, 2))
    zero = bytes(1024)
    assert len(a) == 1024
    assert xor_payload(a, a) == zero
    assert xor_payload(a, zero) == a
    assert xor_payload(xor_payload(a, b), b) == a
    assert xor_payload(a, b) == xor_payload(b, a)
    with pytest.raises(ValueError):
        xor_payload(a, b[:10])


def test_payloads_are_deterministic():
    assert PacketPayloads(16, 1)(ChunkId(2, 3)) == PacketPayloads(16, 1)(ChunkId(2, 3))
    assert PacketPayloads(16, 1)(ChunkId(2, 3)) != PacketPayloads(16, 2)(ChunkId(2, 3))


# -- content store ------------------------------------------------------------------

def test_capacity_150_holds_150():
    cs = ContentStore(150)
    evicted = [cs.insert(ChunkId(f, 1), 1) for f in range(150)]
    assert sum(map(len, evicted)) == 0
    assert len(cs.insert(ChunkId(150, 1), 1)) == 1
    assert len(cs) == 150


def test_priority_lru_evicts_unpopular_first():
    cs = ContentStore(3)
    cs.insert(ChunkId(0, 1), 1)
    cs.insert(ChunkId(1, 1), 2)
    cs.insert(ChunkId(2, 1), 1)
    assert cs.insert(ChunkId(3, 1), 1) == [ChunkId(1, 1)]


def test_priority_lru_is_lru_within_a_level():
    cs = ContentStore(2)
    cs.insert(ChunkId(0, 1), 2)
    cs.insert(ChunkId(1, 1), 2)
    cs.touch(ChunkId(0, 1))
    assert cs.insert(ChunkId(2, 1), 1) == [ChunkId(1, 1)]


def test_duplicate_insert_only_refreshes():
    cs = ContentStore(2, "lru")
    cs.insert(ChunkId(0, 1), 1)
    cs.insert(ChunkId(1, 1), 1)
    assert cs.insert(ChunkId(0, 1), 1) == []
    assert cs.insert(ChunkId(2, 1), 1) == [ChunkId(1, 1)]


def test_zero_capacity_stores_nothing():
    cs = ContentStore(0)
    assert cs.insert(ChunkId(0, 1), 1) == []
    assert len(cs) == 0


def test_bad_store_arguments():
    with pytest.raises(ValueError):
        ContentStore(-1)
    with pytest.raises(ValueError):
        ContentStore(3, "fifo")


def _trace(policy, seed=4):
    cs = ContentStore(3, policy, seed)
    for f in (0, 1, 2):
        cs.insert(ChunkId(f, 1), 1)
    for f in (0, 0, 0, 1):
        cs.touch(ChunkId(f, 1))
    for f in range(3, 9):
        cs.insert(ChunkId(f, 1), 1)
        cs.touch(ChunkId(f, 1))
    return cs.evictions


def test_policies_evict_differently():
    seqs = {p: tuple(_trace(p)) for p in ("lru", "lfu", "random")}
    assert len(set(seqs.values())) == 3
    assert _trace("random") == _trace("random")


@settings(max_examples=60, deadline=None)
@given(cap=st.integers(0, 20), policy=st.sampled_from(["priority-lru", "lru", "lfu", "random"]),
       ops=st.lists(st.tuples(st.integers(0, 40), st.integers(1, 3), st.booleans()), max_size=200))
def test_store_never_exceeds_capacity(cap, policy, ops):
    cs = ContentStore(cap, policy)
    for f, level, touch in ops:
        if touch:
            cs.touch(ChunkId(f, 1))
        else:
            cs.insert(ChunkId(f, 1), level)
        assert len(cs) <= cap
        assert sum(len(b) for b in cs._order.values()) == len(cs)


# -- interest pipeline -------------------------------------------------------------

def test_partial_hit_records_s_new_and_forwards():
    n = node()
    for j in (3, 7, 8):
        n.cs.insert(ChunkId(A, j), 1)
    actions = process_interest(n, interest(), in_face=5, now=0)
    down = [a for a in actions if a.face == 5]
    up = [a for a in actions if a.face == 99]
    assert sorted(a.packet.chunk_index for a in down) == [3, 7, 8]
    assert len(up) == 1
    fwd = up[0].packet
    assert fwd.s_cache == {1, 2, 4, 5} and fwd.s_new == {3, 7, 8}
    assert fwd.hop_limit == 7
    assert len(n.pit) == 12 - 4 - 3


def test_full_hit_answers_everything_and_stops():
    n = node()
    for j in range(1, 13):
        n.cs.insert(ChunkId(A, j), 1)
    actions = process_interest(n, interest(s_cache=()), in_face=5, now=0)
    assert len(actions) == 12
    assert all(a.face == 5 and a.packet.kind == DATA for a in actions)
    assert len(n.pit) == 0


def test_pure_miss_forwards_unchanged_but_hop():
    n = node()
    pkt = interest()
    (a,) = process_interest(n, pkt, in_face=5, now=0)
    assert a.face == 99
    assert a.packet.s_new == frozenset() and a.packet.s_cache == pkt.s_cache
    assert a.packet.hop_limit == pkt.hop_limit - 1


def test_identical_request_is_aggregated():
    n = node()
    process_interest(n, interest(rid=1), in_face=5, now=0)
    assert process_interest(n, interest(rid=2), in_face=6, now=1) == []
    assert n.counters["aggregated"] == 1


def test_overlapping_request_forwards_only_the_rest():
    n = node()
    process_interest(n, interest(rid=1, s_cache=range(1, 9)), in_face=5, now=0)
    (a,) = process_interest(n, interest(rid=2, s_cache=()), in_face=6, now=0)
    assert a.packet.s_new == {9, 10, 11, 12}


def test_hop_limit_and_malformed_drops():
    n = node()
    assert process_interest(n, interest(hop=0), 5, 0) == []
    assert process_interest(n, interest(rid=-1), 5, 0) == []
    assert process_data(n, interest(), 5, 0) == []
    assert n.counters["dropped_hop_limit"] == 1
    assert n.counters["malformed"] == 2


# -- data pipeline -------------------------------------------------------------------

def test_coded_packet_goes_to_both_requesting_faces():
    n = node()
    process_interest(n, interest(file=A, rid=1, s_cache=()), in_face=1, now=0)
    process_interest(n, interest(file=B, rid=2, s_cache=()), in_face=2, now=0)
    pkt = data((A, 3), (B, 3), targets=({1}, {2}))
    actions = process_data(n, pkt, 99, 1)
    assert {a.face for a in actions} == {1, 2}
    by_face = {a.face: a.packet for a in actions}
    assert by_face[1].targets == (frozenset({1}), frozenset())
    assert by_face[2].targets == (frozenset(), frozenset({2}))
    assert ChunkId(A, 3) not in n.pit and ChunkId(B, 3) not in n.pit
    assert len(n.cs) == 0                       # coded data is never cached


def test_pit_match_table_for_two_entries():
    # entries for A (face 1) and B (face 2), each present or not: forwarding set follows
    for has_a in (False, True):
        for has_b in (False, True):
            n = node()
            if has_a:
                process_interest(n, interest(file=A, rid=1, s_cache=()), 1, 0)
            if has_b:
                process_interest(n, interest(file=B, rid=2, s_cache=()), 2, 0)
            actions = process_data(n, data((A, 3), (B, 3), targets=({1}, {2})), 99, 1)
            assert {a.face for a in actions} == ({1} if has_a else set()) | ({2} if has_b else set())


def test_unsolicited_data_dropped_and_not_cached():
    n = node()
    assert process_data(n, data((A, 1), targets=({4},)), 99, 0) == []
    assert n.counters["dropped_unsolicited"] == 1
    assert len(n.cs) == 0


def test_completing_data_removes_entry_caches_and_forwards():
    n = node()
    process_interest(n, interest(rid=1, s_cache=range(1, 12)), 5, 0)
    assert len(n.pit) == 1
    (a,) = process_data(n, data((A, 12), targets=({1},)), 99, 1)
    assert a.face == 5
    assert len(n.pit) == 0
    assert ChunkId(A, 12) in n.cs


def test_aggregated_request_that_cannot_decode_is_asked_again():
    receivers = {1: Receiver((0,), 1, frozenset({ChunkId(B, 3)})), 2: Receiver((1,), 1, frozenset()),
                 3: Receiver((2,), 1, frozenset({ChunkId(A, 3)}))}
    n = node(receivers=receivers)
    process_interest(n, interest(rid=1, s_cache=range(1, 12)), 5, 0)
    process_interest(n, interest(rid=2, s_cache=range(1, 12)), 6, 0)
    actions = process_data(n, data((A, 12), (B, 3), targets=({1}, {3})), 99, 1)
    down = [a for a in actions if a.face == 5]
    up = [a for a in actions if a.face == 99]
    assert len(down) == 1
    assert len(up) == 1 and up[0].packet.request_id == 2
    assert up[0].packet.known() == frozenset(range(1, 12))
    assert n.pit.get(ChunkId(A, 12)).request_ids == {2}
    # the plain copy that follows completes it
    (last,) = process_data(n, data((A, 12), targets=({2},)), 99, 2)
    assert last.face == 6 and len(n.pit) == 0


# -- recoding ----------------------------------------------------------------------------

def _rx(caches, side=(), degree=None):
    return Receiver(tuple(caches), degree or len(caches), frozenset(side))


def test_two_single_cache_sinks_are_recoded():
    rx = {1: _rx([0], [ChunkId(B, 3)]), 2: _rx([1], [ChunkId(A, 3)])}
    out = recode_at_intermediate([data((A, 3), targets=({1},)), data((B, 3), targets=({2},))], rx, 12, 2)
    assert len(out) == 1 and out[0].coded
    assert out[0].targets == (frozenset({1}), frozenset({2}))


def test_recoded_payload_decodes_at_both_ends():
    pay = PacketPayloads(32, 1)
    a, b = ChunkId(A, 3), ChunkId(B, 4)
    rx = {1: _rx([0], [b]), 2: _rx([1], [a])}
    pa = DataPacket((a,), (frozenset({1}),), payload=pay(a))
    pb = DataPacket((b,), (frozenset({2}),), payload=pay(b))
    (x,) = recode_at_intermediate([pa, pb], rx, 12, 2)
    assert xor_payload(x.payload, pay(b)) == pay(a)
    assert xor_payload(x.payload, pay(a)) == pay(b)


def test_pair_users_of_different_halves_pass_through():
    rx = {1: _rx([0, 1], [ChunkId(B, 9)]), 2: _rx([2, 3], [ChunkId(A, 3)])}
    pkts = [data((A, 3), targets=({1},)), data((B, 9), targets=({2},))]
    assert recode_at_intermediate(pkts, rx, 12, 2) == pkts


def test_receivers_sharing_a_cache_pass_through():
    rx = {1: _rx([0, 1], [ChunkId(B, 3)]), 2: _rx([1, 2], [ChunkId(A, 3)])}
    pkts = [data((A, 3), targets=({1},)), data((B, 3), targets=({2},))]
    assert recode_at_intermediate(pkts, rx, 12, 2) == pkts


def test_receiver_missing_side_information_passes_through():
    rx = {1: _rx([0]), 2: _rx([1], [ChunkId(A, 3)])}
    pkts = [data((A, 3), targets=({1},)), data((B, 3), targets=({2},))]
    assert recode_at_intermediate(pkts, rx, 12, 2) == pkts


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 8))
def test_recoding_is_safe(seed, n):
    rng = np.random.default_rng(seed)
    rx, pkts = {}, []
    for rid in range(n):
        d = int(rng.choice([1, 2]))
        start = int(rng.integers(0, 4 // d)) * d
        side = {ChunkId(int(rng.integers(0, 4)), int(rng.integers(1, 13))) for _ in range(20)}
        rx[rid] = _rx(range(start, start + d), side)
        pkts.append(data((int(rng.integers(0, 4)), int(rng.integers(1, 13))), targets=({rid},)))
    out = recode_at_intermediate(pkts, rx, 12, 2)
    served = Counter()
    for p in out:
        for i, (name, t) in enumerate(zip(p.names, p.targets)):
            for rid in t:
                served[rid] += 1
                others = p.names[:i] + p.names[i + 1:]
                assert all(o in rx[rid].side for o in others)
        if p.coded:
            (r1,), (r2,) = p.targets
            assert not set(rx[r1].caches) & set(rx[r2].caches)
    assert served == Counter(range(n))
