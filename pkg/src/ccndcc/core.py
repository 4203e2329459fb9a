"""Coded caching combinatorics: colors, memory partition, placement and delivery.

Everything here is a pure function of its inputs.  Memory is measured in
files, rates in files per delivery round.  Memory fractions and rates are
kept as :class:`fractions.Fraction` so that partition bookkeeping is exact.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from itertools import zip_longest
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np


class ChunkId(NamedTuple):
    """A chunk of a file.  Chunk indices are 1-based."""

    file: int
    index: int


@dataclass(frozen=True)
class PopularityLevel:
    """One popularity level: ``files`` files read by ``users_per_cache``
    users per cache, each user reaching ``degree`` consecutive caches."""

    index: int
    files: int
    users_per_cache: int
    degree: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"level index must be >= 1, got {self.index}")
        if self.files < 1:
            raise ValueError(f"level {self.index}: file count must be >= 1")
        if self.users_per_cache < 0:
            raise ValueError(f"level {self.index}: users_per_cache must be >= 0")
        if self.degree < 1:
            raise ValueError(f"level {self.index}: access degree must be >= 1")

    @property
    def weight(self) -> Fraction:
        # N_i U_i / d_i: numerator of the per-level rate curve
        return Fraction(self.files * self.users_per_cache, self.degree)

    @property
    def full_memory(self) -> Fraction:
        """Memory at which every user of the level finds whole files locally."""
        return Fraction(self.files, self.degree)


def validate_levels(K: int, levels: Sequence[PopularityLevel]) -> None:
    if K < 1:
        raise ValueError("cache count K must be >= 1")
    if not levels:
        raise ValueError("at least one popularity level is required")
    for pos, lvl in enumerate(levels, start=1):
        if lvl.index != pos:
            raise ValueError(f"levels must be numbered 1..L in order, got {lvl.index} at {pos}")
        if K % lvl.degree:
            raise ValueError(f"level {lvl.index}: degree {lvl.degree} does not divide K={K}")
    for a, b in zip(levels, levels[1:]):
        if a.files > b.files:
            raise ValueError(
                f"level {a.index} has more files than less popular level {b.index}")


def assign_colors(K: int, d_max: int) -> tuple[list[int], int]:
    """Color caches cyclically; return (color per cache, queue count K/d_max)."""
    if d_max < 1:
        raise ValueError("d_max must be >= 1")
    if K < 1 or K % d_max:
        raise ValueError(f"cache count K={K} is not a multiple of d_max={d_max}")
    return [k % d_max for k in range(K)], K // d_max


# ---------------------------------------------------------------------------
# Per-level rate model and the M-feasible partition
# ---------------------------------------------------------------------------

def share_point(level: PopularityLevel, K: int) -> Fraction:
    """Memory where the level's memory-sharing segment meets the rate curve."""
    return Fraction(2 * level.files, level.degree * (K + 1))


def level_rate(level: PopularityLevel, K: int, memory) -> Fraction:
    """Rate contributed by one level holding ``memory`` files per cache.

    ``K*U`` with no memory, ``N U/(d x) - U`` on the coded branch and zero
    once whole files fit.  Below :func:`share_point` the rate follows the
    memory-sharing chord between those two regimes, which keeps the curve
    convex in ``memory``.
    """
    x = Fraction(memory)
    if x < 0:
        raise ValueError("memory must be non-negative")
    U = level.users_per_cache
    if U == 0 or x >= level.full_memory:
        return Fraction(0)
    t = share_point(level, K)
    if x <= t:
        slope = Fraction((K + 1) ** 2 * U * U) / (4 * level.weight)
        return K * U - slope * x
    return level.weight / x - U


@dataclass(frozen=True)
class MemoryPartition:
    """Memory fractions per level plus the (H, I, J) class of each level.

    ``surplus`` is memory beyond what every cached level can use; it is
    booked on ``surplus_level`` so that the fractions still sum to one.
    """

    alphas: tuple[Fraction, ...]
    classes: tuple[str, ...]
    surplus: Fraction = Fraction(0)
    surplus_level: int | None = None

    @property
    def H(self) -> frozenset[int]:
        return frozenset(i + 1 for i, c in enumerate(self.classes) if c == "H")

    @property
    def I(self) -> frozenset[int]:  # noqa: E743
        return frozenset(i + 1 for i, c in enumerate(self.classes) if c == "I")

    @property
    def J(self) -> frozenset[int]:
        return frozenset(i + 1 for i, c in enumerate(self.classes) if c == "J")

    def usable_memory(self, level_index: int, M) -> Fraction:
        """Memory the level actually fills, surplus excluded."""
        mem = self.alphas[level_index - 1] * Fraction(M)
        if level_index == self.surplus_level:
            mem -= self.surplus
        return mem


@dataclass(frozen=True)
class Breakpoint:
    mu: float
    kind: str  # "enter" (H -> I) or "full" (I -> J)
    level: int


@dataclass(frozen=True)
class PartitionTable:
    """Interval table: partition (H_t, I_t, J_t) holds for M in [Y_t, Y_{t+1})."""

    breakpoints: tuple[Breakpoint, ...]
    limits: tuple[float, ...]
    assignments: tuple[tuple[frozenset, frozenset, frozenset], ...]


def partition_table(K: int, levels: Sequence[PopularityLevel]) -> PartitionTable:
    """Thresholds, promotions and interval limits for every M.

    The thresholds live on the water level mu: a level in I holds
    ``sqrt(N U/d) * mu`` memory.  It enters I at ``2 sqrt(N/(dU))/(K+1)``
    (jumping across its memory-sharing segment) and is full at
    ``sqrt(N/(dU))``.
    """
    validate_levels(K, levels)
    points = []
    for lvl in levels:
        if lvl.users_per_cache == 0:
            continue
        full = math.sqrt(lvl.files / (lvl.degree * lvl.users_per_cache))
        points.append(Breakpoint(2 * full / (K + 1), "enter", lvl.index))
        points.append(Breakpoint(full, "full", lvl.index))
    points.sort(key=lambda b: (b.mu, 0 if b.kind == "enter" else 1, b.level))

    by_index = {lvl.index: lvl for lvl in levels}
    H = frozenset(by_index)
    I: frozenset = frozenset()
    J: frozenset = frozenset()
    limits, assignments = [], []
    for bp in points:
        lvl = by_index[bp.level]
        offset = 0.0
        if bp.kind == "enter":
            H, I = H - {bp.level}, I | {bp.level}
            offset = float(share_point(lvl, K))
        else:
            I, J = I - {bp.level}, J | {bp.level}
        s_i = sum(math.sqrt(by_index[i].weight) for i in I)
        t_j = sum(float(by_index[j].full_memory) for j in J)
        limits.append(bp.mu * s_i + t_j - offset)
        assignments.append((H, I, J))
    return PartitionTable(tuple(points), tuple(limits), tuple(assignments))


def m_feasible_partition(K: int, levels: Sequence[PopularityLevel], M) -> MemoryPartition:
    """Memory split across levels that minimizes :func:`expected_rate`."""
    M = Fraction(M)
    if M < 0:
        raise ValueError("cache memory M must be >= 0")
    table = partition_table(K, levels)
    L = len(levels)
    by_index = {lvl.index: lvl for lvl in levels}
    if M == 0 or not table.limits:
        alphas = [Fraction(0)] * L
        surplus_level = None
        if M > 0:
            # nobody requests anything: park the memory on level 1
            alphas[0] = Fraction(1)
            surplus_level = 1
        return MemoryPartition(tuple(alphas), ("H",) * L, M, surplus_level)

    t = 0
    for pos, y in enumerate(table.limits):
        if y <= M:
            t = pos
    # a level entering I exactly at M would hold nothing: keep it in H
    while t > 0 and table.breakpoints[t].kind == "enter" and table.limits[t] >= float(M):
        t -= 1
    H, I, J = table.assignments[t]
    memory: dict[int, Fraction] = {i: Fraction(0) for i in by_index}
    for j in J:
        memory[j] = by_index[j].full_memory
    spare = M - sum(memory[j] for j in J)

    surplus = Fraction(0)
    if I:
        bp = table.breakpoints[t]
        order = sorted(I)
        roots = {i: math.sqrt(by_index[i].weight) for i in order}
        if bp.kind == "enter":
            seg_end = table.limits[t] + float(share_point(by_index[bp.level], K))
        else:
            seg_end = table.limits[t]
        if bp.kind == "enter" and float(M) < seg_end:
            # water level frozen at mu_t; the new level walks its sharing segment
            for i in order:
                if i != bp.level:
                    memory[i] = Fraction(roots[i] * bp.mu).limit_denominator(10**12)
            memory[bp.level] = spare - sum(memory[i] for i in order if i != bp.level)
        else:
            mu = float(spare) / sum(roots.values())
            for i in order[:-1]:
                memory[i] = Fraction(roots[i] * mu).limit_denominator(10**12)
            memory[order[-1]] = spare - sum(memory[i] for i in order[:-1])
        for i in order:
            # float noise at the interval edges
            memory[i] = min(max(memory[i], Fraction(0)), by_index[i].full_memory)
        drift = spare - sum(memory[i] for i in order)
        if drift:
            fix = max(order, key=lambda i: by_index[i].full_memory - memory[i])
            memory[fix] += drift
    else:
        surplus = spare
    surplus_level = None
    if surplus > 0:
        surplus_level = min(J) if J else 1
        memory[surplus_level] += surplus

    alphas = tuple(memory[i] / M for i in sorted(by_index))
    classes = tuple("J" if i in J else "I" if i in I else "H" for i in sorted(by_index))
    return MemoryPartition(alphas, classes, surplus, surplus_level)


def expected_rate(partition: MemoryPartition, K: int, levels: Sequence[PopularityLevel], M) -> Fraction:
    """Expected server rate of an M-feasible partition.

    Inside an interval where no level sits on its sharing segment this is
    ``sum_H K U_h + (sum_I sqrt(N_i U_i/d_i))^2 / (M - sum_J N_j/d_j) - sum_I U_i``.
    """
    M = Fraction(M)
    reserved = sum((levels[j - 1].full_memory for j in partition.J), Fraction(0))
    if partition.I and M - reserved <= 0:
        raise ValueError("invalid partition: no memory left for partially cached levels")
    total = Fraction(0)
    for lvl in levels:
        total += level_rate(lvl, K, partition.usable_memory(lvl.index, M))
    return total


def closed_form_rate(K: int, levels: Sequence[PopularityLevel], H, I, J, M) -> float:
    """Rate of (H, I, J) with pure water-filling over I."""
    by_index = {lvl.index: lvl for lvl in levels}
    rate = sum(K * by_index[h].users_per_cache for h in H)
    if I:
        spare = float(M) - sum(float(by_index[j].full_memory) for j in J)
        if spare <= 0:
            raise ValueError("invalid partition: no memory left for partially cached levels")
        roots = sum(math.sqrt(by_index[i].weight) for i in I)
        rate += roots * roots / spare - sum(by_index[i].users_per_cache for i in I)
    return float(rate)


# ---------------------------------------------------------------------------
# Placement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CacheContents:
    colors: tuple[int, ...]
    stored: tuple[frozenset, ...]

    @property
    def K(self) -> int:
        return len(self.colors)

    def visible(self, caches: Iterable[int]) -> frozenset:
        out: frozenset = frozenset()
        for k in caches:
            out |= self.stored[k]
        return out

    def indices(self, cache: int, file: int) -> frozenset[int]:
        return frozenset(c.index for c in self.stored[cache] if c.file == file)


def color_part(index: int, chunks: int, degree: int) -> int:
    """Which of the ``degree`` equal parts of a file a chunk index falls in."""
    return (index - 1) // (chunks // degree)


def part_indices(part: int, chunks: int, degree: int) -> range:
    size = chunks // degree
    return range(part * size + 1, (part + 1) * size + 1)


def round_half_down(x: Fraction) -> int:
    floor = math.floor(x)
    return floor + 1 if x - floor > Fraction(1, 2) else floor


def chunks_per_file(level: PopularityLevel, memory: Fraction, chunks: int) -> int:
    """Chunks of each level file that one cache stores."""
    return round_half_down(Fraction(memory) * chunks / level.files)


def file_ranges(levels: Sequence[PopularityLevel]) -> list[range]:
    """Global file ids per level: level 1 gets 0..N_1-1 and so on."""
    out, start = [], 0
    for lvl in levels:
        out.append(range(start, start + lvl.files))
        start += lvl.files
    return out


def decentralized_placement(levels: Sequence[PopularityLevel], partition: MemoryPartition,
                            K: int, M, chunks: int, seed: int,
                            d_max: int | None = None) -> CacheContents:
    """Each cache picks its chunks of every file independently at random.

    A cache only draws from its own part of a file (part ``k mod d``), so a
    user spanning ``d`` consecutive caches sees ``d`` disjoint parts.  Every
    (cache, file) pair has its own random stream.
    """
    validate_levels(K, levels)
    d_max = d_max or max(lvl.degree for lvl in levels)
    colors, _ = assign_colors(K, d_max)
    for lvl in levels:
        if chunks % lvl.degree:
            raise ValueError(f"chunk count {chunks} not divisible by degree {lvl.degree}")
    stored: list[set] = [set() for _ in range(K)]
    for lvl, files in zip(levels, file_ranges(levels)):
        memory = partition.usable_memory(lvl.index, M)
        if memory <= 0:
            continue
        count = chunks_per_file(lvl, memory, chunks)
        part_size = chunks // lvl.degree
        if count > part_size:
            raise ValueError(
                f"level {lvl.index}: {count} chunks per file exceed the {part_size}-chunk part")
        for k in range(K):
            pool = np.fromiter(part_indices(k % lvl.degree, chunks, lvl.degree), dtype=np.int64)
            for n in files:
                rng = np.random.default_rng([seed, k, n])
                picked = rng.choice(pool, size=count, replace=False)
                stored[k].update(ChunkId(n, int(i)) for i in picked)
    return CacheContents(tuple(colors), tuple(frozenset(s) for s in stored))


# ---------------------------------------------------------------------------
# Delivery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class User:
    """A requester: reaches ``caches``, wants ``file``; ``extra`` lists chunk
    indices it gets elsewhere (found en route)."""

    uid: int
    caches: tuple[int, ...]
    file: int
    extra: frozenset[int] = frozenset()


@dataclass(frozen=True)
class Transmission:
    operands: tuple[ChunkId, ...]
    targets: tuple[frozenset[int], ...]

    @property
    def served(self) -> frozenset[int]:
        out: frozenset = frozenset()
        for t in self.targets:
            out |= t
        return out

    @property
    def coded(self) -> bool:
        return len(self.operands) > 1


@dataclass(frozen=True)
class DeliverySchedule:
    transmissions: tuple[Transmission, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.transmissions)

    def __iter__(self):
        return iter(self.transmissions)


def _disjoint(a: User, b: User) -> bool:
    return not set(a.caches) & set(b.caches)


def delivery_schedule(users: Sequence[User], cache_contents: CacheContents,
                      chunks: int, catalog: int | None = None) -> DeliverySchedule:
    """XOR delivery of every user's missing chunks.

    A missing chunk of user ``u`` is grouped with the largest set ``S`` of
    users (greedy, in list order) that hold it and share no cache with each
    other or with ``u``.  Each group ``S`` then gets ``max_k |V_k,S|``
    transmissions, one chunk per member, larger groups first.  Uncoded
    transmissions of the same chunk are merged into one multicast.
    """
    if catalog is not None:
        for u in users:
            if not 0 <= u.file < catalog:
                raise ValueError(f"user {u.uid} demands unknown file {u.file}")
    side = {u.uid: cache_contents.visible(u.caches) for u in users}
    groups: dict[tuple[int, ...], dict[int, list[ChunkId]]] = defaultdict(lambda: defaultdict(list))
    for u in users:
        for j in range(1, chunks + 1):
            c = ChunkId(u.file, j)
            if c in side[u.uid] or j in u.extra:
                continue
            members = [u]
            for v in users:
                if v.uid == u.uid or c not in side[v.uid]:
                    continue
                if all(_disjoint(v, w) for w in members):
                    members.append(v)
            key = tuple(sorted(w.uid for w in members))
            groups[key][u.uid].append(c)

    out: list[Transmission] = []
    singles: dict[ChunkId, set[int]] = {}
    for key in sorted(groups, key=lambda s: (-len(s), s)):
        per_user = groups[key]
        members = [uid for uid in key if per_user.get(uid)]
        for row in zip_longest(*(per_user[uid] for uid in members)):
            pairs = [(c, uid) for c, uid in zip(row, members) if c is not None]
            if len(pairs) == 1:
                c, uid = pairs[0]
                if c in singles:
                    singles[c].add(uid)
                    continue
                singles[c] = {uid}
                out.append(Transmission((c,), (frozenset(),)))  # patched below
                continue
            out.append(Transmission(tuple(c for c, _ in pairs),
                                    tuple(frozenset({uid}) for _, uid in pairs)))
    final = []
    for tx in out:
        if not tx.coded:
            c = tx.operands[0]
            tx = Transmission((c,), (frozenset(singles[c]),))
        final.append(tx)
    return DeliverySchedule(tuple(final))


def coding_gain(uncoded_count: int, schedule) -> Fraction:
    n = len(schedule)
    if n == 0:
        raise ValueError("coding gain undefined for an empty schedule")
    if uncoded_count < n:
        raise ValueError("uncoded count is smaller than the coded schedule")
    return Fraction(uncoded_count, n)


def replay(users: Sequence[User], cache_contents: CacheContents, schedule: DeliverySchedule,
           payloads: Mapping[ChunkId, bytes] | None = None) -> dict[int, dict[int, bytes | None]]:
    """Decode a schedule at every user; return recovered chunks per user.

    Raises ``ValueError`` if a served user lacks an operand it needs.
    """
    side = {u.uid: cache_contents.visible(u.caches) for u in users}
    got: dict[int, dict[int, bytes | None]] = {u.uid: {} for u in users}
    by_uid = {u.uid: u for u in users}
    for tx in schedule:
        for pos, targets in enumerate(tx.targets):
            for uid in targets:
                others = [c for i, c in enumerate(tx.operands) if i != pos]
                if any(c not in side[uid] for c in others):
                    raise ValueError(f"user {uid} cannot decode {tx.operands}")
                own = tx.operands[pos]
                if own.file != by_uid[uid].file:
                    raise ValueError(f"user {uid} was sent a chunk of another file")
                value = None
                if payloads is not None:
                    wire = reduce(xor_bytes, (payloads[c] for c in tx.operands))
                    value = reduce(xor_bytes, (payloads[c] for c in others), wire)
                got[uid][own.index] = value
    return got


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError(f"payload length mismatch: {len(a)} != {len(b)}")
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")
