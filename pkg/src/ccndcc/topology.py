"""Tree topologies: server, routers, edge caches and sinks."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

SERVER, ROUTER, CACHE, SINK = "server", "router", "cache", "sink"
PROFILES = ("paper", "minimal", "custom")


@dataclass
class Topology:
    kinds: dict[int, str]
    parent: dict[int, int]
    capacity: dict[tuple[int, int], int]
    caches: list[int]
    sink_cache: dict[int, int] = field(default_factory=dict)

    @property
    def server(self) -> int:
        return next(n for n, k in self.kinds.items() if k == SERVER)

    @property
    def K(self) -> int:
        return len(self.caches)

    @property
    def sinks(self) -> list[int]:
        return sorted(self.sink_cache)

    def children(self, node: int) -> list[int]:
        return sorted(c for c, p in self.parent.items() if p == node)

    def depth(self, node: int) -> int:
        d = 0
        while node in self.parent:
            node = self.parent[node]
            d += 1
        return d

    def path_to_server(self, node: int) -> list[int]:
        path = [node]
        while node in self.parent:
            node = self.parent[node]
            path.append(node)
        return path

    def diameter(self) -> int:
        """Longest sink-to-sink path through the server side of the tree."""
        depths = sorted((self.depth(s) for s in self.sinks), reverse=True)
        return depths[0] + (depths[1] if len(depths) > 1 else 0)

    def links(self) -> list[tuple[int, int]]:
        return sorted(self.capacity)


def _check(topo: Topology) -> Topology:
    servers = [n for n, k in topo.kinds.items() if k == SERVER]
    if len(servers) != 1:
        raise ValueError(f"topology needs exactly one server, found {len(servers)}")
    root = servers[0]
    for node in topo.kinds:
        seen = set()
        cur = node
        while cur != root:
            if cur in seen or cur not in topo.parent:
                raise ValueError(f"node {node} has no path to the server")
            seen.add(cur)
            cur = topo.parent[cur]
    for c in topo.caches:
        if topo.kinds.get(c) != CACHE:
            raise ValueError(f"node {c} listed as edge cache is a {topo.kinds.get(c)}")
    for s, k in topo.sink_cache.items():
        if topo.parent.get(s) != topo.caches[k]:
            raise ValueError(f"sink {s} does not hang below edge cache {k}")
    if not topo.sink_cache:
        raise ValueError("topology has no sinks")
    for (u, v), cap in topo.capacity.items():
        if cap < 0:
            raise ValueError(f"link {u}->{v} has negative capacity")
    return topo


def _add_link(topo: Topology, child: int, parent: int, cap: int) -> None:
    topo.parent[child] = parent
    topo.capacity[(child, parent)] = cap
    topo.capacity[(parent, child)] = cap


def build_topology(profile: str = "paper", K: int = 4, node_count: int = 20, capacity: int = 50,
                   overrides: list | None = None, edges: list | None = None,
                   kinds: dict | None = None) -> Topology:
    """Build a tree with the server at the root and sinks at the leaves.

    ``paper``: server, one core router, ``ceil(K/2)`` aggregation routers,
    ``K`` edge caches and the remaining nodes as sinks spread round-robin
    over the caches (20 nodes: 12 sinks).  ``minimal``: server, one router,
    ``K`` caches, one sink per cache.  ``custom``: explicit ``edges``
    (child, parent) and ``kinds``.  ``overrides`` lists ``[u, v, cap]``
    per-direction link capacities.
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown topology profile {profile!r}")
    if K < 1:
        raise ValueError("K must be >= 1")
    topo = Topology({}, {}, {}, [])
    if profile == "custom":
        if not edges or not kinds:
            raise ValueError("custom topology needs edges and kinds")
        topo.kinds = {int(n): k for n, k in kinds.items()}
        for child, parent in edges:
            if child in topo.parent:
                raise ValueError(f"node {child} has two parents; topology must be a tree")
            _add_link(topo, int(child), int(parent), capacity)
        topo.caches = sorted(n for n, k in topo.kinds.items() if k == CACHE)
        for s in sorted(n for n, k in topo.kinds.items() if k == SINK):
            p = topo.parent.get(s)
            if p not in topo.caches:
                raise ValueError(f"sink {s} is not attached to an edge cache")
            topo.sink_cache[s] = topo.caches.index(p)
    else:
        topo.kinds[0] = SERVER
        topo.kinds[1] = ROUTER
        _add_link(topo, 1, 0, capacity)
        nxt = 2
        if profile == "paper":
            aggs = []
            for _ in range((K + 1) // 2):
                topo.kinds[nxt] = ROUTER
                _add_link(topo, nxt, 1, capacity)
                aggs.append(nxt)
                nxt += 1
            uppers = [aggs[k // 2] for k in range(K)]
            n_sinks = node_count - nxt - K
        else:
            uppers = [1] * K
            n_sinks = K
        if node_count < K + 2 or n_sinks < K:
            raise ValueError(f"{node_count} nodes cannot hold {K} caches with a sink each")
        for k in range(K):
            topo.kinds[nxt] = CACHE
            _add_link(topo, nxt, uppers[k], capacity)
            topo.caches.append(nxt)
            nxt += 1
        for s in range(n_sinks):
            k = s % K
            topo.kinds[nxt] = SINK
            _add_link(topo, nxt, topo.caches[k], capacity)
            topo.sink_cache[nxt] = k
            nxt += 1
    for u, v, cap in overrides or ():
        if (u, v) not in topo.capacity:
            raise ValueError(f"override for unknown link {u}->{v}")
        topo.capacity[(u, v)] = int(cap)
    return _check(topo)


def bfs_order(topo: Topology) -> list[int]:
    order, todo = [], deque([topo.server])
    while todo:
        n = todo.popleft()
        order.append(n)
        todo.extend(topo.children(n))
    return order
