"""Global overlay between local clusters.

Nested random cluster graphs, per-cluster leader election, Subscribe
flooding along a breadth-first tree and source-routed unicast between
leaders.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping


class RoutingError(RuntimeError):
    pass


class GraphConfigError(ValueError):
    pass


@dataclass
class ClusterGraph:
    clusters: list[int]
    adjacency: dict[int, set[int]]
    params: tuple = ()
    weights: dict[tuple[int, int], float] = field(default_factory=dict)

    def neighbours(self, c: int) -> list[int]:
        return sorted(self.adjacency[c])

    def edges(self) -> list[tuple[int, int]]:
        return sorted((a, b) for a in self.adjacency for b in self.adjacency[a] if a < b)

    def weight(self, a: int, b: int) -> float:
        return self.weights.get((min(a, b), max(a, b)), 1.0)

    def is_connected(self) -> bool:
        if not self.clusters:
            return True
        seen = {self.clusters[0]}
        todo = deque(seen)
        while todo:
            c = todo.popleft()
            for n in self.adjacency[c]:
                if n not in seen:
                    seen.add(n)
                    todo.append(n)
        return len(seen) == len(self.clusters)


def _random_connected(n: int, p: float, rng: random.Random, tries: int) -> list[tuple[int, int]]:
    for _ in range(tries):
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
        adj = {i: set() for i in range(n)}
        for i, j in edges:
            adj[i].add(j)
            adj[j].add(i)
        if ClusterGraph(list(range(n)), adj).is_connected():
            return edges
    raise GraphConfigError(f"no connected G({n}, {p}) after {tries} tries")


def generate_cluster_graph(n1: int, p1: float, n2: int, p2: float,
                           rng: random.Random, max_tries: int = 200) -> ClusterGraph:
    """Two-level nested random graph.

    A top-level G(n1, p1) is drawn; each of its nodes is expanded into a
    G(n2, p2) sub-graph, and each top-level edge becomes one edge between
    randomly chosen members of the two sub-graphs. Cluster ``i * n2 + j`` is
    member ``j`` of top-level node ``i``. Each level is resampled until
    connected.
    """
    if n1 < 1 or n2 < 1:
        raise GraphConfigError("n1 and n2 must be >= 1")
    if not (0 < p1 <= 1 and 0 < p2 <= 1):
        raise GraphConfigError("p1 and p2 must be in (0, 1]")
    top = _random_connected(n1, p1, rng, max_tries)
    clusters = list(range(n1 * n2))
    adj: dict[int, set[int]] = {c: set() for c in clusters}

    def link(a: int, b: int) -> None:
        adj[a].add(b)
        adj[b].add(a)

    for i in range(n1):
        for a, b in _random_connected(n2, p2, rng, max_tries):
            link(i * n2 + a, i * n2 + b)
    for i, k in top:
        link(i * n2 + rng.randrange(n2), k * n2 + rng.randrange(n2))
    return ClusterGraph(clusters, adj, (n1, p1, n2, p2))


def elect_leader(occupations: Mapping[str, float]) -> str:
    """Least-loaded member; ties go to the lowest id."""
    if not occupations:
        raise ValueError("cannot elect a leader in an empty cluster")
    return min(occupations, key=lambda g: (occupations[g], g))


def _distances_to(graph: ClusterGraph, dest: int) -> dict[int, float]:
    dist = {dest: 0.0}
    heap = [(0.0, dest)]
    while heap:
        d, c = heapq.heappop(heap)
        if d > dist[c]:
            continue
        for n in graph.adjacency[c]:
            nd = d + graph.weight(c, n)
            if nd < dist.get(n, float("inf")):
                dist[n] = nd
                heapq.heappush(heap, (nd, n))
    return dist


def build_route(origin: int, destination: int, graph: ClusterGraph) -> list[int]:
    """Shortest path from ``origin`` to ``destination`` (inclusive).

    Dijkstra from the destination, then a greedy walk that always takes the
    lowest-id neighbour still on a shortest path, which yields the
    lexicographically smallest shortest path.
    """
    if origin not in graph.adjacency or destination not in graph.adjacency:
        raise RoutingError(f"unknown cluster in route {origin}->{destination}")
    dist = _distances_to(graph, destination)
    if origin not in dist:
        raise RoutingError(f"cluster {destination} unreachable from {origin}")
    path = [origin]
    c = origin
    while c != destination:
        c = min(n for n in graph.adjacency[c]
                if n in dist and abs(dist[n] + graph.weight(c, n) - dist[c]) < 1e-9)
        path.append(c)
    return path


# -- messages and leader state --------------------------------------------------

SUBSCRIBE_FLOOD = "SubscribeFlood"
PUBLISH_MATCH = "PublishMatch"
DEVICE_DATA = "DeviceData"
KEY_MATERIAL = "KeyMaterial"
UNICAST_KINDS = (PUBLISH_MATCH, DEVICE_DATA, KEY_MATERIAL)


@dataclass
class InterClusterMessage:
    kind: str
    origin: int
    destination: int | None
    request_id: str
    payload: dict = field(default_factory=dict)
    path: list[int] = field(default_factory=list)
    hop: int = 0
    parent: int | None = None
    dest_gateway: str | None = None

    def next_hop(self) -> int:
        return self.path[self.hop + 1]


@dataclass
class LeaderState:
    cluster_id: int
    leader_gateway: str
    term: int = 0
    neighbor_leaders: set[int] = field(default_factory=set)
    route_cache: dict[int, list[int]] = field(default_factory=dict)
    pending_sender_map: dict[str, str] = field(default_factory=dict)
    flood_seen: set[str] = field(default_factory=set)
    flood_parent: dict[str, int | None] = field(default_factory=dict)

    def route(self, destination: int, graph: ClusterGraph) -> list[int]:
        path = self.route_cache.get(destination)
        if path is None:
            path = build_route(self.cluster_id, destination, graph)
            self.route_cache[destination] = path
        return path

    def originate(self, kind: str, destination: int, request_id: str, payload: dict,
                  local_sender: str, graph: ClusterGraph,
                  dest_gateway: str | None = None) -> InterClusterMessage:
        """Stamp a locally produced unicast with our cluster id and its full path."""
        self.pending_sender_map[request_id] = local_sender
        return InterClusterMessage(kind, self.cluster_id, destination, request_id, payload,
                                   list(self.route(destination, graph)), 0, None, dest_gateway)

    def originate_flood(self, request_id: str, payload: dict) -> list[tuple[int, InterClusterMessage]]:
        self.flood_seen.add(request_id)
        self.flood_parent[request_id] = None
        return [(n, InterClusterMessage(SUBSCRIBE_FLOOD, self.cluster_id, None, request_id,
                                        payload, parent=self.cluster_id))
                for n in sorted(self.neighbor_leaders)]

    def on_flood(self, msg: InterClusterMessage) -> tuple[bool, list[tuple[int, InterClusterMessage]]]:
        """First copy of a flood is accepted and relayed to every other neighbour."""
        if msg.request_id in self.flood_seen:
            return False, []
        self.flood_seen.add(msg.request_id)
        self.flood_parent[msg.request_id] = msg.parent
        out = [(n, InterClusterMessage(SUBSCRIBE_FLOOD, msg.origin, None, msg.request_id,
                                       msg.payload, parent=self.cluster_id))
               for n in sorted(self.neighbor_leaders) if n != msg.parent]
        return True, out

    def forward(self, msg: InterClusterMessage) -> tuple[str, object]:
        """Handle a unicast at this leader.

        Returns ``("deliver", gateway_id)`` when destined here, otherwise
        ``("relay", (next_cluster, msg))`` with the hop index advanced.
        """
        if msg.path[msg.hop] != self.cluster_id:
            raise RoutingError(f"message {msg.request_id} at cluster {self.cluster_id}, "
                               f"path expects {msg.path[msg.hop]}")
        if msg.destination == self.cluster_id:
            target = msg.dest_gateway or self.pending_sender_map.get(msg.request_id)
            if target is None:
                raise RoutingError(f"no local recipient for {msg.request_id}")
            return "deliver", target
        nxt = msg.next_hop()
        if nxt not in self.neighbor_leaders:
            raise RoutingError(f"next hop {nxt} is not a neighbour of {self.cluster_id}")
        msg.hop += 1
        return "relay", (nxt, msg)

    def hand_off(self, new_leader: str) -> "LeaderState":
        """State carried over atomically to a newly elected leader."""
        return LeaderState(self.cluster_id, new_leader, self.term + 1, set(self.neighbor_leaders),
                           dict(self.route_cache), dict(self.pending_sender_map),
                           set(self.flood_seen), dict(self.flood_parent))


def propagate_subscribe(graph: ClusterGraph, origin: int, request_id: str,
                        payload: dict | None = None) -> dict:
    """Flood one Subscribe from ``origin`` with unit latency per inter-cluster hop.

    Returns accepted deliveries per cluster, the parent pointer of each
    cluster, the arrival depth, the number of suppressed duplicates and the
    total number of inter-cluster messages.
    """
    leaders = {c: LeaderState(c, f"L{c}", neighbor_leaders=set(graph.adjacency[c]))
               for c in graph.clusters}
    delivered = {origin: 1}
    depth = {origin: 0}
    queue: deque = deque((1, dst, m) for dst, m in leaders[origin].originate_flood(request_id, payload or {}))
    messages = len(queue)
    duplicates = 0
    while queue:
        d, dst, msg = queue.popleft()
        accepted, out = leaders[dst].on_flood(msg)
        if not accepted:
            duplicates += 1
            continue
        delivered[dst] = delivered.get(dst, 0) + 1
        depth[dst] = d
        messages += len(out)
        queue.extend((d + 1, n, m) for n, m in out)
    parents = {c: leaders[c].flood_parent.get(request_id) for c in delivered}
    return {"delivered": delivered, "parents": parents, "depth": depth,
            "duplicates": duplicates, "messages": messages}


def relay_path(path: Iterable[int], graph: ClusterGraph) -> int:
    """Walk a unicast along ``path`` through fresh leaders; returns relay emissions."""
    path = list(path)
    leaders = {c: LeaderState(c, f"L{c}", neighbor_leaders=set(graph.adjacency[c]))
               for c in graph.clusters}
    msg = InterClusterMessage(DEVICE_DATA, path[0], path[-1], "probe", {}, path, 0, None, "gw")
    relays = 0
    at = path[0]
    while True:
        action, arg = leaders[at].forward(msg)
        if action == "deliver":
            return relays
        at, msg = arg
        relays += 1
