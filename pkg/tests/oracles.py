"""Brute-force reference implementations shared by unit and acceptance tests."""

import random

import networkx as nx

from lorafed.intercluster import generate_cluster_graph
from lorafed.radio import (DEFAULT_PHY, ChannelReceiverState, FrameKind, begin_reception,
                           end_reception, make_frame)


def overlap_oracle(frames):
    """Delivered = frames no other same-channel frame overlaps (half-open intervals)."""
    ok = set()
    for i, f in enumerate(frames):
        if not any(j != i and g.channel == f.channel and g.tx_start < f.tx_end and f.tx_start < g.tx_end
                   for j, g in enumerate(frames)):
            ok.add(i)
    return ok


def run_receiver(frames):
    events = []
    for i, f in enumerate(frames):
        events.append((f.tx_start, 1, i))
        events.append((f.tx_end, 0, i))  # receptions finish before new starts
    state = ChannelReceiverState()
    got = set()
    for _, kind, i in sorted(events):
        if kind == 1:
            begin_reception(state, frames[i], frames[i].tx_start)
        elif end_reception(state, frames[i]) is not None:
            got.add(i)
    return got


def random_schedule(rng, max_frames=100):
    n = rng.randint(1, max_frames)
    return [make_frame(FrameKind.DATA_UPLINK, f"d{i}", rng.randrange(8), rng.randint(7, 12),
                       rng.randint(1, 51), round(rng.uniform(0, 60), 3), (0, 0), DEFAULT_PHY)
            for i in range(n)]


def closure(views, source):
    seen, todo = {source}, [source]
    while todo:
        g = todo.pop()
        for n in views.get(g, ()):
            if n not in seen:
                seen.add(n)
                todo.append(n)
    return seen


def random_views(n, rng, k=3, r=2):
    ids = [f"g{i}" for i in range(n)]
    return {g: sorted(set(rng.sample([o for o in ids if o != g], min(k + r, n - 1))))
            for g in ids}


def strongly_connected_views(n, rng):
    while True:
        views = random_views(n, rng, k=rng.randint(1, 3), r=rng.randint(0, 2))
        if all(closure(views, g) == set(views) for g in views):
            return views


def to_nx(graph):
    g = nx.Graph()
    g.add_nodes_from(graph.clusters)
    g.add_edges_from(graph.edges())
    return g


def random_cluster_graphs(count, seed, max_clusters=15):
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        n1, n2 = rng.randint(1, 5), rng.randint(1, 3)
        if n1 * n2 > max_clusters:
            continue
        out.append(generate_cluster_graph(n1, rng.uniform(0.2, 1.0), n2, rng.uniform(0.2, 1.0), rng))
    return out
