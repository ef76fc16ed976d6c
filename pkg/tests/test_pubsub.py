import random

import pytest
from hypothesis import given, settings, strategies as st

from lorafed.pubsub import (Dissemination, RecordStore, SubscribeRecord, expiry_sweep,
                            local_dissemination, on_join_request, subscribe)

from oracles import closure, random_views, strongly_connected_views


def record(rid="own#1", now=0.0):
    return SubscribeRecord("dev1", "g0", now + 100.0, rid, now)


def test_dissemination_reaches_all_50_graphs():
    rng = random.Random(99)
    for _ in range(50):
        views = strongly_connected_views(10, rng)
        for src in sorted(views):
            out = local_dissemination(record(f"{src}#1"), src, views, rng)
            assert out["holders"] == set(views)
            # hop budget: no gateway runs more than 5 rounds of fanout 4
            assert all(v <= 4 * 5 for v in out["sent"].values())


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000))
def test_dissemination_equals_view_closure(n, seed):
    rng = random.Random(seed)
    views = random_views(n, rng, k=rng.randint(0, 2), r=rng.randint(0, 1))
    out = local_dissemination(record(), "g0", views, rng)
    assert out["holders"] == closure(views, "g0")


def test_each_gateway_stores_once():
    rng = random.Random(3)
    views = strongly_connected_views(10, rng)
    stores = {g: RecordStore(g) for g in views}
    local_dissemination(record(), "g0", views, rng, stores=stores)
    assert all(len(s.subscriptions) == 1 for s in stores.values())
    # a second spread of the same request is discarded everywhere
    again = local_dissemination(record(), "g0", views, rng, stores=stores)
    assert again["holders"] == set() and again["forwards"] == 0


def test_dissemination_terminates_on_seen_answers():
    d = Dissemination("r", None, fanout=2, hop_budget=5)
    rng = random.Random(0)
    first = d.next_recipients(["a", "b"], rng)
    assert sorted(first) == ["a", "b"]
    assert d.answers(["seen", "seen"], ["a", "b"])
    assert d.next_recipients(["a", "b", "c"], rng) == []


def test_hop_budget_backstop():
    d = Dissemination("r", None, fanout=1, hop_budget=2)
    neigh = ["a", "b", "c", "d"]
    rng = random.Random(0)
    d.next_recipients(neigh, rng)
    d.next_recipients(neigh, rng)
    assert d.next_recipients(neigh, rng) == []
    assert d.rounds == 2


def test_subscribe_match_and_expiry():
    store = RecordStore("g0", publish_horizon=50.0)
    rec, spread = subscribe(store, "dev1", ttl=100.0, now=0.0)
    assert spread and rec.owner_gateway == "g0"
    assert on_join_request(store, "dev1", -90.0, 10.0) == rec
    assert on_join_request(store, "other", -90.0, 10.0) is None
    assert store.match("dev1", 100.0) is None
    assert expiry_sweep(store, 100.0) == 3  # one subscription, two publishes


def test_subscribe_skips_spread_on_held_publish():
    store = RecordStore("g0")
    store.publish("dev1", -80.0, 0.0)
    _, spread = subscribe(store, "dev1", 100.0, 1.0)
    assert not spread


def test_expired_records_rejected():
    store = RecordStore("g0")
    assert not store.store(record(now=0.0), now=200.0)
    with pytest.raises(ValueError):
        SubscribeRecord("d", "g", 0.0, "x", 0.0)
    with pytest.raises(ValueError):
        subscribe(store, "d", 0.0, 0.0)


def test_match_prefers_newest():
    store = RecordStore("g")
    old = SubscribeRecord("d", "a", 500.0, "a#1", 0.0)
    new = SubscribeRecord("d", "b", 500.0, "b#1", 10.0)
    store.store(old, 20.0)
    store.store(new, 20.0)
    assert store.match("d", 20.0) == new
