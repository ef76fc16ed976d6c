import random

import pytest
from hypothesis import given, settings, strategies as st

from lorafed.membership import (GatewayProfile, KnnView, MembershipService, gossip_round,
                                similarity)

profiles = st.dictionaries(st.sampled_from([f"d{i}" for i in range(12)]),
                           st.floats(-137, -40), max_size=12)


def brute_similarity(a, b, rng_=60.0):
    devs = set(a) | set(b)
    if not devs:
        return 0.0
    total = 0.0
    for d in devs:
        if d in a and d in b:
            total += min(1.0, max(0.0, 1 - abs(a[d] - b[d]) / rng_))
    return total / len(devs)


@given(profiles, profiles)
def test_similarity_oracle_and_symmetry(a, b):
    pa, pb = GatewayProfile("a", dict(a)), GatewayProfile("b", dict(b))
    s = similarity(pa, pb)
    assert s == pytest.approx(brute_similarity(a, b))
    assert s == pytest.approx(similarity(pb, pa))
    assert 0.0 <= s <= 1.0


def test_identical_profiles_similarity_one():
    p = GatewayProfile("a", {"d1": -80.0, "d2": -100.0})
    assert similarity(p, p.snapshot()) == 1.0


def test_observe_ema():
    p = GatewayProfile("g")
    assert p.observe("d", -100.0, 0.0)
    assert not p.observe("d", -90.0, 1.0, alpha=0.5)
    assert p.heard["d"] == -95.0
    assert p.evict_stale(100.0, 50.0) == ["d"]
    assert p.heard == {}


@given(st.dictionaries(st.sampled_from([f"g{i}" for i in range(10)]), st.floats(0, 1)),
       st.integers(1, 6))
def test_knn_rebuild_is_exact_top_k(scores, k):
    view = KnnView(k)
    view.rebuild(scores, "g0")
    expected = sorted((g for g in scores if g != "g0"), key=lambda g: (-scores[g], g))[:k]
    assert view.ids() == expected


def make_cluster(n, rng):
    devs = [f"d{i}" for i in range(20)]
    services = {}
    for i in range(n):
        svc = MembershipService(f"g{i}", k=3, r=10)
        for d in rng.sample(devs, rng.randint(3, 12)):
            svc.profile.observe(d, rng.uniform(-130, -60), 0.0)
        services[svc.gateway_id] = svc
    return services


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), st.integers(0, 10_000))
def test_gossip_converges_to_exhaustive_knn(n, seed):
    rng = random.Random(seed)
    services = make_cluster(n, rng)
    members = list(services)
    for _ in range(2):
        for gid in sorted(services):
            gossip_round(services[gid], services, members, rng)
    for gid, svc in services.items():
        scores = {o: similarity(svc.profile, services[o].profile) for o in services if o != gid}
        expected = sorted(scores, key=lambda o: (-scores[o], o))[:3]
        assert svc.knn.ids() == expected


def test_gossip_skips_unreachable_peers():
    rng = random.Random(1)
    services = make_cluster(4, rng)
    live = {g: s for g, s in services.items() if g != "g3"}
    gossip_round(services["g0"], live, list(services), rng)
    assert "g3" not in services["g0"].knn.ids()
