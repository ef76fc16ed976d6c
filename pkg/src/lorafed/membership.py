"""Local clustering overlay: device-profile kNN views fed by random peer sampling.

Every gateway keeps a profile of the end-devices it hears (smoothed RSSI per
DevEUI). Gateways periodically exchange profile descriptors with the peers
in their kNN and RPS views and keep the ``k`` most similar gateways.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .radio import NUM_CHANNELS

DEFAULT_RSSI_RANGE = 60.0


@dataclass
class GatewayProfile:
    gateway_id: str
    heard: dict[str, float] = field(default_factory=dict)
    channel_occupation: list[float] = field(default_factory=lambda: [0.0] * NUM_CHANNELS)
    last_heard: dict[str, float] = field(default_factory=dict)
    stamp: float = 0.0

    def observe(self, dev_eui: str, rssi: float, now: float, alpha: float = 0.3) -> bool:
        """Fold one reception into the profile; True if the device is new."""
        self.last_heard[dev_eui] = now
        old = self.heard.get(dev_eui)
        if old is None:
            self.heard[dev_eui] = rssi
            return True
        self.heard[dev_eui] = alpha * rssi + (1.0 - alpha) * old
        return False

    def evict_stale(self, now: float, horizon: float) -> list[str]:
        stale = sorted(d for d, t in self.last_heard.items() if now - t > horizon)
        for d in stale:
            del self.heard[d]
            del self.last_heard[d]
        return stale

    def snapshot(self, now: float | None = None) -> "GatewayProfile":
        return GatewayProfile(self.gateway_id, dict(self.heard), list(self.channel_occupation),
                              {}, self.stamp if now is None else now)


def similarity(a: GatewayProfile, b: GatewayProfile,
               rssi_range: float = DEFAULT_RSSI_RANGE) -> float:
    """Weighted Jaccard over heard devices.

    Shared devices weigh ``1 - |rssi_a - rssi_b| / rssi_range`` (clamped to
    [0, 1]); the sum is divided by the size of the union.
    """
    union = a.heard.keys() | b.heard.keys()
    if not union:
        return 0.0
    total = 0.0
    for dev in a.heard.keys() & b.heard.keys():
        w = 1.0 - abs(a.heard[dev] - b.heard[dev]) / rssi_range
        total += min(1.0, max(0.0, w))
    return total / len(union)


@dataclass
class KnnView:
    k: int = 5
    entries: list[tuple[str, float]] = field(default_factory=list)

    def ids(self) -> list[str]:
        return [gid for gid, _ in self.entries]

    def rebuild(self, scores: Mapping[str, float], self_id: str) -> bool:
        ranked = sorted(((gid, s) for gid, s in scores.items() if gid != self_id),
                        key=lambda e: (-e[1], e[0]))[: self.k]
        changed = [g for g, _ in ranked] != self.ids()
        self.entries = ranked
        return changed


@dataclass
class RpsView:
    r: int = 5
    entries: list[str] = field(default_factory=list)

    def refresh(self, members: Iterable[str], self_id: str, rng: random.Random) -> None:
        pool = sorted(m for m in set(members) if m != self_id)
        self.entries = rng.sample(pool, min(self.r, len(pool)))


class MembershipService:
    """Per-gateway kNN/RPS state."""

    def __init__(self, gateway_id: str, k: int = 5, r: int = 5,
                 rssi_range: float = DEFAULT_RSSI_RANGE, alpha: float = 0.3):
        self.gateway_id = gateway_id
        self.profile = GatewayProfile(gateway_id)
        self.knn = KnnView(k)
        self.rps = RpsView(r)
        self.rssi_range = rssi_range
        self.alpha = alpha
        self.descriptors: dict[str, GatewayProfile] = {}
        self.rounds = 0

    def neighbours(self) -> list[str]:
        out = self.knn.ids()
        out += [g for g in self.rps.entries if g not in out]
        return out

    def outgoing(self, now: float) -> dict[str, GatewayProfile]:
        """Descriptors shipped in an exchange: own profile plus kNN entries."""
        out = {gid: self.descriptors[gid] for gid in self.knn.ids() if gid in self.descriptors}
        out[self.gateway_id] = self.profile.snapshot(now)
        return out

    def merge(self, received: Mapping[str, GatewayProfile]) -> bool:
        """Fold exchanged descriptors in and keep the k most similar gateways."""
        for gid, prof in received.items():
            if gid == self.gateway_id:
                continue
            cur = self.descriptors.get(gid)
            if cur is None or prof.stamp >= cur.stamp:
                self.descriptors[gid] = prof
        candidates = set(self.knn.ids()) | (set(received) - {self.gateway_id})
        scores = {gid: similarity(self.profile, self.descriptors[gid], self.rssi_range)
                  for gid in candidates}
        changed = self.knn.rebuild(scores, self.gateway_id)
        keep = set(self.knn.ids()) | set(self.rps.entries)
        self.descriptors = {g: p for g, p in self.descriptors.items() if g in keep}
        return changed

    def neighbour_occupations(self) -> list[list[float]]:
        return [self.descriptors[g].channel_occupation
                for g in self.knn.ids() if g in self.descriptors]


def gossip_round(svc: MembershipService, peers: Mapping[str, MembershipService],
                 members: Iterable[str], rng: random.Random, now: float = 0.0) -> KnnView:
    """One synchronous gossip round of ``svc`` against live ``peers``.

    Unreachable neighbours (absent from ``peers``) are skipped.
    """
    svc.rps.refresh(members, svc.gateway_id, rng)
    svc.rounds += 1
    for gid in svc.neighbours():
        peer = peers.get(gid)
        if peer is None:
            continue
        peer.merge(svc.outgoing(now))
        svc.merge(peer.outgoing(now))
    return svc.knn

