"""Deployment management: expiring Subscribe records, local Publish
announcements and store-and-forward dissemination inside a local cluster.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

DEFAULT_SUBSCRIBE_TTL = 24 * 3600.0
DEFAULT_PUBLISH_HORIZON = 3600.0


@dataclass(frozen=True)
class SubscribeRecord:
    dev_eui: str
    owner_gateway: str
    expires_at: float
    request_id: str
    created_at: float = 0.0
    renter_gateway: str | None = None
    owner_cluster: int = 0

    def __post_init__(self):
        if self.expires_at <= self.created_at:
            raise ValueError("expires_at must be after created_at")

    def live(self, now: float) -> bool:
        return now < self.expires_at


@dataclass(frozen=True)
class PublishRecord:
    dev_eui: str
    hearing_gateway: str
    rssi: float
    created_at: float


class RecordStore:
    """One gateway's Publish/Subscribe memory."""

    def __init__(self, gateway_id: str, publish_horizon: float = DEFAULT_PUBLISH_HORIZON):
        self.gateway_id = gateway_id
        self.publish_horizon = publish_horizon
        self.subscriptions: dict[str, SubscribeRecord] = {}
        self.publishes: dict[str, PublishRecord] = {}
        self.seen: set[str] = set()
        self._counter = itertools.count(1)

    def next_request_id(self) -> str:
        return f"{self.gateway_id}#{next(self._counter)}"

    def store(self, record: SubscribeRecord, now: float) -> bool:
        """Keep ``record`` unless expired or already seen."""
        if record.request_id in self.seen or not record.live(now):
            return False
        self.seen.add(record.request_id)
        self.subscriptions[record.request_id] = record
        return True

    def match(self, dev_eui: str, now: float) -> SubscribeRecord | None:
        """Most recent live subscription for ``dev_eui``."""
        best = None
        for rec in self.subscriptions.values():
            if rec.dev_eui == dev_eui and rec.live(now):
                if best is None or (rec.created_at, rec.request_id) > (best.created_at, best.request_id):
                    best = rec
        return best

    def publish(self, dev_eui: str, rssi: float, now: float) -> PublishRecord:
        rec = PublishRecord(dev_eui, self.gateway_id, rssi, now)
        self.publishes[dev_eui] = rec
        return rec

    def held_publish(self, dev_eui: str, now: float) -> PublishRecord | None:
        rec = self.publishes.get(dev_eui)
        if rec is not None and now - rec.created_at < self.publish_horizon:
            return rec
        return None


def subscribe(store: RecordStore, dev_eui: str, ttl: float, now: float,
              renter: str | None = None, cluster: int = 0) -> tuple[SubscribeRecord, bool]:
    """Create and store a Subscribe at its owner.

    Returns ``(record, disseminate)``; dissemination is skipped when the
    owner already holds a Publish for the device (immediate local match).
    """
    if ttl <= 0:
        raise ValueError("ttl must be positive")
    rec = SubscribeRecord(dev_eui, store.gateway_id, now + ttl, store.next_request_id(),
                          now, renter, cluster)
    store.store(rec, now)
    return rec, store.held_publish(dev_eui, now) is None


def on_join_request(store: RecordStore, dev_eui: str, rssi: float,
                    now: float) -> SubscribeRecord | None:
    """Record the Publish for a received join and return the matching Subscribe, if any."""
    store.publish(dev_eui, rssi, now)
    return store.match(dev_eui, now)


def expiry_sweep(store: RecordStore, now: float) -> int:
    """Drop expired subscriptions and stale publishes; returns how many were purged."""
    dead = [rid for rid, rec in store.subscriptions.items() if rec.expires_at <= now]
    for rid in dead:
        del store.subscriptions[rid]
    stale = [d for d, rec in store.publishes.items()
             if now - rec.created_at >= store.publish_horizon]
    for d in stale:
        del store.publishes[d]
    return len(dead) + len(stale)


# -- dissemination --------------------------------------------------------------

SEEN = "seen"
STORED = "stored"


@dataclass
class Dissemination:
    """Sender-side state of one gateway spreading one Subscribe.

    Each round picks up to ``fanout`` view neighbours not contacted yet.
    The spread turns cold once a round brings back only already-seen
    answers and every view neighbour has been contacted; the hop budget
    bounds the number of rounds regardless.
    """

    request_id: str
    source: str | None
    fanout: int = 4
    hop_budget: int = 5
    rounds: int = 0
    contacted: set[str] = field(default_factory=set)
    cold: bool = False

    def next_recipients(self, neighbours: Sequence[str], rng: random.Random) -> list[str]:
        fresh = [n for n in neighbours if n != self.source and n not in self.contacted]
        if not fresh or self.cold or self.rounds >= self.hop_budget:
            self.cold = True
            return []
        self.rounds += 1
        picked = rng.sample(fresh, min(self.fanout, len(fresh)))
        self.contacted.update(picked)
        return picked

    def answers(self, answers: Iterable[str], neighbours: Sequence[str]) -> bool:
        """Fold one round's answers in; True when the spread is finished."""
        pool = {n for n in neighbours if n != self.source}
        if all(a == SEEN for a in answers) and pool <= self.contacted:
            self.cold = True
        if self.rounds >= self.hop_budget:
            self.cold = True
        return self.cold


def local_dissemination(record: SubscribeRecord, source: str,
                        views: Mapping[str, Sequence[str]], rng: random.Random,
                        now: float = 0.0, fanout: int = 4, hop_budget: int = 5,
                        stores: Mapping[str, RecordStore] | None = None) -> dict:
    """Round-synchronous run of the dissemination from ``source``.

    ``views`` maps every gateway to its kNN ∪ RPS neighbours. Returns the set
    of holders, the number of forwards and per-gateway forward counts.
    """
    stores = dict(stores) if stores is not None else {g: RecordStore(g) for g in views}
    if not stores[source].store(record, now):
        return {"holders": set(), "forwards": 0, "sent": {}}
    active = {source: Dissemination(record.request_id, None, fanout, hop_budget)}
    sent: dict[str, int] = {}
    while active:
        nxt: dict[str, Dissemination] = {}
        for g in sorted(active):
            d = active[g]
            neigh = list(views.get(g, ()))
            recipients = d.next_recipients(neigh, rng)
            answers = []
            for r in recipients:
                sent[g] = sent.get(g, 0) + 1
                if r not in stores:
                    continue
                if stores[r].store(record, now):
                    answers.append(STORED)
                    nxt[r] = Dissemination(record.request_id, g, fanout, hop_budget)
                else:
                    answers.append(SEEN)
            if recipients and not d.answers(answers, neigh):
                nxt.setdefault(g, d)
        active = nxt
    holders = {g for g, s in stores.items() if record.request_id in s.subscriptions}
    return {"holders": holders, "forwards": sum(sent.values()), "sent": sent}
