"""In-process reliable message bus between gateways.

Stands in for the REST transport between gateways: FIFO per sender/receiver
pair (constant latency plus the scheduler's seq tiebreak), no loss.
Messages addressed to ``leader_address(cluster)`` are resolved to the
cluster's leader at delivery time, so traffic in flight during a leader
change reaches the new leader.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any

from .scheduler import EventKind, Scheduler

LEADER_PREFIX = "leader:"


def leader_address(cluster: str) -> str:
    return LEADER_PREFIX + cluster


@dataclass
class BusMessage:
    kind: str
    src: str
    dst: str
    body: dict = field(default_factory=dict)
    inter_cluster: bool = False


class ClusterBus:
    def __init__(self, scheduler: Scheduler, intra_latency: float = 0.0,
                 inter_latency: float = 0.05):
        self.scheduler = scheduler
        self.intra_latency = intra_latency
        self.inter_latency = inter_latency
        self.members: dict[str, list[str]] = {}
        self.cluster_of: dict[str, str] = {}
        self.leaders: dict[str, str] = {}
        self.counts: Counter = Counter()
        self.inter_cluster_messages = 0

    def register(self, gateway_id: str, cluster: str) -> None:
        self.members.setdefault(cluster, []).append(gateway_id)
        self.cluster_of[gateway_id] = cluster

    def cluster_members(self, cluster: str) -> list[str]:
        return self.members.get(cluster, [])

    def resolve(self, address: str) -> str:
        if address.startswith(LEADER_PREFIX):
            return self.leaders[address[len(LEADER_PREFIX):]]
        return address

    def send(self, kind: str, src: str, dst: str, body: dict | None = None,
             inter_cluster: bool = False) -> BusMessage:
        msg = BusMessage(kind, src, dst, body or {}, inter_cluster)
        self.counts[kind] += 1
        if inter_cluster:
            self.inter_cluster_messages += 1
        latency = self.inter_latency if inter_cluster else self.intra_latency
        self.scheduler.at(self.scheduler.now + latency, EventKind.CLUSTER_MESSAGE_DELIVERY,
                          dst, msg)
        return msg

    def stats(self) -> dict[str, Any]:
        return {"by_kind": dict(sorted(self.counts.items())),
                "inter_cluster": self.inter_cluster_messages}
