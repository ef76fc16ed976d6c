"""Per-gateway runtime state."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from ..admin import DeviceAdmin
from ..consensus import ConsensusRound, HandlerRegistry
from ..membership import MembershipService
from ..pubsub import Dissemination, RecordStore, SubscribeRecord
from ..radio import NUM_CHANNELS, ChannelReceiverState, DutyCycleBudget


@dataclass
class JoinContext:
    """A gateway's side of the handler election for one join request."""

    round: ConsensusRound
    record: SubscribeRecord
    rssi: float
    tx_end: float
    frame: object = None
    learnt: bool = True
    replied: set[str] = field(default_factory=set)


@dataclass
class Spread:
    dissemination: Dissemination
    record: SubscribeRecord
    answers: list[str] = field(default_factory=list)


class Gateway:
    def __init__(self, gateway_id: str, actor: str, cluster: int, position: tuple[float, float],
                 rng: random.Random, *, k: int = 5, r: int = 5, rssi_range: float = 60.0,
                 alpha: float = 0.3, publish_horizon: float = 3600.0,
                 downlink_duty: float = 0.01, occupation_window: float = 3600.0):
        self.id = gateway_id
        self.actor = actor
        self.cluster = cluster
        self.position = position
        self.receiver = ChannelReceiverState()
        self.membership = MembershipService(gateway_id, k, r, rssi_range, alpha)
        self.store = RecordStore(gateway_id, publish_horizon)
        self.registry = HandlerRegistry(gateway_id)
        self.admin = DeviceAdmin(gateway_id, actor, rng)
        self.downlink = DutyCycleBudget(downlink_duty)
        self.occupation_window = occupation_window
        self._downlinks: deque = deque()
        # Channel load promised to devices between election and registration.
        self.reserved: dict[str, tuple[int, float, float]] = {}
        self.joins: dict[tuple[str, int], JoinContext] = {}
        self.spreads: dict[str, Spread] = {}
        self.gossip_pending = False

    @property
    def keys(self):
        return self.admin.keys

    def note_downlink(self, channel: int, airtime: float, now: float) -> None:
        self._downlinks.append((now, channel, airtime))

    def reserve(self, dev_eui: str, channel: int, load: float, until: float) -> None:
        self.reserved[dev_eui] = (channel, load, until)

    def occupation_vector(self, now: float) -> list[float]:
        """Projected uplink load of handled and reserved devices plus recent
        downlink airtime, per channel."""
        while self._downlinks and self._downlinks[0][0] <= now - self.occupation_window:
            self._downlinks.popleft()
        occ = self.registry.channel_load()
        for dev, (ch, load, until) in list(self.reserved.items()):
            if until < now:
                del self.reserved[dev]
            else:
                occ[ch] += load
        for _, ch, airtime in self._downlinks:
            occ[ch] += airtime / self.occupation_window
        return [min(1.0, max(0.0, x)) for x in occ]

    def occupation(self, now: float) -> float:
        return sum(self.occupation_vector(now)) / NUM_CHANNELS
