"""Deterministic event queue ordered by (time, priority, seq)."""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any


class EventKind(enum.IntEnum):
    # Value doubles as the same-instant priority: receptions finish before
    # new transmissions start, so back-to-back frames do not overlap.
    RADIO_RX_COMPLETE = 0
    RADIO_TX_START = 1
    DEVICE_WAKE = 2
    JOIN_ACCEPT_DELIVERY = 3
    CLUSTER_MESSAGE_DELIVERY = 4
    CONSENSUS_TIMER = 5
    DISSEMINATION_TIMER = 6
    GOSSIP_TICK = 7
    LEADER_TICK = 8
    PUBSUB_EXPIRY_TICK = 9
    JOIN_WINDOW_CLOSE = 10


@dataclass(order=False)
class SimEvent:
    time: float
    kind: EventKind
    target: str
    payload: Any = None
    seq: int = field(default=-1)


class SchedulingError(RuntimeError):
    pass


class Scheduler:
    def __init__(self) -> None:
        self._heap: list[tuple[float, int, int, SimEvent]] = []
        self._seq = itertools.count()
        self.now = 0.0
        self.executed = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, event: SimEvent) -> SimEvent:
        if event.time < self.now:
            raise SchedulingError(
                f"event {event.kind.name} at t={event.time} is before now={self.now}")
        event.seq = next(self._seq)
        heapq.heappush(self._heap, (event.time, int(event.kind), event.seq, event))
        return event

    def at(self, time: float, kind: EventKind, target: str, payload: Any = None) -> SimEvent:
        return self.schedule(SimEvent(time, kind, target, payload))

    def pop(self) -> SimEvent | None:
        if not self._heap:
            return None
        time, _, _, event = heapq.heappop(self._heap)
        self.now = time
        self.executed += 1
        return event

    def peek_time(self) -> float | None:
        return self._heap[0][0] if self._heap else None
