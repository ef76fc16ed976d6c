"""Class-A end-device lifecycle: join, periodic uplink, periodic rejoin."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field

from ..admin import SessionKeys, seal
from ..radio import (DutyCycleBudget, DutyDecision, Frame, FrameKind, NUM_CHANNELS, PhyParams,
                     SpreadingFactor, consume_duty, make_frame)


class DeviceState(str, enum.Enum):
    IDLE = "Idle"
    JOINING = "Joining"
    JOINED = "Joined"


@dataclass
class EndDevice:
    dev_eui: str
    owner: str
    owner_gateway: str
    position: tuple[float, float]
    payload_size: int
    uplink_period: float
    rejoin_period: float
    duty_limit: float = 0.01
    tx_power_dbm: float = 14.0
    base_sf: int = 7
    audible: list[tuple[str, float]] = field(default_factory=list)

    state: DeviceState = DeviceState.IDLE
    handler: str | None = None
    channel: int | None = None
    sf: int | None = None
    keys: SessionKeys | None = None
    joined_at: float = 0.0
    join_id: int | None = None
    join_sf: int = 7
    failed_attempts: int = 0
    uplinks: int = 0
    budget: DutyCycleBudget = None

    def __post_init__(self):
        if self.budget is None:
            self.budget = DutyCycleBudget(self.duty_limit)
        self.join_sf = self.base_sf

    def rejoin_due(self, now: float) -> bool:
        return self.state is DeviceState.JOINED and now >= self.joined_at + self.rejoin_period

    def accept(self, handler: str, channel: int, sf: int, keys: SessionKeys, now: float) -> None:
        self.state = DeviceState.JOINED
        self.handler, self.channel, self.sf, self.keys = handler, channel, int(sf), keys
        self.joined_at = now
        self.join_id = None
        self.failed_attempts = 0
        self.join_sf = self.base_sf

    def join_failed(self) -> None:
        """One more unanswered join: step the SF up for the next attempt."""
        self.failed_attempts += 1
        self.join_sf = min(int(SpreadingFactor.SF12), self.join_sf + 1)


def backoff_delay(attempt: int, base: float, factor: float, cap: float, jitter: float,
                  rng: random.Random) -> float:
    """Delay before join retry number ``attempt`` (1-based), with +-jitter."""
    delay = min(cap, base * factor ** (attempt - 1))
    return delay * (1.0 + rng.uniform(-jitter, jitter))


def device_wake(dev: EndDevice, now: float, phy: PhyParams, join_payload: int,
                frame_id: int, rng: random.Random) -> Frame | DutyDecision:
    """Build the frame the device sends now, charging its duty budget.

    A joined device sends a data uplink on its assigned channel and SF, or a
    join request if its rejoin period has run out. A device that is not
    joined sends a join request on a random channel. State only changes if
    the duty budget allows the transmission.
    """
    if dev.state is DeviceState.JOINED and not dev.rejoin_due(now):
        frame = make_frame(FrameKind.DATA_UPLINK, dev.dev_eui, dev.channel, dev.sf,
                           dev.payload_size, now, dev.position, phy, dev.tx_power_dbm, frame_id,
                           seal(dev.keys, ("data", dev.dev_eui, dev.uplinks)))
    else:
        frame = make_frame(FrameKind.JOIN_REQUEST, dev.dev_eui, rng.randrange(NUM_CHANNELS),
                           dev.join_sf, join_payload, now, dev.position, phy, dev.tx_power_dbm,
                           frame_id)
    decision = consume_duty(dev.budget, frame.airtime, now)
    if not decision.allowed:
        return decision
    if frame.kind is FrameKind.JOIN_REQUEST:
        dev.state = DeviceState.JOINING
        dev.join_id = frame_id
    else:
        dev.uplinks += 1
    return frame
