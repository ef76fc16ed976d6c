"""LoRa physical layer model.

Time-on-air, log-distance RSSI, per-SF sensitivity, rolling duty-cycle
budgets and per-channel collision arbitration at a gateway receiver.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

MAX_PAYLOAD = 230
NUM_CHANNELS = 8
DUTY_LIMITS = (0.001, 0.01, 0.10)
HOUR = 3600.0

_EPS = 1e-9


class SpreadingFactor(enum.IntEnum):
    SF7 = 7
    SF8 = 8
    SF9 = 9
    SF10 = 10
    SF11 = 11
    SF12 = 12


def channel(index: int) -> int:
    """Validate a channel index and return it."""
    if not isinstance(index, int) or not 0 <= index < NUM_CHANNELS:
        raise ValueError(f"channel index must be in [0, {NUM_CHANNELS}), got {index!r}")
    return index


class FrameKind(str, enum.Enum):
    JOIN_REQUEST = "JoinRequest"
    DATA_UPLINK = "DataUplink"
    JOIN_ACCEPT = "JoinAccept"
    DOWNLINK = "Downlink"


@dataclass(frozen=True)
class PhyParams:
    """Modem settings feeding the airtime formula.

    ``overhead_bytes`` is added to the application payload to obtain the
    PHY payload length (MAC header, MIC, framing).
    """

    bandwidth_hz: float = 125_000.0
    coding_rate: int = 1  # 1..4 for 4/5..4/8
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc: bool = True
    ldro_min_sf: int = 11
    overhead_bytes: int = 0

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if not 1 <= self.coding_rate <= 4:
            raise ValueError("coding_rate must be in 1..4")
        if self.preamble_symbols < 0 or self.overhead_bytes < 0:
            raise ValueError("preamble_symbols and overhead_bytes must be >= 0")


DEFAULT_PHY = PhyParams()

# Reproduces 77.06 ms (SF7) and 1810.4 ms (SF12) for a 1-byte payload:
# 34-byte PHY payload, 125 kHz, CR 4/5, 8-symbol preamble, LDRO at SF11/12.
CALIBRATED_PHY = PhyParams(overhead_bytes=33)


@dataclass(frozen=True)
class PathModel:
    """Log-distance path loss: PL(d) = pl0_db + 10 n log10(d / d0)."""

    pl0_db: float = 40.0
    exponent: float = 2.7
    d0_m: float = 1.0


DEFAULT_PATH = PathModel()

# Typical SX127x sensitivities at 125 kHz (dBm). Not from the protocol design;
# configurable per scenario.
DEFAULT_SENSITIVITY: dict[int, float] = {
    7: -123.0,
    8: -126.0,
    9: -129.0,
    10: -132.0,
    11: -134.5,
    12: -137.0,
}


def time_on_air(payload_size: int, sf: int, phy: PhyParams = DEFAULT_PHY) -> float:
    """Airtime in seconds of a frame carrying ``payload_size`` application bytes."""
    if not isinstance(payload_size, int) or not 1 <= payload_size <= MAX_PAYLOAD:
        raise ValueError(f"payload_size must be in [1, {MAX_PAYLOAD}], got {payload_size!r}")
    sf = SpreadingFactor(sf)
    t_sym = (1 << sf) / phy.bandwidth_hz
    de = 1 if sf >= phy.ldro_min_sf else 0
    ih = 0 if phy.explicit_header else 1
    pl = payload_size + phy.overhead_bytes
    numerator = 8 * pl - 4 * sf + 28 + 16 * int(phy.crc) - 20 * ih
    n_payload = 8 + max(math.ceil(numerator / (4 * (sf - 2 * de))) * (phy.coding_rate + 4), 0)
    return (phy.preamble_symbols + 4.25 + n_payload) * t_sym


def frames_per_hour(airtime: float, limit: float) -> int:
    """Number of frames of ``airtime`` seconds a transmitter may send per hour."""
    if airtime <= 0:
        raise ValueError("airtime must be positive")
    return math.floor(HOUR * limit / airtime + _EPS)


def rssi_at(tx: tuple[float, float], rx: tuple[float, float], tx_power_dbm: float,
            path: PathModel = DEFAULT_PATH) -> float:
    d = math.dist(tx, rx)
    d = max(d, path.d0_m)
    return tx_power_dbm - (path.pl0_db + 10.0 * path.exponent * math.log10(d / path.d0_m))


def in_range(rssi: float, sf: int, sensitivity: dict[int, float] = DEFAULT_SENSITIVITY) -> bool:
    return rssi >= sensitivity[int(sf)]


def lowest_sf(rssi: float, sensitivity: dict[int, float] = DEFAULT_SENSITIVITY,
              margin_db: float = 0.0) -> SpreadingFactor | None:
    """Smallest SF whose sensitivity admits ``rssi`` with ``margin_db`` to spare."""
    for sf in SpreadingFactor:
        if rssi - margin_db >= sensitivity[int(sf)]:
            return sf
    return None


@dataclass(frozen=True, eq=False)
class Frame:
    kind: FrameKind
    dev_eui: str
    channel: int
    sf: SpreadingFactor
    payload_size: int
    tx_start: float
    airtime: float
    origin: tuple[float, float]
    tx_power_dbm: float = 14.0
    frame_id: int = 0
    body: object = None

    def __post_init__(self):
        channel(self.channel)
        if not 1 <= self.payload_size <= MAX_PAYLOAD:
            raise ValueError(f"payload_size {self.payload_size} out of range")
        if self.airtime <= 0:
            raise ValueError("airtime must be positive")

    @property
    def tx_end(self) -> float:
        return self.tx_start + self.airtime


def make_frame(kind: FrameKind, dev_eui: str, ch: int, sf: int, payload_size: int,
               tx_start: float, origin: tuple[float, float], phy: PhyParams = DEFAULT_PHY,
               tx_power_dbm: float = 14.0, frame_id: int = 0, body: object = None) -> Frame:
    sf = SpreadingFactor(sf)
    return Frame(kind, dev_eui, ch, sf, payload_size, tx_start,
                 time_on_air(payload_size, sf, phy), origin, tx_power_dbm, frame_id, body)


# -- duty cycle -------------------------------------------------------------

@dataclass(frozen=True)
class DutyDecision:
    allowed: bool
    next_allowed_time: float


@dataclass
class DutyCycleBudget:
    """Rolling-window airtime ledger for one transmitter on one sub-band.

    A transmission starting at ``t`` counts against every window that
    contains ``t``; usage at ``now`` sums entries with start > now - window.
    """

    limit: float = 0.01
    window_length: float = HOUR
    ledger: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.limit < 0 or self.window_length <= 0:
            raise ValueError("limit must be >= 0 and window_length > 0")

    @property
    def capacity(self) -> float:
        return self.limit * self.window_length

    def _expire(self, now: float) -> None:
        # a slack of _EPS so that a retry at start + window always finds the
        # entry expired despite rounding
        while self.ledger and self.ledger[0][0] + self.window_length <= now + _EPS:
            self.ledger.popleft()

    def used(self, now: float) -> float:
        self._expire(now)
        return math.fsum(a for _, a in self.ledger)

    @property
    def window_used(self) -> float:
        return math.fsum(a for _, a in self.ledger)


def consume_duty(budget: DutyCycleBudget, airtime: float, now: float) -> DutyDecision:
    """Charge ``airtime`` at ``now`` if lawful, else report when it becomes lawful."""
    if airtime <= 0:
        raise ValueError("airtime must be positive")
    cap = budget.capacity
    used = budget.used(now)
    if used + airtime <= cap + _EPS:
        budget.ledger.append((now, airtime))
        return DutyDecision(True, now)
    if airtime > cap + _EPS:
        return DutyDecision(False, math.inf)
    # Drop oldest entries until the new frame fits.
    remaining = used
    for start, a in budget.ledger:
        remaining -= a
        if remaining + airtime <= cap + _EPS:
            return DutyDecision(False, max(start + budget.window_length, now))
    return DutyDecision(False, now)  # pragma: no cover - unreachable


# -- receiver ---------------------------------------------------------------

class ReceptionOutcome(enum.Enum):
    STARTED = "started"
    COLLIDED = "collided"


@dataclass
class InFlight:
    frame: Frame
    end_time: float
    doomed: bool = False

    def remaining(self, now: float) -> float:
        return self.end_time - now


@dataclass
class ChannelReceiverState:
    """One gateway's 8 demodulator slots, at most one reception per channel."""

    slots: list = field(default_factory=lambda: [None] * NUM_CHANNELS)
    collisions: int = 0

    def busy(self, ch: int) -> bool:
        return self.slots[ch] is not None


def begin_reception(state: ChannelReceiverState, frame: Frame, now: float) -> ReceptionOutcome:
    """Start receiving ``frame``; on overlap both frames are lost.

    The frame with the longest remaining airtime keeps the channel (doomed),
    the other is dropped at once.
    """
    current = state.slots[frame.channel]
    if current is None:
        state.slots[frame.channel] = InFlight(frame, now + frame.airtime)
        return ReceptionOutcome.STARTED
    state.collisions += 1
    if frame.airtime > current.remaining(now):
        state.slots[frame.channel] = InFlight(frame, now + frame.airtime, doomed=True)
    else:
        current.doomed = True
    return ReceptionOutcome.COLLIDED


def end_reception(state: ChannelReceiverState, frame: Frame) -> Frame | None:
    """Finish ``frame``'s reception; returns it only if received intact."""
    current = state.slots[frame.channel]
    if current is None or current.frame is not frame:
        return None  # dropped earlier by a longer colliding frame
    state.slots[frame.channel] = None
    return None if current.doomed else frame
