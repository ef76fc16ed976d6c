"""Handler election among the gateways that heard a join request, and
channel assignment for the elected handler.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .radio import NUM_CHANNELS, SpreadingFactor, lowest_sf

_TIE = 1e-12


@dataclass(frozen=True)
class HandlerProposal:
    gateway_id: str
    occupation: float
    rssi: float
    pending_load: int
    channel_occupation: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.occupation <= 1.0:
            raise ValueError(f"occupation {self.occupation} outside [0, 1]")
        if not math.isfinite(self.rssi):
            raise ValueError("rssi must be finite")


@dataclass(frozen=True)
class ScoreWeights:
    rssi: float = 0.5
    occupation: float = 0.3
    load: float = 0.2
    rssi_floor: float = -137.0
    rssi_ceiling: float = -30.0
    load_cap: int = 200

    def __post_init__(self):
        w = (self.rssi, self.occupation, self.load)
        if min(w) < 0 or abs(sum(w) - 1.0) > 1e-9:
            raise ValueError("score weights must be non-negative and sum to 1")


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def score(p: HandlerProposal, weights: ScoreWeights = ScoreWeights()) -> float:
    rssi_n = _clamp01((p.rssi - weights.rssi_floor) / (weights.rssi_ceiling - weights.rssi_floor))
    load_n = _clamp01(p.pending_load / weights.load_cap)
    return weights.rssi * rssi_n - weights.occupation * p.occupation - weights.load * load_n


def elect(proposals: Iterable[HandlerProposal], weights: ScoreWeights = ScoreWeights()) -> str:
    """Highest score wins; ties go to the lowest gateway id."""
    best = min(proposals, key=lambda p: (-score(p, weights), p.gateway_id))
    return best.gateway_id


@dataclass
class ConsensusRound:
    dev_eui: str
    join_id: int
    participants: set[str] = field(default_factory=set)
    proposals: dict[str, HandlerProposal] = field(default_factory=dict)
    round: int = 0
    decided: str | None = None

    def add(self, proposal: HandlerProposal) -> bool:
        known = self.proposals.get(proposal.gateway_id)
        if known == proposal:
            return False
        self.proposals[proposal.gateway_id] = proposal
        self.participants.add(proposal.gateway_id)
        return known is None

    def decide(self, weights: ScoreWeights = ScoreWeights()) -> str:
        self.decided = elect(self.proposals.values(), weights)
        return self.decided


def handling_consensus(proposals: Mapping[str, HandlerProposal],
                       neighbours: Mapping[str, Iterable[str]],
                       rounds: int = 2,
                       weights: ScoreWeights = ScoreWeights()) -> dict[str, str]:
    """Synchronous full exchange among hearers; returns each participant's decision.

    Round 1 sends each participant's own proposal to the participants in its
    views; later rounds relay everything learnt so far. Rounds continue past
    ``rounds`` while anything new is still being learnt (bounded by the
    number of participants).
    """
    state = {g: ConsensusRound("", 0) for g in proposals}
    for g, p in proposals.items():
        state[g].add(p)
    limit = max(rounds, len(proposals))
    for r in range(1, limit + 1):
        outbox = []
        for g in sorted(state):
            for n in neighbours.get(g, ()):
                if n in state and n != g:
                    outbox.append((n, list(state[g].proposals.values())))
        learnt = False
        for dst, props in outbox:
            for p in props:
                learnt |= state[dst].add(p)
        if r >= rounds and not learnt:
            break
    return {g: s.decide(weights) for g, s in state.items()}


# -- channel assignment -------------------------------------------------------

class Mode(str, enum.Enum):
    SELFISH = "selfish"
    ALTRUIST = "altruist"


def entropy(weights: Sequence[float], base: float = 2.0) -> float:
    """Shannon entropy of the distribution obtained by normalising ``weights``."""
    total = math.fsum(weights)
    if total <= 0:
        return 0.0
    h = 0.0
    for w in weights:
        p = w / total
        if p > 0:  # subnormal weights can underflow to 0
            h -= p * math.log(p, base)
    return h


def _argmin(values: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(values):
        if v < values[best] - _TIE:
            best = i
    return best


def assign_channel(own: Sequence[float], neighbours: Iterable[Sequence[float]],
                   added_load: float, mode: Mode | str = Mode.ALTRUIST) -> int:
    """Pick the channel for a joining device.

    Selfish: the handler's own least-occupied channel. Altruist: the channel
    that maximises the entropy of the aggregate occupation of the handler
    and its kNN neighbours once ``added_load`` is placed on it.
    Ties go to the lowest channel index.
    """
    mode = Mode(mode)
    if len(own) != NUM_CHANNELS:
        raise ValueError("occupation vectors must have one entry per channel")
    if mode is Mode.SELFISH:
        return _argmin(own)
    aggregate = list(own)
    for vec in neighbours:
        for c in range(NUM_CHANNELS):
            aggregate[c] += vec[c]
    best, best_h = 0, -math.inf
    for c in range(NUM_CHANNELS):
        trial = list(aggregate)
        trial[c] += added_load
        h = entropy(trial)
        if h > best_h + _TIE:
            best, best_h = c, h
    return best


def choose_sf(rssi: float, sensitivity: Mapping[int, float], margin_db: float = 0.0) -> SpreadingFactor:
    """Lowest SF admitting ``rssi`` with margin; falls back to SF12."""
    sf = lowest_sf(rssi, sensitivity, margin_db)
    return sf if sf is not None else SpreadingFactor.SF12


# -- handler registry -----------------------------------------------------------

@dataclass
class Registration:
    dev_eui: str
    channel: int
    sf: int
    session_id: int
    join_id: int
    load: float


class HandlerRegistry:
    """Devices a gateway currently handles, and their projected channel load."""

    def __init__(self, gateway_id: str):
        self.gateway_id = gateway_id
        self.handled: dict[str, Registration] = {}
        self.latest_join: dict[str, int] = {}

    def __contains__(self, dev_eui: str) -> bool:
        return dev_eui in self.handled

    def __len__(self) -> int:
        return len(self.handled)

    def note_join(self, dev_eui: str, join_id: int) -> None:
        if join_id > self.latest_join.get(dev_eui, -1):
            self.latest_join[dev_eui] = join_id

    def channel_load(self) -> list[float]:
        load = [0.0] * NUM_CHANNELS
        for reg in self.handled.values():
            load[reg.channel] += reg.load
        return load

    def drop(self, dev_eui: str) -> Registration | None:
        return self.handled.pop(dev_eui, None)


def register_device(registry: HandlerRegistry, dev_eui: str, channel: int, sf: int,
                    session_id: int, join_id: int, load: float) -> Registration | None:
    """Record ``dev_eui`` as handled; stale joins (older than the latest seen) are discarded."""
    if join_id < registry.latest_join.get(dev_eui, -1):
        return None
    current = registry.handled.get(dev_eui)
    if current is not None and current.join_id > join_id:
        return None
    registry.note_join(dev_eui, join_id)
    reg = Registration(dev_eui, channel, int(sf), session_id, join_id, load)
    registry.handled[dev_eui] = reg
    return reg
