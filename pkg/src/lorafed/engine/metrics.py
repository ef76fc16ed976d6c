"""Per-run outcome counters."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

METRIC_NAMES = ("join_ratio", "collisions", "frames_delivered_to_owner")


@dataclass
class RunMetrics:
    join_attempts: int = 0
    join_successes: int = 0
    collisions: int = 0
    frames_sent: int = 0
    frames_delivered_to_owner: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def join_ratio(self) -> float:
        """Devices that joined at least once over devices that tried to."""
        return self.join_successes / self.join_attempts if self.join_attempts else 0.0

    def core(self) -> dict:
        return {"join_attempts": self.join_attempts, "join_successes": self.join_successes,
                "join_ratio": self.join_ratio, "collisions": self.collisions,
                "frames_sent": self.frames_sent,
                "frames_delivered_to_owner": self.frames_delivered_to_owner}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["join_ratio"] = self.join_ratio
        return d

    def value(self, name: str) -> float:
        return float(getattr(self, name))
