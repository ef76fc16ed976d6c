"""Event-log reducers and audits.

Everything here reads only the event log, independently of the counters
kept by the simulator, so the two can be cross-checked.
"""

from __future__ import annotations

from collections import defaultdict, deque
from typing import Iterable

from ..config import ScenarioConfig
from ..engine.eventlog import EventLog

_EPS = 1e-9


def reduce_metrics(log: EventLog) -> dict:
    attempted, joined, delivered = set(), set(), set()
    collisions = sent = 0
    for _, entity, kind, d in log:
        if kind == "tx":
            if d["ftype"] == "JoinRequest":
                attempted.add(entity)
            elif d["ftype"] == "DataUplink":
                sent += 1
        elif kind == "joined":
            joined.add(entity)
        elif kind == "collision":
            collisions += 1
        elif kind == "deliver":
            delivered.add(d["frame"])
    return {"join_attempts": len(attempted), "join_successes": len(joined),
            "join_ratio": len(joined) / len(attempted) if attempted else 0.0,
            "collisions": collisions, "frames_sent": sent,
            "frames_delivered_to_owner": len(delivered)}


def duty_violations(log: EventLog, limits: dict[str, float], window: float = 3600.0,
                    default: float = 0.01) -> list[dict]:
    """Windows where a transmitter's airtime exceeds its limit.

    For each transmission start ``t`` the airtime of every transmission that
    started in ``(t - window, t]`` is summed; the largest sums of a
    rolling window are attained at such points.
    """
    per_tx: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for t, entity, kind, d in log:
        if kind == "tx":
            per_tx[entity].append((t, d["airtime"]))
    bad = []
    for entity, txs in per_tx.items():
        cap = limits.get(entity, default) * window
        inwin: deque = deque()
        total = 0.0
        for t, a in txs:
            inwin.append((t, a))
            total += a
            while inwin[0][0] + window <= t + _EPS:
                total -= inwin.popleft()[1]
            if total > cap + _EPS:
                bad.append({"entity": entity, "t": t, "airtime": total, "cap": cap})
    return bad


def consensus_violations(log: EventLog) -> list[dict]:
    """Disagreeing decisions and joins with more than one handler."""
    winners: dict[tuple, set] = defaultdict(set)
    handlers: dict[tuple, list] = defaultdict(list)
    issued: dict[tuple, int] = defaultdict(int)
    registered: dict[tuple, int] = defaultdict(int)
    for _, entity, kind, d in log:
        if kind == "decision":
            winners[(d["dev"], d["join"])].add(d["winner"])
        elif kind == "handler":
            handlers[(d["dev"], d["join"])].append(entity)
        elif kind == "keys_issued":
            issued[(d["dev"], d["join"])] += 1
        elif kind == "joined":
            registered[(entity, d["join"])] += 1
    bad = []
    for key, w in winners.items():
        if len(w) > 1:
            bad.append({"join": key, "problem": "disagreement", "winners": sorted(w)})
    for key, hs in handlers.items():
        if len(hs) > 1:
            bad.append({"join": key, "problem": "several handlers", "handlers": sorted(hs)})
    for key, n in list(issued.items()) + list(registered.items()):
        if n > 1:
            bad.append({"join": key, "problem": "answered more than once"})
    return bad


def privacy_violations(log: EventLog) -> list[dict]:
    """Successful decryptions by anyone but the owner or the current renter."""
    owner: dict[str, str] = {}
    rented: set[tuple[str, int, str]] = set()
    bad = []
    for t, entity, kind, d in log:
        if kind == "device":
            owner[entity] = d["owner"]
        elif kind == "delegation_keys":
            rented.add((d["dev"], d["session"], d["renter_gateway"]))
        elif kind == "decrypt" and d["ok"]:
            dev = d["dev"]
            if d["actor"] == owner.get(dev):
                continue
            # the renter's gateway may also see the frame as a transit
            # leader; holding the delegated key for this session is what counts
            if (dev, d["session"], entity) in rented:
                continue
            bad.append({"t": t, "gateway": entity, "dev": dev, "role": d["role"]})
    return bad


def positions(log: EventLog) -> list[tuple[str, float, float]]:
    return [(e, d["x"], d["y"]) for _, e, k, d in log if k == "device"]


def audit_log(log: EventLog, cfg: ScenarioConfig | None = None) -> dict:
    limits: dict[str, float] = {}
    if cfg is not None:
        for g in cfg.gateways:
            limits[g.id] = cfg.protocol.gateway_duty_limit
    default = cfg.devices.duty_limit if cfg is not None else 0.01
    return {"metrics": reduce_metrics(log),
            "duty": len(duty_violations(log, limits, default=default)),
            "consensus": len(consensus_violations(log)),
            "privacy": len(privacy_violations(log)),
            "remote_decrypts": sum(1 for *_, k, d in log
                                   if k == "decrypt" and d["role"] in ("handler", "transit")),
            "renter_reads": sum(1 for *_, k, d in log
                                if k == "decrypt" and d["role"] == "renter" and d["ok"])}


def kinds(log: EventLog) -> Iterable[str]:
    return sorted({k for _, _, k, _ in log})
