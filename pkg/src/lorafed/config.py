"""Scenario configuration: topology, actors, device traffic and protocol knobs.

Scenario files are TOML. Every section maps onto one of the dataclasses
below; unknown keys are rejected so typos surface at validation time.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .admin import fair_use_check
from .consensus import Mode as ChannelMode
from .radio import DEFAULT_SENSITIVITY, DUTY_LIMITS, MAX_PAYLOAD, PathModel, PhyParams


class ConfigError(ValueError):
    pass


class Mode(str, enum.Enum):
    BASELINE = "BaselineSingleActor"
    TWO_ACTOR = "TwoActorPartition"
    FEDERATION = "FlipFederation"


@dataclass(frozen=True)
class GatewaySpec:
    id: str
    x: float
    y: float
    actor: str
    cluster: int = 0


@dataclass(frozen=True)
class ActorSpec:
    id: str
    device_share: float = 0.0


@dataclass(frozen=True)
class DeviceSpec:
    """Explicitly placed device (overrides random placement when given)."""

    x: float
    y: float
    owner: str


@dataclass(frozen=True)
class DelegationSpec:
    device: int
    renter: str


@dataclass(frozen=True)
class DeviceParams:
    payload_min: int = 1
    payload_max: int = 51
    period_min: float = 60.0
    period_max: float = 600.0
    rejoin_min: float = 1800.0
    rejoin_max: float = 3600.0
    duty_limit: float = 0.01
    tx_power_dbm: float = 14.0
    join_delay_max: float = 60.0
    join_payload: int = 18
    join_accept_payload: int = 12
    backoff_base: float = 30.0
    backoff_factor: float = 2.0
    backoff_cap: float = 480.0
    backoff_jitter: float = 0.2
    rx1_delay: float = 5.0
    rx2_delay: float = 6.0


@dataclass(frozen=True)
class ProtocolParams:
    k: int = 5
    r: int = 5
    gossip_period: float = 60.0
    rssi_range: float = 60.0
    ema_alpha: float = 0.3
    consensus_rounds: int = 2
    consensus_round_time: float = 0.05
    score_rssi: float = 0.5
    score_occupation: float = 0.3
    score_load: float = 0.2
    load_cap: int = 200
    sf_margin_db: float = 0.0
    subscribe_ttl: float = 24 * 3600.0
    publish_horizon: float = 3600.0
    fanout: int = 4
    hop_budget: int = 5
    dissemination_round_time: float = 0.05
    leader_period: float = 300.0
    expiry_period: float = 300.0
    intra_latency: float = 0.0
    inter_latency: float = 0.05
    gateway_duty_limit: float = 0.01
    occupation_window: float = 3600.0
    staleness_horizon: float = 3 * 3600.0


@dataclass(frozen=True)
class ClusterParams:
    n1: int = 1
    p1: float = 1.0
    n2: int = 1
    p2: float = 1.0
    # Explicit cluster adjacency; when given it replaces the random graph.
    edges: tuple = ()


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    mode: Mode = Mode.BASELINE
    altruist: bool = True
    grid: float = 20_000.0
    device_count: int = 0
    duration: float = 1800.0
    seeds: list[int] = field(default_factory=lambda: [1])
    repeats: int = 1
    gateways: list[GatewaySpec] = field(default_factory=list)
    actors: list[ActorSpec] = field(default_factory=list)
    phy: PhyParams = field(default_factory=PhyParams)
    path: PathModel = field(default_factory=PathModel)
    sensitivity: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_SENSITIVITY))
    devices: DeviceParams = field(default_factory=DeviceParams)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    clusters: ClusterParams = field(default_factory=ClusterParams)
    device_list: list[DeviceSpec] = field(default_factory=list)
    delegations: list[DelegationSpec] = field(default_factory=list)

    @property
    def channel_mode(self) -> ChannelMode:
        return ChannelMode.ALTRUIST if self.altruist else ChannelMode.SELFISH

    @property
    def n_devices(self) -> int:
        return len(self.device_list) if self.device_list else self.device_count

    def actor_gateways(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {a.id: [] for a in self.actors}
        for g in self.gateways:
            out.setdefault(g.actor, []).append(g.id)
        return {a: sorted(gws) for a, gws in out.items()}

    def validate(self) -> "ScenarioConfig":
        errors = validation_errors(self)
        if errors:
            raise ConfigError("; ".join(errors))
        return self

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["mode"] = self.mode.value
        d["sensitivity"] = {str(k): v for k, v in sorted(self.sensitivity.items())}
        return d


def _device_split(cfg: ScenarioConfig) -> dict[str, int]:
    if cfg.device_list:
        out: dict[str, int] = {}
        for d in cfg.device_list:
            out[d.owner] = out.get(d.owner, 0) + 1
        return out
    return dict(zip([a.id for a in cfg.actors], split_counts(cfg)))


def split_counts(cfg: ScenarioConfig) -> list[int]:
    """Devices per actor (in ``cfg.actors`` order) by largest remainder."""
    shares = [a.device_share for a in cfg.actors]
    total = sum(shares)
    if not shares or total <= 0:
        return [0] * len(shares)
    raw = [cfg.device_count * s / total for s in shares]
    counts = [math.floor(r) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: cfg.device_count - sum(counts)]:
        counts[i] += 1
    return counts


def validation_errors(cfg: ScenarioConfig) -> list[str]:
    errs: list[str] = []
    if cfg.device_count < 0:
        errs.append("device_count must be >= 0")
    if cfg.duration <= 0:
        errs.append("duration must be positive")
    if cfg.grid <= 0:
        errs.append("grid must be positive")
    if not cfg.seeds:
        errs.append("at least one seed is required")
    if cfg.repeats < 1:
        errs.append("repeats must be >= 1")
    gw_ids = [g.id for g in cfg.gateways]
    if len(set(gw_ids)) != len(gw_ids):
        errs.append("gateway ids must be unique")
    actor_ids = [a.id for a in cfg.actors]
    if len(set(actor_ids)) != len(actor_ids):
        errs.append("actor ids must be unique")
    for g in cfg.gateways:
        if g.actor not in actor_ids:
            errs.append(f"gateway {g.id} belongs to unknown actor {g.actor}")
    for d in cfg.device_list:
        if d.owner not in actor_ids:
            errs.append(f"device owner {d.owner} is not an actor")
    if any(a.device_share < 0 for a in cfg.actors):
        errs.append("device_share must be >= 0")
    if cfg.device_count > 0 and not cfg.device_list and sum(a.device_share for a in cfg.actors) <= 0:
        errs.append("devices present but no actor has a device share")

    per_actor = cfg.actor_gateways()
    split = _device_split(cfg)
    bad = fair_use_check({a: (len(per_actor.get(a, [])), split.get(a, 0)) for a in actor_ids})
    for a in bad:
        errs.append(f"actor {a} deploys end-devices without owning a gateway")

    n_actors = len(cfg.actors)
    n_gw = len(cfg.gateways)
    if cfg.mode is Mode.BASELINE and not (n_actors == 1 and n_gw == 4):
        errs.append("BaselineSingleActor needs 1 actor owning 4 gateways")
    if cfg.mode is Mode.TWO_ACTOR:
        if n_actors != 2 or sorted(len(v) for v in per_actor.values()) != [2, 2]:
            errs.append("TwoActorPartition needs 2 actors with 2 gateways each")
        elif not cfg.device_list and abs(split[actor_ids[0]] - split[actor_ids[1]]) > 1:
            errs.append("TwoActorPartition splits devices half/half")
    if cfg.mode is Mode.FEDERATION and cfg.n_devices and n_gw < 1:
        errs.append("FlipFederation needs gateways")
    if cfg.mode is not Mode.FEDERATION and cfg.delegations:
        errs.append("delegations need FlipFederation")
    for dl in cfg.delegations:
        if not 0 <= dl.device < cfg.n_devices:
            errs.append(f"delegation device index {dl.device} out of range")
        if dl.renter not in actor_ids:
            errs.append(f"delegation renter {dl.renter} is not an actor")

    n_clusters = cfg.clusters.n1 * cfg.clusters.n2
    for g in cfg.gateways:
        if not 0 <= g.cluster < n_clusters:
            errs.append(f"gateway {g.id} in cluster {g.cluster}, only {n_clusters} clusters")
    populated = {g.cluster for g in cfg.gateways}
    if n_clusters > 1 and len(populated) != n_clusters:
        errs.append("every cluster needs at least one gateway")
    if cfg.mode is not Mode.FEDERATION and n_clusters != 1:
        errs.append("multiple clusters need FlipFederation")
    for edge in cfg.clusters.edges:
        if (len(edge) != 2 or edge[0] == edge[1]
                or not all(isinstance(e, int) and 0 <= e < n_clusters for e in edge)):
            errs.append(f"cluster edge {edge!r} must join two distinct clusters in [0, {n_clusters})")

    dv = cfg.devices
    if not 1 <= dv.payload_min <= dv.payload_max <= MAX_PAYLOAD:
        errs.append(f"payload range must satisfy 1 <= min <= max <= {MAX_PAYLOAD}")
    if not 0 < dv.period_min <= dv.period_max:
        errs.append("uplink period range invalid")
    if not 0 < dv.rejoin_min <= dv.rejoin_max:
        errs.append("rejoin period range invalid")
    if dv.duty_limit not in DUTY_LIMITS:
        errs.append(f"duty_limit must be one of {DUTY_LIMITS}")
    if dv.rx1_delay <= 0 or dv.rx2_delay <= dv.rx1_delay:
        errs.append("receive windows must satisfy 0 < rx1_delay < rx2_delay")
    if dv.backoff_base <= 0 or dv.backoff_factor < 1 or not 0 <= dv.backoff_jitter < 1:
        errs.append("backoff parameters invalid")

    pr = cfg.protocol
    if pr.k < 1 or pr.r < 0 or pr.fanout < 1 or pr.hop_budget < 1 or pr.consensus_rounds < 1:
        errs.append("k, fanout, hop_budget and consensus_rounds must be >= 1")
    w = (pr.score_rssi, pr.score_occupation, pr.score_load)
    if min(w) < 0 or abs(sum(w) - 1) > 1e-9:
        errs.append("score weights must be non-negative and sum to 1")
    if pr.gateway_duty_limit not in DUTY_LIMITS:
        errs.append(f"gateway_duty_limit must be one of {DUTY_LIMITS}")
    for key in range(7, 13):
        if key not in cfg.sensitivity:
            errs.append(f"sensitivity missing SF{key}")
    return errs


# -- TOML loading ----------------------------------------------------------------

def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from exc


def config_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    data = dict(data)
    kw: dict[str, Any] = {}
    simple = {"name", "altruist", "grid", "device_count", "duration", "seeds", "repeats"}
    for key in simple & data.keys():
        kw[key] = data.pop(key)
    if "mode" in data:
        try:
            kw["mode"] = Mode(data.pop("mode"))
        except ValueError as exc:
            raise ConfigError(f"unknown mode: {exc}") from exc
    lists = {"gateways": GatewaySpec, "actors": ActorSpec,
             "device_list": DeviceSpec, "delegations": DelegationSpec}
    for key, cls in lists.items():
        if key in data:
            kw[key] = [_build(cls, item, key) for item in data.pop(key)]
    tables = {"phy": PhyParams, "path": PathModel, "devices": DeviceParams,
              "protocol": ProtocolParams, "clusters": ClusterParams}
    for key, cls in tables.items():
        if key in data:
            kw[key] = _build(cls, data.pop(key), key)
    if "clusters" in kw:
        kw["clusters"] = dataclasses.replace(
            kw["clusters"], edges=tuple(tuple(e) for e in kw["clusters"].edges))
    if "sensitivity" in data:
        try:
            kw["sensitivity"] = {int(k): float(v) for k, v in data.pop("sensitivity").items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[sensitivity] {exc}") from exc
    if data:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(data))}")
    try:
        return ScenarioConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)
