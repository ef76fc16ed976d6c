"""Canonical evaluation scenarios.

Four gateways sit at (+-s/4, +-s/4) on a square of side ``s``. The modes
differ only in who owns which gateway and device:

* Baseline: one actor owns every gateway and device.
* TwoActor: the west pair belongs to actor A, the east pair to actor B;
  devices are split half/half at random.
* Federation: four actors with one gateway each, devices split evenly.

Device positions and traffic come from seed-derived streams that do not
depend on the mode, so the same seed gives the same deployment everywhere.
"""

from __future__ import annotations

import dataclasses

from ..config import (ActorSpec, ClusterParams, DelegationSpec, DeviceParams, DeviceSpec,
                      GatewaySpec, Mode, ProtocolParams, ScenarioConfig)
from ..radio import CALIBRATED_PHY

GRID = 20_000.0
DURATION = 1800.0
DESK_COUNTS = (100, 200, 300, 400, 500, 600)
FULL_COUNTS = tuple(range(100, 1001, 100))
FULL_DURATION = 5 * 3600.0

# Desk-scale traffic: denser uplinks and shorter sessions than the engine
# defaults, so that 30 minutes hold several join cycles per device and the
# congestion regime is reached within a few hundred devices.
DESK_DEVICES = DeviceParams(period_min=15.0, period_max=60.0,
                            rejoin_min=300.0, rejoin_max=900.0)


def gateway_layout(grid: float = GRID) -> list[tuple[str, float, float]]:
    q = grid / 4
    return [("gw0", -q, q), ("gw1", q, q), ("gw2", -q, -q), ("gw3", q, -q)]


_OWNERS = {
    Mode.BASELINE: {"gw0": "A", "gw1": "A", "gw2": "A", "gw3": "A"},
    Mode.TWO_ACTOR: {"gw0": "A", "gw2": "A", "gw1": "B", "gw3": "B"},
    Mode.FEDERATION: {"gw0": "A", "gw1": "B", "gw2": "C", "gw3": "D"},
}


def build_scenario(mode: Mode | str, device_count: int, seed: int = 1, *,
                   altruist: bool = True, grid: float = GRID, duration: float = DURATION,
                   devices: DeviceParams = DESK_DEVICES, phy=CALIBRATED_PHY,
                   repeats: int = 1, **overrides) -> ScenarioConfig:
    mode = Mode(mode)
    if device_count < 0:
        raise ValueError("device_count must be >= 0")
    owners = _OWNERS[mode]
    actors = sorted(set(owners.values()))
    cfg = ScenarioConfig(
        name=f"{mode.value}_{device_count}",
        mode=mode,
        altruist=altruist,
        grid=grid,
        device_count=device_count,
        duration=duration,
        seeds=[seed],
        repeats=repeats,
        gateways=[GatewaySpec(gid, x, y, owners[gid]) for gid, x, y in gateway_layout(grid)],
        actors=[ActorSpec(a, 1.0 / len(actors)) for a in actors],
        phy=phy,
        devices=devices,
        **overrides,
    )
    return cfg.validate()


def roaming_scenario(seed: int = 1, duration: float = 2400.0) -> ScenarioConfig:
    """Three clusters in a line; devices owned in the west roam in the east.

    Exercises remote handling across two inter-cluster hops, key transport
    along the route, and one delegation of a roaming device to actor C.
    """
    gws = [GatewaySpec("w0", -30_000, 0, "A", 0), GatewaySpec("w1", -26_000, 0, "A", 0),
           GatewaySpec("m0", 0, 0, "B", 1),
           GatewaySpec("e0", 30_000, 0, "C", 2), GatewaySpec("e1", 26_000, 2_000, "C", 2)]
    devs = [DeviceSpec(-28_000 + 500 * i, 1_000, "A") for i in range(4)]
    devs += [DeviceSpec(28_000 + 300 * i, 1_500 - 400 * i, "A") for i in range(6)]
    devs += [DeviceSpec(500 * i, -800, "B") for i in range(3)]
    cfg = ScenarioConfig(
        name="roaming",
        mode=Mode.FEDERATION,
        grid=80_000.0,
        duration=duration,
        seeds=[seed],
        gateways=gws,
        actors=[ActorSpec("A"), ActorSpec("B"), ActorSpec("C")],
        phy=CALIBRATED_PHY,
        devices=dataclasses.replace(DeviceParams(), rejoin_min=600.0, rejoin_max=900.0,
                                    period_min=60.0, period_max=120.0),
        clusters=ClusterParams(n1=3, p1=1.0, n2=1, p2=1.0, edges=((0, 1), (1, 2))),
        device_list=devs,
        delegations=[DelegationSpec(device=4, renter="C")],
        protocol=ProtocolParams(leader_period=120.0),
    )
    return cfg.validate()
