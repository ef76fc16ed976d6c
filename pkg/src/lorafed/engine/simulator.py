"""Discrete-event simulation of a gateway federation.

Three handling regimes share the radio and device models:

* ``BaselineSingleActor`` and ``TwoActorPartition``: each actor runs a
  central network server that answers a join through the best-RSSI
  gateway among its own hearers.
* ``FlipFederation``: gateways are peers. Hearers holding a Subscribe for
  the device elect a handler among themselves; the owner mints the session
  keys and ships the network key to the handler, across clusters if needed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

from ..admin import OPAQUE, SealedPayload, SessionKeys, decrypt_app_payload, make_identity
from ..config import ConfigError, Mode, ScenarioConfig, split_counts
from ..consensus import (ConsensusRound, HandlerProposal, Mode as ChannelMode, ScoreWeights,
                         assign_channel, choose_sf, register_device)
from ..intercluster import (DEVICE_DATA, SUBSCRIBE_FLOOD, ClusterGraph, InterClusterMessage,
                            LeaderState, elect_leader, generate_cluster_graph)
from ..pubsub import Dissemination, expiry_sweep, on_join_request, subscribe
from ..radio import (NUM_CHANNELS, DutyDecision, Frame, FrameKind, ReceptionOutcome,
                     begin_reception, consume_duty, end_reception, lowest_sf, rssi_at,
                     time_on_air)
from .bus import ClusterBus, leader_address
from .device import DeviceState, EndDevice, backoff_delay, device_wake
from .eventlog import EventLog
from .gateway import Gateway, JoinContext, Spread
from .metrics import RunMetrics
from .rng import Rng
from .scheduler import EventKind, Scheduler, SimEvent


@dataclass(frozen=True)
class SealedAccept:
    """JoinAccept body: readable by the device only."""

    keys: SessionKeys

    def __repr__(self):
        return "SealedAccept(...)"


def _ns_id(actor: str) -> str:
    return "ns:" + actor


class Simulator:
    def __init__(self, cfg: ScenarioConfig, seed: int, log: bool = True):
        cfg.validate()
        self.cfg = cfg
        self.seed = seed
        self.rng = Rng(seed)
        self.sched = Scheduler()
        self.log = EventLog(log)
        pr = cfg.protocol
        self.bus = ClusterBus(self.sched, pr.intra_latency, pr.inter_latency)
        self.weights = ScoreWeights(pr.score_rssi, pr.score_occupation, pr.score_load,
                                    rssi_floor=cfg.sensitivity[12], load_cap=pr.load_cap)
        self.federated = cfg.mode is Mode.FEDERATION
        self.gateways: dict[str, Gateway] = {}
        self.devices: dict[str, EndDevice] = {}
        self.leaders: dict[int, LeaderState] = {}
        self.graph: ClusterGraph | None = None
        self._frame_ids = itertools.count(1)
        self._request_ids = itertools.count(1)
        self._wake_token: dict[str, int] = {}
        self._ns_pending: dict[tuple[str, int], list] = {}
        self._attempted: set[str] = set()
        self._joined: set[str] = set()
        self._delivered: set[int] = set()
        self.collisions = 0
        self.frames_sent = 0
        self.counters = {"join_requests": 0, "lost_out_of_range": 0, "duty_deferrals": 0,
                         "join_accepts_sent": 0, "join_accepts_dropped": 0,
                         "matches_rejected": 0, "join_failures": 0}
        self._ja_max_airtime = time_on_air(cfg.devices.join_accept_payload, 12, cfg.phy)
        self._accept_horizon = cfg.devices.rx2_delay + self._ja_max_airtime
        self._build()

    # -- setup ----------------------------------------------------------------

    def _build(self) -> None:
        cfg, pr = self.cfg, self.cfg.protocol
        for g in sorted(cfg.gateways, key=lambda g: g.id):
            gw = Gateway(g.id, g.actor, g.cluster, (g.x, g.y), self.rng.stream(f"keys:{g.id}"),
                         k=pr.k, r=pr.r, rssi_range=pr.rssi_range, alpha=pr.ema_alpha,
                         publish_horizon=pr.publish_horizon,
                         downlink_duty=pr.gateway_duty_limit,
                         occupation_window=pr.occupation_window)
            self.gateways[g.id] = gw
            self.bus.register(g.id, str(g.cluster))
        self.actor_gateways = cfg.actor_gateways()
        self._build_clusters()
        self._build_devices()
        if self.federated:
            self._start_federation()

    def _build_clusters(self) -> None:
        c = self.cfg.clusters
        if c.edges:
            n = c.n1 * c.n2
            adj = {i: set() for i in range(n)}
            for a, b in c.edges:
                adj[a].add(b)
                adj[b].add(a)
            self.graph = ClusterGraph(list(range(n)), adj, (c.n1, c.p1, c.n2, c.p2))
            if not self.graph.is_connected():
                raise ConfigError("explicit cluster edges do not form a connected graph")
        elif c.n1 * c.n2 > 1:
            self.graph = generate_cluster_graph(c.n1, c.p1, c.n2, c.p2,
                                                self.rng.stream("clusters"))
        else:
            self.graph = ClusterGraph([0], {0: set()}, (1, 1.0, 1, 1.0))
        for cid in self.graph.clusters:
            members = self.bus.cluster_members(str(cid))
            if not members:
                continue
            leader = elect_leader({m: 0.0 for m in members})
            self.leaders[cid] = LeaderState(cid, leader,
                                            neighbor_leaders=set(self.graph.adjacency[cid]))
            self.bus.leaders[str(cid)] = leader
            self.log.add(0.0, f"cluster:{cid}", "leader", leader=leader, term=0)

    def _build_devices(self) -> None:
        cfg, dv = self.cfg, self.cfg.devices
        place = self.rng.stream("placement")
        traffic = self.rng.stream("traffic")
        n = cfg.n_devices
        if cfg.device_list:
            positions = [(d.x, d.y) for d in cfg.device_list]
            owners = [d.owner for d in cfg.device_list]
        else:
            half = cfg.grid / 2
            positions = [(place.uniform(-half, half), place.uniform(-half, half))
                         for _ in range(n)]
            owners = []
            for actor, count in zip(cfg.actors, split_counts(cfg)):
                owners += [actor.id] * count
            self.rng.stream("ownership").shuffle(owners)
        idents = self.rng.stream("identities")
        floor = cfg.sensitivity[12]
        for i in range(n):
            dev_eui = f"dev{i:04d}"
            payload = traffic.randint(dv.payload_min, dv.payload_max)
            period = traffic.uniform(dv.period_min, dv.period_max)
            rejoin = traffic.uniform(dv.rejoin_min, dv.rejoin_max)
            pos = positions[i]
            audible = []
            for gid, gw in self.gateways.items():
                rssi = rssi_at(pos, gw.position, dv.tx_power_dbm, cfg.path)
                if rssi >= floor:
                    audible.append((gid, rssi))
            best = max((r for _, r in audible), default=-math.inf)
            base_sf = lowest_sf(best, cfg.sensitivity) if audible else None
            owner_gw = self.actor_gateways[owners[i]][0]
            dev = EndDevice(dev_eui, owners[i], owner_gw, pos, payload, period, rejoin,
                            dv.duty_limit, dv.tx_power_dbm, int(base_sf or 12), audible)
            self.devices[dev_eui] = dev
            self.gateways[owner_gw].admin.own(make_identity(dev_eui, owners[i], idents))
            self.log.add(0.0, dev_eui, "device", x=pos[0], y=pos[1], owner=owners[i],
                         payload=payload, period=period, rejoin=rejoin, base_sf=dev.base_sf,
                         hearers=[g for g, _ in audible])
        delay = self.rng.stream("join_delay")
        for dev in self.devices.values():
            self._schedule_wake(dev, delay.uniform(0.0, dv.join_delay_max))

    def _start_federation(self) -> None:
        cfg, pr = self.cfg, self.cfg.protocol
        for dev in self.devices.values():
            for gid, rssi in dev.audible:
                prof = self.gateways[gid].membership.profile
                prof.heard[dev.dev_eui] = rssi
                prof.last_heard[dev.dev_eui] = 0.0
        gossip = self.rng.stream("gossip")
        for gw in self.gateways.values():
            gw.membership.rps.refresh(self.bus.cluster_members(str(gw.cluster)), gw.id, gossip)
            self.sched.at(gossip.uniform(0.0, pr.gossip_period), EventKind.GOSSIP_TICK, gw.id,
                          "periodic")
        renters = {}
        for dl in cfg.delegations:
            dev_eui = f"dev{dl.device:04d}"
            renter_gw = self.actor_gateways[dl.renter][0]
            owner = self.gateways[self.devices[dev_eui].owner_gateway]
            owner.admin.delegate(dev_eui, dl.renter, renter_gw, 0.0, pr.subscribe_ttl)
            renters[dev_eui] = renter_gw
            self.log.add(0.0, owner.id, "delegate", dev=dev_eui, renter=dl.renter,
                         renter_gateway=renter_gw)
        for dev in self.devices.values():
            owner = self.gateways[dev.owner_gateway]
            rec, spread = subscribe(owner.store, dev.dev_eui, pr.subscribe_ttl, 0.0,
                                    renters.get(dev.dev_eui), owner.cluster)
            self.log.add(0.0, owner.id, "subscribe", dev=dev.dev_eui, request=rec.request_id,
                         renter=rec.renter_gateway)
            if spread:
                self._start_spread(owner, rec, None)
            if len(self.leaders) > 1:
                self.bus.send("ToLeader", owner.id, leader_address(str(owner.cluster)),
                              {"flood": rec})
        self.sched.at(pr.leader_period, EventKind.LEADER_TICK, "leaders")
        self.sched.at(pr.expiry_period, EventKind.PUBSUB_EXPIRY_TICK, "expiry")

    # -- main loop -------------------------------------------------------------

    def run(self) -> RunMetrics:
        handlers = {
            EventKind.RADIO_TX_START: self._on_tx_start,
            EventKind.RADIO_RX_COMPLETE: self._on_rx_complete,
            EventKind.DEVICE_WAKE: self._on_wake,
            EventKind.JOIN_ACCEPT_DELIVERY: self._on_join_accept,
            EventKind.CLUSTER_MESSAGE_DELIVERY: self._on_message,
            EventKind.CONSENSUS_TIMER: self._on_consensus_timer,
            EventKind.DISSEMINATION_TIMER: self._on_dissemination_timer,
            EventKind.GOSSIP_TICK: self._on_gossip,
            EventKind.LEADER_TICK: self._on_leader_tick,
            EventKind.PUBSUB_EXPIRY_TICK: self._on_expiry_tick,
            EventKind.JOIN_WINDOW_CLOSE: self._on_join_window_close,
        }
        horizon = self.cfg.duration
        watermark = 0.0
        while True:
            t = self.sched.peek_time()
            if t is None or t > horizon:
                break
            ev = self.sched.pop()
            assert ev.time >= watermark, "event order violated"
            watermark = ev.time
            handlers[ev.kind](ev)
        return self.metrics()

    def metrics(self) -> RunMetrics:
        extras = dict(self.counters)
        extras["events"] = self.sched.executed
        extras["bus"] = self.bus.stats()
        extras["handled"] = {g: len(gw.registry) for g, gw in self.gateways.items()}
        return RunMetrics(len(self._attempted), len(self._joined), self.collisions,
                          self.frames_sent, len(self._delivered), extras)

    @property
    def now(self) -> float:
        return self.sched.now

    # -- devices and radio -----------------------------------------------------

    def _schedule_wake(self, dev: EndDevice, at: float) -> None:
        token = self._wake_token.get(dev.dev_eui, 0) + 1
        self._wake_token[dev.dev_eui] = token
        self.sched.at(at, EventKind.DEVICE_WAKE, dev.dev_eui, token)

    def _on_wake(self, ev: SimEvent) -> None:
        dev = self.devices[ev.target]
        if ev.payload != self._wake_token.get(dev.dev_eui):
            return
        now = self.now
        out = device_wake(dev, now, self.cfg.phy, self.cfg.devices.join_payload,
                          next(self._frame_ids), self.rng.stream("radio"))
        if isinstance(out, DutyDecision):
            self.counters["duty_deferrals"] += 1
            self.log.add(now, dev.dev_eui, "duty_defer", until=out.next_allowed_time)
            if math.isfinite(out.next_allowed_time):
                self._schedule_wake(dev, out.next_allowed_time)
            return
        frame = out
        self.log.add(now, dev.dev_eui, "tx", frame=frame.frame_id, ftype=frame.kind.value,
                     ch=frame.channel, sf=int(frame.sf), airtime=frame.airtime)
        if frame.kind is FrameKind.JOIN_REQUEST:
            self.counters["join_requests"] += 1
            self._attempted.add(dev.dev_eui)
            self._wake_token[dev.dev_eui] = self._wake_token.get(dev.dev_eui, 0) + 1
            close = frame.tx_end + self.cfg.devices.rx2_delay + self._ja_max_airtime + 1e-6
            self.sched.at(close, EventKind.JOIN_WINDOW_CLOSE, dev.dev_eui, frame.frame_id)
        else:
            self.frames_sent += 1
            self._schedule_wake(dev, now + dev.uplink_period)
        self.sched.at(now, EventKind.RADIO_TX_START, dev.dev_eui, frame)

    def _on_tx_start(self, ev: SimEvent) -> None:
        frame: Frame = ev.payload
        dev = self.devices[frame.dev_eui]
        threshold = self.cfg.sensitivity[int(frame.sf)]
        heard = False
        for gid, rssi in dev.audible:
            if rssi < threshold:
                continue
            heard = True
            gw = self.gateways[gid]
            if begin_reception(gw.receiver, frame, self.now) is ReceptionOutcome.COLLIDED:
                self.collisions += 1
                self.log.add(self.now, gid, "collision", frame=frame.frame_id, ch=frame.channel)
            slot = gw.receiver.slots[frame.channel]
            if slot.frame is frame:
                self.sched.at(frame.tx_end, EventKind.RADIO_RX_COMPLETE, gid, (frame, rssi))
        if not heard:
            self.counters["lost_out_of_range"] += 1
            self.log.add(self.now, frame.dev_eui, "lost", frame=frame.frame_id)

    def _on_rx_complete(self, ev: SimEvent) -> None:
        gw = self.gateways[ev.target]
        frame, rssi = ev.payload
        if end_reception(gw.receiver, frame) is None:
            return
        if self.federated:
            prof = gw.membership.profile
            if prof.observe(frame.dev_eui, rssi, self.now, gw.membership.alpha):
                self._gossip_soon(gw)
        if frame.kind is FrameKind.JOIN_REQUEST:
            if self.federated:
                self._federated_join(gw, frame, rssi)
            else:
                self._central_join(gw, frame, rssi)
        else:
            self._on_data(gw, frame)

    def _on_join_window_close(self, ev: SimEvent) -> None:
        dev = self.devices[ev.target]
        if dev.state is not DeviceState.JOINING or dev.join_id != ev.payload:
            return
        dev.join_failed()
        self.counters["join_failures"] += 1
        dv = self.cfg.devices
        delay = backoff_delay(dev.failed_attempts, dv.backoff_base, dv.backoff_factor,
                              dv.backoff_cap, dv.backoff_jitter, self.rng.stream("backoff"))
        self.log.add(self.now, dev.dev_eui, "join_fail", join=ev.payload,
                     attempt=dev.failed_attempts, retry_in=delay)
        self._schedule_wake(dev, self.now + delay)

    # -- join accept delivery -----------------------------------------------

    def _projected_load(self, sf: int) -> float:
        """Expected airtime fraction of a typical device at ``sf``."""
        dv = self.cfg.devices
        payload = round((dv.payload_min + dv.payload_max) / 2)
        a, b = dv.period_min, dv.period_max
        rate = 1.0 / a if b == a else math.log(b / a) / (b - a)
        return min(dv.duty_limit, time_on_air(payload, sf, self.cfg.phy) * rate)

    def _schedule_join_accept(self, gw: Gateway, offer: dict) -> None:
        dv = self.cfg.devices
        rx1 = offer["tx_end"] + dv.rx1_delay
        rx2 = offer["tx_end"] + dv.rx2_delay
        if self.now <= rx1:
            self.sched.at(rx1, EventKind.JOIN_ACCEPT_DELIVERY, gw.id, dict(offer, stage="rx1"))
        elif self.now <= rx2:
            self.sched.at(rx2, EventKind.JOIN_ACCEPT_DELIVERY, gw.id, dict(offer, stage="rx2"))
        else:
            self.counters["join_accepts_dropped"] += 1
            self.log.add(self.now, gw.id, "ja_drop", dev=offer["dev"], join=offer["join_id"],
                         reason="late")

    def _on_join_accept(self, ev: SimEvent) -> None:
        offer = ev.payload
        if offer["stage"] == "device":
            self._device_accept(offer)
            return
        gw = self.gateways[ev.target]
        dev_eui = offer["dev"]
        if gw.registry.latest_join.get(dev_eui) != offer["join_id"]:
            self.counters["join_accepts_dropped"] += 1
            self.log.add(self.now, gw.id, "ja_drop", dev=dev_eui, join=offer["join_id"],
                         reason="stale")
            return
        airtime = time_on_air(self.cfg.devices.join_accept_payload, offer["join_sf"],
                              self.cfg.phy)
        decision = consume_duty(gw.downlink, airtime, self.now)
        if not decision.allowed:
            if offer["stage"] == "rx1":
                at = offer["tx_end"] + self.cfg.devices.rx2_delay
                self.sched.at(at, EventKind.JOIN_ACCEPT_DELIVERY, gw.id, dict(offer, stage="rx2"))
            else:
                self.counters["join_accepts_dropped"] += 1
                self.log.add(self.now, gw.id, "ja_drop", dev=dev_eui, join=offer["join_id"],
                             reason="duty")
            return
        gw.note_downlink(offer["join_ch"], airtime, self.now)
        self.counters["join_accepts_sent"] += 1
        self.log.add(self.now, gw.id, "tx", frame=offer["join_id"], ftype=FrameKind.JOIN_ACCEPT.value,
                     ch=offer["join_ch"], sf=offer["join_sf"], airtime=airtime, dev=dev_eui)
        self.sched.at(self.now + airtime, EventKind.JOIN_ACCEPT_DELIVERY, dev_eui,
                      dict(offer, stage="device", handler=gw.id))

    def _device_accept(self, offer: dict) -> None:
        dev = self.devices[offer["dev"]]
        if dev.state is not DeviceState.JOINING or dev.join_id != offer["join_id"]:
            self.log.add(self.now, dev.dev_eui, "ja_unclaimed", join=offer["join_id"])
            return
        gw = self.gateways[offer["handler"]]
        keys = offer["accept"].keys
        reg = register_device(gw.registry, dev.dev_eui, offer["channel"], offer["sf"],
                              keys.session_id, offer["join_id"], offer["load"])
        gw.reserved.pop(dev.dev_eui, None)
        if reg is None:
            self.log.add(self.now, gw.id, "register_stale", dev=dev.dev_eui,
                         join=offer["join_id"])
            return
        dev.accept(gw.id, offer["channel"], offer["sf"], keys, self.now)
        self._joined.add(dev.dev_eui)
        self.log.add(self.now, dev.dev_eui, "joined", handler=gw.id, join=offer["join_id"],
                     ch=offer["channel"], sf=int(offer["sf"]), session=keys.session_id)
        phase = self.rng.stream("uplink_phase").random()
        self._schedule_wake(dev, self.now + phase * dev.uplink_period)

    # -- centrally handled joins ---------------------------------------------

    def _central_join(self, gw: Gateway, frame: Frame, rssi: float) -> None:
        dev = self.devices[frame.dev_eui]
        if gw.actor != dev.owner:
            self.log.add(self.now, gw.id, "join_ignored", dev=dev.dev_eui, join=frame.frame_id)
            return
        key = (dev.dev_eui, frame.frame_id)
        pending = self._ns_pending.get(key)
        if pending is None:
            pending = self._ns_pending[key] = []
            self.sched.at(self.now, EventKind.CONSENSUS_TIMER, _ns_id(dev.owner), key)
        pending.append((gw.id, rssi, frame))

    def _ns_decide(self, ev: SimEvent) -> None:
        dev_eui, join_id = ev.payload
        pending = self._ns_pending.pop(ev.payload)
        gid, rssi, frame = min(pending, key=lambda p: (-p[1], p[0]))
        self.log.add(self.now, ev.target, "decision", dev=dev_eui, join=join_id, winner=gid,
                     participants=sorted(p[0] for p in pending))
        handler = self.gateways[gid]
        handler.registry.note_join(dev_eui, join_id)
        sf = choose_sf(rssi, self.cfg.sensitivity, self.cfg.protocol.sf_margin_db)
        load = self._projected_load(sf)
        ch = assign_channel(handler.occupation_vector(self.now), [], load, ChannelMode.SELFISH)
        handler.reserve(dev_eui, ch, load, frame.tx_end + self._accept_horizon)
        dev = self.devices[dev_eui]
        owner = self.gateways[dev.owner_gateway]
        prev = owner.admin.current_handler.get(dev_eui)
        keys = owner.admin.craft_join_accept(dev_eui, gid, join_id, self.now)
        if keys is None:
            self.counters["matches_rejected"] += 1
            return
        self.log.add(self.now, owner.id, "keys_issued", dev=dev_eui, join=join_id,
                     handler=gid, session=keys.session_id)
        self._log_keys(owner, keys, "app", "owner")
        if prev is not None and prev != gid and self.gateways[prev].registry.drop(dev_eui):
            self.log.add(self.now, prev, "release", dev=dev_eui, session=keys.session_id)
        handler.keys.grant_nwk(keys)
        self._log_keys(handler, keys, "nwk", "handler")
        self._schedule_join_accept(handler, {
            "dev": dev_eui, "join_id": join_id, "channel": ch, "sf": int(sf), "load": load,
            "tx_end": frame.tx_end, "join_ch": frame.channel, "join_sf": int(frame.sf),
            "accept": SealedAccept(keys)})

    def _log_keys(self, gw: Gateway, keys: SessionKeys, which: str, role: str) -> None:
        self.log.add(self.now, gw.id, "key_grant", dev=keys.dev_eui, session=keys.session_id,
                     key=which, role=role, actor=gw.actor)

    # -- data path -------------------------------------------------------------

    def _on_data(self, gw: Gateway, frame: Frame) -> None:
        sealed: SealedPayload = frame.body
        reg = gw.registry.handled.get(frame.dev_eui)
        if reg is None or reg.session_id != sealed.session_id:
            return
        dev = self.devices[frame.dev_eui]
        self.log.add(self.now, gw.id, "data_rx", dev=dev.dev_eui, frame=frame.frame_id,
                     session=sealed.session_id)
        body = {"sealed": sealed, "frame": frame.frame_id, "role": "owner"}
        if not self.federated:
            self._device_data(self.gateways[dev.owner_gateway], body)
            return
        if gw.id != dev.owner_gateway:
            self._decrypt(gw, sealed, "handler", frame.frame_id)
        self._route(gw.id, dev.owner_gateway, "DeviceData", body)

    def _decrypt(self, gw: Gateway, sealed: SealedPayload, role: str, frame_id: int) -> bool:
        ok = decrypt_app_payload(gw.keys, sealed) is not OPAQUE
        self.log.add(self.now, gw.id, "decrypt", dev=sealed.dev_eui, session=sealed.session_id,
                     frame=frame_id, role=role, actor=gw.actor, ok=ok)
        return ok

    def _device_data(self, gw: Gateway, body: dict) -> None:
        sealed = body["sealed"]
        fid = body["frame"]
        if self._decrypt(gw, sealed, body["role"], fid) and fid not in self._delivered:
            self._delivered.add(fid)
            self.log.add(self.now, gw.id, "deliver", dev=sealed.dev_eui, frame=fid,
                         actor=gw.actor)
        if body["role"] == "owner":
            c = gw.admin.delegations.get(sealed.dev_eui)
            if c is not None and c.active and c.keys_session == sealed.session_id:
                self._route(gw.id, c.renter_gateway, "DeviceData", dict(body, role="renter"))

    # -- federation: messaging -----------------------------------------------

    def _route(self, src: str, dst: str, kind: str, body: dict) -> None:
        a, b = self.gateways[src], self.gateways[dst]
        if a.cluster == b.cluster:
            self.bus.send(kind, src, dst, body)
            return
        self.bus.send("ToLeader", src, leader_address(str(a.cluster)),
                      {"kind": kind, "dest_cluster": b.cluster, "dest_gateway": dst,
                       "body": body, "request_id": f"{kind}#{next(self._request_ids)}"})

    def _on_message(self, ev: SimEvent) -> None:
        gw = self.gateways[self.bus.resolve(ev.target)]
        msg = ev.payload
        getattr(self, "_msg_" + msg.kind)(gw, msg)

    def _msg_ToLeader(self, gw: Gateway, msg) -> None:
        state = self.leaders[gw.cluster]
        b = msg.body
        if "flood" in b:
            rec = b["flood"]
            for n, out in state.originate_flood(rec.request_id, {"record": rec}):
                self._send_inter(gw, n, out)
            return
        out = state.originate(b["kind"], b["dest_cluster"], b["request_id"], b["body"], msg.src,
                              self.graph, b["dest_gateway"])
        self._leader_forward(gw, out)

    def _msg_InterCluster(self, gw: Gateway, msg) -> None:
        m: InterClusterMessage = msg.body["msg"]
        state = self.leaders[gw.cluster]
        if m.kind == SUBSCRIBE_FLOOD:
            accepted, out = state.on_flood(m)
            if not accepted:
                return
            rec = m.payload["record"]
            self.log.add(self.now, gw.id, "flood_accept", request=m.request_id,
                         cluster=gw.cluster, parent=m.parent)
            if gw.store.store(rec, self.now):
                self._start_spread(gw, rec, None)
            for n, o in out:
                self._send_inter(gw, n, o)
            return
        self._leader_forward(gw, m)

    def _send_inter(self, gw: Gateway, cluster: int, m: InterClusterMessage) -> None:
        self.bus.send("InterCluster", gw.id, leader_address(str(cluster)), {"msg": m},
                      inter_cluster=True)

    def _leader_forward(self, gw: Gateway, m: InterClusterMessage) -> None:
        if m.kind == DEVICE_DATA and gw.id != m.dest_gateway:
            self._decrypt(gw, m.payload["sealed"], "transit", m.payload["frame"])
        action, arg = self.leaders[gw.cluster].forward(m)
        if action == "deliver":
            self.bus.send(m.kind, gw.id, arg, m.payload)
        else:
            nxt, out = arg
            self.log.add(self.now, gw.id, "relay", msg=m.kind, request=m.request_id,
                         to_cluster=nxt)
            self._send_inter(gw, nxt, out)

    # -- federation: membership ----------------------------------------------

    def _gossip_soon(self, gw: Gateway) -> None:
        if not gw.gossip_pending:
            gw.gossip_pending = True
            self.sched.at(self.now, EventKind.GOSSIP_TICK, gw.id, "immediate")

    def _on_gossip(self, ev: SimEvent) -> None:
        gw = self.gateways[ev.target]
        if ev.payload == "periodic":
            self.sched.at(self.now + self.cfg.protocol.gossip_period, EventKind.GOSSIP_TICK,
                          gw.id, "periodic")
        else:
            gw.gossip_pending = False
        svc = gw.membership
        svc.rps.refresh(self.bus.cluster_members(str(gw.cluster)), gw.id,
                        self.rng.stream("gossip"))
        svc.rounds += 1
        svc.profile.channel_occupation = gw.occupation_vector(self.now)
        out = svc.outgoing(self.now)
        for n in svc.neighbours():
            self.bus.send("ProfileExchange", gw.id, n, {"descriptors": out, "reply": True})

    def _msg_ProfileExchange(self, gw: Gateway, msg) -> None:
        svc = gw.membership
        if svc.merge(msg.body["descriptors"]):
            self.log.add(self.now, gw.id, "knn", view=svc.knn.ids())
        if msg.body["reply"]:
            svc.profile.channel_occupation = gw.occupation_vector(self.now)
            self.bus.send("ProfileExchange", gw.id, msg.src,
                          {"descriptors": svc.outgoing(self.now), "reply": False})

    def _on_leader_tick(self, ev: SimEvent) -> None:
        for cid in sorted(self.leaders):
            state = self.leaders[cid]
            occ = {m: self.gateways[m].occupation(self.now)
                   for m in self.bus.cluster_members(str(cid))}
            new = elect_leader(occ)
            if new != state.leader_gateway:
                self.leaders[cid] = state.hand_off(new)
                self.bus.leaders[str(cid)] = new
                self.log.add(self.now, f"cluster:{cid}", "leader", leader=new,
                             term=self.leaders[cid].term)
        self.sched.at(self.now + self.cfg.protocol.leader_period, EventKind.LEADER_TICK, "leaders")

    def _on_expiry_tick(self, ev: SimEvent) -> None:
        pr = self.cfg.protocol
        for gw in self.gateways.values():
            purged = expiry_sweep(gw.store, self.now)
            for c in gw.admin.expire_delegations(self.now):
                self.log.add(self.now, gw.id, "delegation_lapsed", dev=c.dev_eui)
            if gw.membership.profile.evict_stale(self.now, pr.staleness_horizon):
                self._gossip_soon(gw)
            if purged:
                self.log.add(self.now, gw.id, "expiry", purged=purged)
        self.sched.at(self.now + pr.expiry_period, EventKind.PUBSUB_EXPIRY_TICK, "expiry")

    # -- federation: subscribe dissemination ---------------------------------

    def _start_spread(self, gw: Gateway, rec, source: str | None) -> None:
        pr = self.cfg.protocol
        sp = Spread(Dissemination(rec.request_id, source, pr.fanout, pr.hop_budget), rec)
        gw.spreads[rec.request_id] = sp
        self._spread_round(gw, sp)

    def _spread_round(self, gw: Gateway, sp: Spread) -> None:
        picked = sp.dissemination.next_recipients(gw.membership.neighbours(),
                                                  self.rng.stream("dissemination"))
        if not picked:
            return
        sp.answers = []
        for r in picked:
            self.bus.send("SubscribeForward", gw.id, r, {"record": sp.record})
        self.sched.at(self.now + self.cfg.protocol.dissemination_round_time,
                      EventKind.DISSEMINATION_TIMER, gw.id, sp.record.request_id)

    def _on_dissemination_timer(self, ev: SimEvent) -> None:
        gw = self.gateways[ev.target]
        sp = gw.spreads[ev.payload]
        if not sp.dissemination.answers(sp.answers, gw.membership.neighbours()):
            self._spread_round(gw, sp)

    def _msg_SubscribeForward(self, gw: Gateway, msg) -> None:
        rec = msg.body["record"]
        stored = gw.store.store(rec, self.now)
        self.bus.send("SubscribeAck", gw.id, msg.src,
                      {"request": rec.request_id, "answer": "stored" if stored else "seen"})
        if stored:
            self._start_spread(gw, rec, msg.src)

    def _msg_SubscribeAck(self, gw: Gateway, msg) -> None:
        sp = gw.spreads.get(msg.body["request"])
        if sp is not None:
            sp.answers.append(msg.body["answer"])

    # -- federation: handler election ----------------------------------------

    def _proposal(self, gw: Gateway, rssi: float) -> HandlerProposal:
        vec = gw.occupation_vector(self.now)
        return HandlerProposal(gw.id, sum(vec) / NUM_CHANNELS, rssi, len(gw.registry),
                               tuple(vec))

    def _federated_join(self, gw: Gateway, frame: Frame, rssi: float) -> None:
        rec = on_join_request(gw.store, frame.dev_eui, rssi, self.now)
        if rec is None:
            self.log.add(self.now, gw.id, "join_ignored", dev=frame.dev_eui, join=frame.frame_id)
            return
        gw.registry.note_join(frame.dev_eui, frame.frame_id)
        ctx = JoinContext(ConsensusRound(frame.dev_eui, frame.frame_id), rec, rssi, frame.tx_end,
                          frame)
        own = self._proposal(gw, rssi)
        ctx.round.add(own)
        key = (frame.dev_eui, frame.frame_id)
        gw.joins[key] = ctx
        for n in gw.membership.neighbours():
            self.bus.send("ConsensusInit", gw.id, n, {"key": key, "proposals": [own]})
        self.sched.at(self.now + self.cfg.protocol.consensus_round_time,
                      EventKind.CONSENSUS_TIMER, gw.id, key)

    def _on_proposals(self, gw: Gateway, msg) -> None:
        ctx = gw.joins.get(msg.body["key"])
        if ctx is None or ctx.round.decided is not None:
            return
        for p in msg.body["proposals"]:
            if ctx.round.add(p):
                ctx.learnt = True
        if msg.kind == "ConsensusInit" and msg.src not in ctx.replied:
            ctx.replied.add(msg.src)
            self.bus.send("ConsensusProposal", gw.id, msg.src,
                          {"key": msg.body["key"], "proposals": self._known(ctx)})

    _msg_ConsensusInit = _on_proposals
    _msg_ConsensusProposal = _on_proposals

    @staticmethod
    def _known(ctx: JoinContext) -> list[HandlerProposal]:
        return [ctx.round.proposals[g] for g in sorted(ctx.round.proposals)]

    def _on_consensus_timer(self, ev: SimEvent) -> None:
        if ev.target.startswith("ns:"):
            self._ns_decide(ev)
            return
        gw = self.gateways[ev.target]
        ctx = gw.joins[ev.payload]
        rnd = ctx.round
        rnd.round += 1
        known = self._known(ctx)
        for g in sorted(rnd.participants - {gw.id}):
            self.bus.send("ConsensusProposal", gw.id, g, {"key": ev.payload, "proposals": known})
        limit = max(self.cfg.protocol.consensus_rounds, len(rnd.participants) + 1)
        if (rnd.round >= self.cfg.protocol.consensus_rounds and not ctx.learnt) or rnd.round >= limit:
            self._decide(gw, ctx)
        else:
            ctx.learnt = False
            self.sched.at(self.now + self.cfg.protocol.consensus_round_time,
                          EventKind.CONSENSUS_TIMER, gw.id, ev.payload)

    def _decide(self, gw: Gateway, ctx: JoinContext) -> None:
        rnd = ctx.round
        winner = rnd.decide(self.weights)
        self.log.add(self.now, gw.id, "decision", dev=rnd.dev_eui, join=rnd.join_id,
                     winner=winner, participants=sorted(rnd.participants), rounds=rnd.round)
        if winner != gw.id:
            return
        sf = choose_sf(ctx.rssi, self.cfg.sensitivity, self.cfg.protocol.sf_margin_db)
        load = self._projected_load(sf)
        neigh = []
        for g in gw.membership.knn.ids():
            p = rnd.proposals.get(g)
            if p is not None and p.channel_occupation:
                neigh.append(list(p.channel_occupation))
            elif g in gw.membership.descriptors:
                neigh.append(gw.membership.descriptors[g].channel_occupation)
        ch = assign_channel(gw.occupation_vector(self.now), neigh, load, self.cfg.channel_mode)
        gw.reserve(rnd.dev_eui, ch, load, ctx.tx_end + self._accept_horizon)
        self.log.add(self.now, gw.id, "handler", dev=rnd.dev_eui, join=rnd.join_id, ch=ch,
                     sf=int(sf), owner=ctx.record.owner_gateway)
        frame = ctx.frame
        self._route(gw.id, ctx.record.owner_gateway, "PublishMatch", {
            "dev": rnd.dev_eui, "join_id": rnd.join_id, "handler": gw.id, "channel": ch,
            "sf": int(sf), "load": load, "tx_end": ctx.tx_end, "join_ch": frame.channel,
            "join_sf": int(frame.sf), "request": ctx.record.request_id})

    # -- federation: owner side ----------------------------------------------

    def _msg_PublishMatch(self, gw: Gateway, msg) -> None:
        b = dict(msg.body)
        dev_eui, handler = b["dev"], b["handler"]
        prev = gw.admin.current_handler.get(dev_eui)
        keys = gw.admin.craft_join_accept(dev_eui, handler, b["join_id"], self.now)
        if keys is None:
            self.counters["matches_rejected"] += 1
            self.log.add(self.now, gw.id, "match_rejected", dev=dev_eui, join=b["join_id"],
                         handler=handler)
            return
        self.log.add(self.now, gw.id, "keys_issued", dev=dev_eui, join=b["join_id"],
                     handler=handler, session=keys.session_id)
        self._log_keys(gw, keys, "app", "owner")
        if prev is not None and prev != handler:
            self._route(gw.id, prev, "Release", {"dev": dev_eui, "session": keys.session_id})
        c = gw.admin.delegation_for_join(dev_eui, keys.session_id, self.now)
        if c is not None:
            self.log.add(self.now, gw.id, "delegation_keys", dev=dev_eui,
                         session=keys.session_id, renter=c.renter,
                         renter_gateway=c.renter_gateway)
            self._route(gw.id, c.renter_gateway, "KeyMaterial", {"role": "renter", "keys": keys})
        nwk = SessionKeys(dev_eui, keys.nwk_s_key, "", keys.session_id, keys.valid_from)
        b.update(role="handler", nwk=nwk, accept=SealedAccept(keys))
        self._route(gw.id, handler, "KeyMaterial", b)

    def _msg_KeyMaterial(self, gw: Gateway, msg) -> None:
        b = msg.body
        if b["role"] == "renter":
            gw.keys.grant_app(b["keys"])
            self._log_keys(gw, b["keys"], "app", "renter")
            return
        gw.keys.grant_nwk(b["nwk"])
        self._log_keys(gw, b["nwk"], "nwk", "handler")
        if gw.registry.latest_join.get(b["dev"]) != b["join_id"]:
            self.log.add(self.now, gw.id, "ja_drop", dev=b["dev"], join=b["join_id"],
                         reason="stale")
            return
        self._schedule_join_accept(gw, {k: b[k] for k in (
            "dev", "join_id", "channel", "sf", "load", "tx_end", "join_ch", "join_sf", "accept")})

    def _msg_Release(self, gw: Gateway, msg) -> None:
        dev_eui = msg.body["dev"]
        reg = gw.registry.handled.get(dev_eui)
        if reg is not None and reg.session_id < msg.body["session"]:
            gw.registry.drop(dev_eui)
            self.log.add(self.now, gw.id, "release", dev=dev_eui, session=msg.body["session"])

    def _msg_DeviceData(self, gw: Gateway, msg) -> None:
        self._device_data(gw, msg.body)


def simulate(cfg: ScenarioConfig, seed: int | None = None,
             log_path: str | Path | None = None) -> tuple[RunMetrics, EventLog]:
    """Run one scenario with one seed; optionally persist the event log."""
    sim = Simulator(cfg, cfg.seeds[0] if seed is None else seed)
    metrics = sim.run()
    if log_path is not None:
        sim.log.write(log_path)
    return metrics, sim.log


def run(cfg: ScenarioConfig, seed: int | None = None) -> RunMetrics:
    return simulate(cfg, seed)[0]
