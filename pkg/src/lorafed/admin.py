"""End-device ownership and symbolic key administration.

Keys are opaque tokens; "encryption" binds a payload to the application
session key token and "decryption" succeeds only for a holder of that
exact token. This is enough to audit who can read what.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Mapping

OPAQUE = object()


class DelegationError(RuntimeError):
    pass


class FairUseError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceIdentity:
    dev_eui: str
    app_eui: str
    app_key: str


@dataclass(frozen=True)
class SessionKeys:
    dev_eui: str
    nwk_s_key: str
    app_s_key: str
    session_id: int
    valid_from: float


@dataclass(frozen=True)
class SealedPayload:
    """Uplink application payload as it travels through the federation."""

    dev_eui: str
    session_id: int
    key_tag: str
    payload: object

    def __repr__(self):
        return f"SealedPayload({self.dev_eui}, session={self.session_id})"


@dataclass
class DelegationContract:
    dev_eui: str
    owner: str
    renter: str
    renter_gateway: str
    created_at: float
    expires_at: float
    keys_session: int | None = None
    active: bool = True


def _token(*parts) -> str:
    return hashlib.sha256("|".join(map(str, parts)).encode()).hexdigest()[:16]


def make_identity(dev_eui: str, owner: str, rng: random.Random) -> DeviceIdentity:
    return DeviceIdentity(dev_eui, f"app-{owner}", _token("appkey", dev_eui, rng.getrandbits(64)))


def seal(keys: SessionKeys, payload: object) -> SealedPayload:
    return SealedPayload(keys.dev_eui, keys.session_id, _token(keys.app_s_key, "tag"), payload)


@dataclass
class KeyStore:
    """Keys held by one actor's gateway."""

    holder: str
    app_sessions: dict[str, tuple[int, str]] = field(default_factory=dict)
    nwk_sessions: dict[str, tuple[int, str]] = field(default_factory=dict)

    def grant_app(self, keys: SessionKeys) -> None:
        self.app_sessions[keys.dev_eui] = (keys.session_id, keys.app_s_key)

    def grant_nwk(self, keys: SessionKeys) -> None:
        self.nwk_sessions[keys.dev_eui] = (keys.session_id, keys.nwk_s_key)

    def revoke_app(self, dev_eui: str) -> None:
        self.app_sessions.pop(dev_eui, None)


def decrypt_app_payload(store: KeyStore, message: SealedPayload) -> object:
    """Plain payload if ``store`` holds the current app session key, else ``OPAQUE``."""
    held = store.app_sessions.get(message.dev_eui)
    if held is None:
        return OPAQUE
    session_id, app_s_key = held
    if session_id != message.session_id or _token(app_s_key, "tag") != message.key_tag:
        return OPAQUE
    return message.payload


class DeviceAdmin:
    """Owner-side administration for the devices of one gateway."""

    def __init__(self, gateway_id: str, actor: str, rng: random.Random):
        self.gateway_id = gateway_id
        self.actor = actor
        self.rng = rng
        self.identities: dict[str, DeviceIdentity] = {}
        self.sessions: dict[str, SessionKeys] = {}
        self.answered_joins: dict[str, int] = {}
        self.current_handler: dict[str, str] = {}
        self.delegations: dict[str, DelegationContract] = {}
        self.keys = KeyStore(gateway_id)

    def own(self, identity: DeviceIdentity) -> None:
        self.identities[identity.dev_eui] = identity

    def craft_join_accept(self, dev_eui: str, handler: str, join_id: int,
                          now: float) -> SessionKeys | None:
        """Mint fresh session keys for one join; a join is answered at most once."""
        ident = self.identities.get(dev_eui)
        if ident is None:
            raise KeyError(f"{self.gateway_id} does not own {dev_eui}")
        if self.answered_joins.get(dev_eui, -1) >= join_id:
            return None
        self.answered_joins[dev_eui] = join_id
        prev = self.sessions.get(dev_eui)
        session_id = prev.session_id + 1 if prev else 1
        nonce = self.rng.getrandbits(64)
        keys = SessionKeys(dev_eui, _token(ident.app_key, session_id, "nwk", nonce),
                           _token(ident.app_key, session_id, "app", nonce), session_id, now)
        self.sessions[dev_eui] = keys
        self.keys.grant_app(keys)
        if handler == self.gateway_id:
            self.keys.grant_nwk(keys)
        self.current_handler[dev_eui] = handler
        return keys

    def delegate(self, dev_eui: str, renter: str, renter_gateway: str, now: float,
                 expires_at: float) -> DelegationContract:
        if dev_eui not in self.identities:
            raise DelegationError(f"{self.gateway_id} does not own {dev_eui}")
        cur = self.delegations.get(dev_eui)
        if cur is not None and cur.active:
            raise DelegationError(f"{dev_eui} already delegated to {cur.renter}")
        contract = DelegationContract(dev_eui, self.actor, renter, renter_gateway, now, expires_at)
        self.delegations[dev_eui] = contract
        return contract

    def delegation_for_join(self, dev_eui: str, session_id: int,
                            now: float) -> DelegationContract | None:
        """Contract that receives this session's keys, expiring finished ones.

        A contract covers exactly the first join cycle after it was made; the
        next join ends it and the owner is again the sole key holder.
        """
        c = self.delegations.get(dev_eui)
        if c is None or not c.active:
            return None
        if now >= c.expires_at or (c.keys_session is not None and c.keys_session != session_id):
            c.active = False
            return None
        c.keys_session = session_id
        return c

    def expire_delegations(self, now: float) -> list[DelegationContract]:
        lapsed = []
        for c in self.delegations.values():
            if c.active and c.keys_session is None and now >= c.expires_at:
                c.active = False
                lapsed.append(c)
        return lapsed


def fair_use_check(actors: Mapping[str, tuple[int, int]]) -> list[str]:
    """Actors with end-devices but no gateway. ``actors`` maps id -> (gateways, devices)."""
    return sorted(a for a, (gws, devs) in actors.items() if devs > 0 and gws < 1)
