import random

import pytest

from lorafed.admin import (OPAQUE, DelegationError, DeviceAdmin, KeyStore, decrypt_app_payload,
                           fair_use_check, make_identity, seal)


@pytest.fixture
def admin():
    a = DeviceAdmin("own0", "A", random.Random(1))
    a.own(make_identity("dev1", "A", random.Random(2)))
    return a


def test_join_answered_once(admin):
    keys = admin.craft_join_accept("dev1", "other", 7, 0.0)
    assert keys.session_id == 1
    assert admin.craft_join_accept("dev1", "other", 7, 1.0) is None
    assert admin.craft_join_accept("dev1", "other", 6, 1.0) is None
    assert admin.craft_join_accept("dev1", "other", 8, 2.0).session_id == 2


def test_unknown_device(admin):
    with pytest.raises(KeyError):
        admin.craft_join_accept("nope", "x", 1, 0.0)


def test_only_app_key_holder_reads(admin):
    keys = admin.craft_join_accept("dev1", "h", 1, 0.0)
    msg = seal(keys, "hello")
    handler = KeyStore("h")
    handler.grant_nwk(keys)
    assert decrypt_app_payload(admin.keys, msg) == "hello"
    assert decrypt_app_payload(handler, msg) is OPAQUE
    assert decrypt_app_payload(KeyStore("t"), msg) is OPAQUE


def test_old_session_unreadable_after_rekey(admin):
    old = admin.craft_join_accept("dev1", "h", 1, 0.0)
    renter = KeyStore("r")
    renter.grant_app(old)
    new = admin.craft_join_accept("dev1", "h", 2, 10.0)
    assert decrypt_app_payload(renter, seal(new, "x")) is OPAQUE
    assert decrypt_app_payload(admin.keys, seal(new, "x")) == "x"


def test_owner_as_handler_gets_nwk(admin):
    admin.craft_join_accept("dev1", "own0", 1, 0.0)
    assert "dev1" in admin.keys.nwk_sessions


def test_delegation_covers_one_session(admin):
    c = admin.delegate("dev1", "C", "c0", 0.0, 1000.0)
    assert admin.delegation_for_join("dev1", 1, 5.0) is c
    assert admin.delegation_for_join("dev1", 1, 6.0) is c
    assert admin.delegation_for_join("dev1", 2, 7.0) is None
    assert not c.active


def test_delegation_errors_and_expiry(admin):
    with pytest.raises(DelegationError):
        admin.delegate("nope", "C", "c0", 0.0, 10.0)
    admin.delegate("dev1", "C", "c0", 0.0, 10.0)
    with pytest.raises(DelegationError):
        admin.delegate("dev1", "D", "d0", 1.0, 10.0)
    assert [c.dev_eui for c in admin.expire_delegations(20.0)] == ["dev1"]
    assert admin.delegation_for_join("dev1", 1, 21.0) is None


def test_fair_use_check():
    assert fair_use_check({"A": (1, 10), "B": (0, 5), "C": (0, 0)}) == ["B"]
