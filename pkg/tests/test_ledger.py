import math
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from bchandover.consensus import MiningConfig, dpos_produce_block, vote
from bchandover.crypto import STUB
from bchandover.ledger import (AlreadyRegistered, AttackReport, Blocked, InvalidBlock, InvalidTransaction, Ledger,
                               NotWhitelisted, StaleParent, TimeoutPolicy, UnknownUser, load_dump)
from bchandover.messages import GetBlockList, GetTranList, IniReg
from bchandover.model import Block, Status, make_transaction
from bchandover.topology import hex_grid

TOPO = hex_grid(30, 6, 100.0, 3, 50.0, spacing=200.0)


def ledger(**kw):
    return Ledger(TOPO, STUB, whitelist=frozenset(f"mu-{i}" for i in range(10)), **kw)


def req(i=0, cell=0, heading=0.0):
    return IniReg(f"mu-{i}", TOPO.cells[cell].center, heading, cell, "5G-NR", 0.3)


@given(d=st.floats(0.0, 1e5), v=st.floats(0.1, 200.0))
def test_timeout_policy_oracle(d, v):
    t = TimeoutPolicy().timeout(d, v)
    raw = 2.0 * d / (v / 3.6) * 1000.0
    assert t == pytest.approx(min(max(raw, 1000.0), 300000.0))


def test_timeout_degenerate_inputs():
    assert TimeoutPolicy().timeout(10.0, 0.0) == 300000.0
    assert TimeoutPolicy().timeout(math.inf, 5.0) == 300000.0


def test_registration_fans_out_to_home_and_predicted():
    led = ledger()
    rec, vec, msgs = led.register_mu(req(0, 7, 0.0), now=1.0, speed=5.0)
    assert rec.status is Status.REGISTERED and rec.home_cell == 7
    assert vec.predicted_cells == (7, 8)
    assert [m.controller for m in msgs] == [TOPO.controller_of(7), TOPO.controller_of(8)]
    assert vec.timeout_T == pytest.approx(TimeoutPolicy().timeout(100.0, 5.0))
    assert len(led.pending_txs) == 1 and led.pending_txs[0].verify(STUB)
    assert led.record("mu-0") == rec


def test_stationary_registration_predicts_home_only():
    _, vec, msgs = ledger().register_mu(req(1, 7), speed=0.0)
    assert vec.predicted_cells == (7,) and len(msgs) == 1
    assert vec.timeout_T == 300000.0


def test_registration_errors():
    led = ledger()
    led.register_mu(req(0))
    with pytest.raises(AlreadyRegistered):
        led.register_mu(req(0))
    with pytest.raises(NotWhitelisted):
        led.register_mu(IniReg("intruder", (0.0, 0.0), 0.0, 0, "5G-NR", 0.3))
    led.hostile_cancel("mu-0", AttackReport("mu-0", "test", 0.0, 0))
    with pytest.raises(Blocked):
        led.register_mu(req(0))
    with pytest.raises(UnknownUser):
        led.record("mu-9")


def test_operator_whitelist_override():
    led = ledger()
    led.register_mu(IniReg("guest", (0.0, 0.0), 0.0, 0, "5G-NR", 0.3), operator_whitelist=["guest"])
    assert "guest" in led.registered_users


def test_hostile_cancel_is_idempotent_and_broadcast():
    led = ledger()
    led.register_mu(req(2))
    notices = led.hostile_cancel("mu-2", AttackReport("mu-2", "flood", 1.0, 3))
    assert sorted(c for c, _ in notices) == TOPO.controllers
    assert led.record("mu-2").status is Status.BLOCKED and led.record("mu-2").keypair is None
    assert led.hostile_cancel("mu-2", AttackReport("mu-2", "flood", 2.0, 3)) == []
    with pytest.raises(Blocked):
        led.public_key("mu-2")


def test_blacklist_unregistered_only():
    led = ledger()
    assert len(led.blacklist("ghost")) == len(TOPO.controllers)
    assert led.blacklist("ghost") == []
    led.register_mu(req(3))
    with pytest.raises(AlreadyRegistered):
        led.blacklist("mu-3")


def test_alias_change_never_repeats():
    led = ledger()
    led.register_mu(req(4), speed=5.0)
    seen = {led.record("mu-4").alias}
    for _ in range(5):
        rec, msgs = led.change_alias("mu-4")
        assert rec.alias not in seen and msgs
        seen.add(rec.alias)


def _block(led, now=5000.0):
    ds = vote(TOPO.controllers, k=30)
    miner = ds.scheduled(now, 5000.0)
    block, _ = dpos_produce_block(ds, list(led.pending_txs), led.tip.header, now, miner, MiningConfig(), 30)
    return block


def test_append_block_and_pending_cleanup():
    led = ledger()
    led.register_mu(req(0), now=1.0)
    led.register_mu(req(1), now=2.0)
    block = _block(led)
    led.append_block(block)
    assert led.tip == block and led.pending_txs == []
    with pytest.raises(StaleParent):
        led.append_block(block)


def test_append_rejects_mutations():
    led = ledger()
    led.register_mu(req(0), now=1.0)
    block = _block(led)
    forged_tx = replace(block.tran_list[0], out_list=(b"evil",))
    with pytest.raises(InvalidBlock):
        led.append_block(Block(block.header, (forged_tx,)))
    with pytest.raises(InvalidBlock):
        led.append_block(Block(replace(block.header, nonce=9), block.tran_list))
    with pytest.raises(InvalidBlock):
        led.append_block(Block(block.header, ()))


def test_submit_tx_checks_signature():
    led = ledger()
    t = make_transaction(STUB.keypair(b"a"), [], [b"x"], 0.0, 0, STUB)
    led.submit_tx(t)
    with pytest.raises(InvalidTransaction):
        led.submit_tx(replace(t, timestamp=1.0))


def test_apply_dispatch_and_log():
    led = ledger()
    rec, _, _ = led.apply(req(5), now=3.0, speed=5.0)
    assert rec.net_id == "mu-5"
    assert led.apply(GetBlockList()) == led.blocks
    assert len(led.apply(GetTranList())) == 1
    assert [t for t, _, _ in led.message_log] == [3.0, 0.0, 0.0]


def test_dump_round_trip():
    led = ledger()
    led.register_mu(req(0), now=1.0)
    led.append_block(_block(led))
    assert load_dump(led.dump()) == led.blocks
    assert led.state_bytes() == led.state_bytes()


def test_reauthenticate_records_transaction():
    led = ledger()
    led.register_mu(req(6))
    led.reauthenticate("mu-6", 8, 10.0)
    assert len(led.pending_txs) == 2
