import hashlib
import struct
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from bchandover.crypto import STUB
from bchandover.model import (ZERO_HASH, Block, Decoder, EmptyBlock, Encoder, InvalidTransition, MobileUserRecord,
                              Status, Transaction, compact_size, derive_alias, genesis_block, make_transaction,
                              merkle_root, seal_header)


def _sha(b):
    return hashlib.sha256(b).digest()


def merkle_oracle(ids):
    """Recursive formulation: split the padded leaf list into halves."""
    nodes = [_sha(i) for i in ids]

    def level_up(ns):
        if len(ns) == 1:
            return ns[0]
        if len(ns) % 2:
            ns = ns + [ns[-1]]
        return level_up([_sha(ns[i] + ns[i + 1]) for i in range(0, len(ns), 2)])

    return level_up(nodes)


def tx(i=0, cell=0, crypto=STUB):
    return make_transaction(crypto.keypair(b"k%d" % i), [b"in"], [b"out-%d" % i], float(i), cell, crypto)


@given(st.lists(st.one_of(st.binary(max_size=40), st.integers(-2**62, 2**62), st.text(max_size=20),
                          st.floats(allow_nan=False)), max_size=12))
def test_encoder_round_trip(items):
    enc = Encoder()
    for v in items:
        {bytes: enc.raw, int: enc.int, str: enc.str, float: enc.float}[type(v)](v)
    dec = Decoder(enc.getvalue())
    out = [{bytes: dec.raw, int: dec.int, str: dec.str, float: dec.float}[type(v)]() for v in items]
    assert out == items
    assert dec.done()


def test_encoding_is_length_prefixed():
    assert Encoder().raw(b"ab").getvalue() == b"\x02\x00\x00\x00ab"
    assert Encoder().int(1).getvalue() == struct.pack("<I", 8) + struct.pack("<q", 1)


@pytest.mark.parametrize("n,expected", [
    (0, b"\x00"), (252, b"\xfc"), (253, b"\xfd\xfd\x00"), (0xFFFF, b"\xfd\xff\xff"),
    (0x10000, b"\xfe\x00\x00\x01\x00"), (2**32, b"\xff" + struct.pack("<Q", 2**32)),
])
def test_compact_size(n, expected):
    assert compact_size(n) == expected
    assert 1 <= len(compact_size(n)) <= 9


@given(st.integers(1, 33))
def test_merkle_root_matches_recursive_oracle(n):
    txs = [tx(i) for i in range(n)]
    assert merkle_root(txs) == merkle_oracle([t.tx_id for t in txs])


def test_merkle_root_rejects_empty():
    with pytest.raises(EmptyBlock):
        merkle_root([])


def test_transaction_signature_and_id():
    t = tx(3, cell=5)
    assert t.verify(STUB)
    assert replace(t, out_list=(b"forged",)).verify(STUB) is False
    assert replace(t, originating_cell=6).verify(STUB) is False
    assert Transaction.decode(Decoder(t.to_bytes())) == t


def test_block_round_trip_and_seal():
    g = genesis_block(30)
    assert g.is_genesis and g.merkle_ok()
    txs = (tx(1), tx(2), tx(3))
    h = seal_header(g.header.hash, 5.0, 7, merkle_root(txs), 30)
    b = Block(h, txs)
    assert h.compute_hash() == h.hash and b.merkle_ok()
    assert Block.from_bytes(b.to_bytes()) == b
    assert b.tx_counter_bytes == b"\x03"
    assert g.header.prev_block_hash == ZERO_HASH
    with pytest.raises(ValueError):
        Block.from_bytes(b.to_bytes() + b"\x00")


def _rec(status=Status.REGISTERED):
    return MobileUserRecord("mu-1", "alias", STUB.keypair(b"x"), (0.0, 0.0), 5.0, 0.0, "5G-NR", 0.3, 0, status)


def test_status_transitions():
    r = _rec()
    a = r.transition(Status.ASSOCIATED)
    assert a.transition(Status.ASSOCIATED).status is Status.ASSOCIATED
    blocked = a.transition(Status.BLOCKED)
    assert blocked.keypair is None
    with pytest.raises(InvalidTransition):
        blocked.transition(Status.ASSOCIATED)
    with pytest.raises(InvalidTransition):
        a.transition(Status.REGISTERED)


def test_record_validation():
    with pytest.raises(ValueError):
        replace(_rec(), speed=-1.0)
    with pytest.raises(ValueError):
        replace(_rec(), timeout_T=0.0)


def test_alias_is_deterministic_and_epoch_dependent():
    assert derive_alias("mu-1", 0) == derive_alias("mu-1", 0)
    assert derive_alias("mu-1", 0) != derive_alias("mu-1", 1)
    assert "mu-1" not in derive_alias("mu-1", 0)
