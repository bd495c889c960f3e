import pytest

from bchandover.crypto import STUB
from bchandover.messages import (BlockIdNotice, BlockMsg, GetBlockList, GetTranList, HandoverNotice, IniReg,
                                 IniRegAck, TranMsg, UserVector, UserVectorMsg, decode_message)
from bchandover.model import Encoder, genesis_block, make_transaction

VEC = UserVector("mu-7", "a1b2", b"\x01" * 32, "5G-NR", 0.3, (4, 5), 1500.0)
TX = make_transaction(STUB.keypair(b"k"), [], [b"o"], 1.0, 2, STUB)

MESSAGES = [
    IniReg("mu-7", (1.5, -2.0), 0.25, 4, "5G-NR", 0.3),
    IniReg("mu-7", (0.0, 0.0), 3.0, 4, "WiFi", 1.0, to_cell=5),
    IniRegAck(("c1", "c2")),
    GetBlockList(),
    GetTranList(),
    BlockMsg(genesis_block(3)),
    TranMsg(TX),
    UserVectorMsg(VEC, 4, b"sig", b"mac"),
    HandoverNotice("mu-7", 4, 5),
    BlockIdNotice("mu-7"),
]


@pytest.mark.parametrize("msg", MESSAGES, ids=lambda m: type(m).__name__)
def test_message_round_trip(msg):
    assert decode_message(msg.to_bytes()) == msg


def test_unknown_tag_and_trailing_bytes():
    with pytest.raises(ValueError):
        decode_message(Encoder().str("nope").getvalue())
    with pytest.raises(ValueError):
        decode_message(BlockIdNotice("x").to_bytes() + b"\x00")


def test_vector_round_trip():
    from bchandover.model import Decoder
    assert UserVector.decode(Decoder(VEC.to_bytes())) == VEC
