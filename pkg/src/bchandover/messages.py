"""Protocol messages and their wire encoding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

from .model import Block, Decoder, Encoder, Transaction


@dataclass(frozen=True)
class UserVector:
    net_id: str
    alias: str
    public_key: bytes
    phys_ly: str
    rtt: float
    predicted_cells: tuple[int, ...]
    timeout_T: float

    def encode(self, enc: Encoder) -> None:
        enc.str(self.net_id).str(self.alias).raw(self.public_key).str(self.phys_ly)
        enc.float(self.rtt).list(self.predicted_cells, Encoder.int).float(self.timeout_T)

    def to_bytes(self) -> bytes:
        enc = Encoder()
        self.encode(enc)
        return enc.getvalue()

    @classmethod
    def decode(cls, dec: Decoder) -> "UserVector":
        return cls(dec.str(), dec.str(), dec.raw(), dec.str(), dec.float(),
                   tuple(dec.list(Decoder.int)), dec.float())


class ProtocolMessage:
    tag: ClassVar[str]
    _fields: ClassVar[tuple[tuple[str, str], ...]] = ()

    def encode(self, enc: Encoder) -> None:
        for name, kind in self._fields:
            _PUT[kind](enc, getattr(self, name))

    def to_bytes(self) -> bytes:
        enc = Encoder().str(self.tag)
        self.encode(enc)
        return enc.getvalue()

    @classmethod
    def decode_fields(cls, dec: Decoder) -> "ProtocolMessage":
        return cls(*(_GET[kind](dec) for _, kind in cls._fields))


_PUT = {
    "str": Encoder.str,
    "int": Encoder.int,
    "float": Encoder.float,
    "raw": Encoder.raw,
    "opt_int": lambda e, v: e.int(-1 if v is None else v),
    "point": lambda e, v: e.float(v[0]).float(v[1]),
    "strs": lambda e, v: e.list(v, Encoder.str),
    "block": lambda e, v: v.encode(e),
    "tx": lambda e, v: v.encode(e),
    "vector": lambda e, v: v.encode(e),
}
_GET = {
    "str": Decoder.str,
    "int": Decoder.int,
    "float": Decoder.float,
    "raw": Decoder.raw,
    "opt_int": lambda d: (lambda v: None if v == -1 else v)(d.int()),
    "point": lambda d: (d.float(), d.float()),
    "strs": lambda d: tuple(d.list(Decoder.str)),
    "block": Block.decode,
    "tx": Transaction.decode,
    "vector": UserVector.decode,
}


@dataclass(frozen=True)
class IniReg(ProtocolMessage):
    net_id: str
    loc: tuple[float, float]
    dire: float
    from_cell: int
    phys_ly: str
    rtt: float
    to_cell: int | None = None
    tag: ClassVar[str] = "Ini_reg"
    _fields = (("net_id", "str"), ("loc", "point"), ("dire", "float"), ("from_cell", "int"),
               ("phys_ly", "str"), ("rtt", "float"), ("to_cell", "opt_int"))


@dataclass(frozen=True)
class IniRegAck(ProtocolMessage):
    peer_list: tuple[str, ...]
    tag: ClassVar[str] = "Ini_reg_ack"
    _fields = (("peer_list", "strs"),)


@dataclass(frozen=True)
class GetBlockList(ProtocolMessage):
    tag: ClassVar[str] = "Get_block_list"


@dataclass(frozen=True)
class GetTranList(ProtocolMessage):
    tag: ClassVar[str] = "Get_tran_list"


@dataclass(frozen=True)
class BlockMsg(ProtocolMessage):
    block: Block
    tag: ClassVar[str] = "block"
    _fields = (("block", "block"),)


@dataclass(frozen=True)
class TranMsg(ProtocolMessage):
    tx: Transaction
    tag: ClassVar[str] = "tran"
    _fields = (("tx", "tx"),)


@dataclass(frozen=True)
class UserVectorMsg(ProtocolMessage):
    """BC-signed user vector; ``mac`` authenticates it under the receiver's transfer key."""
    vector: UserVector
    controller: int
    bc_signature: bytes
    mac: bytes
    tag: ClassVar[str] = "user_vector"
    _fields = (("vector", "vector"), ("controller", "int"), ("bc_signature", "raw"), ("mac", "raw"))


@dataclass(frozen=True)
class HandoverNotice(ProtocolMessage):
    net_id: str
    from_cell: int
    to_cell: int
    tag: ClassVar[str] = "handover_notice"
    _fields = (("net_id", "str"), ("from_cell", "int"), ("to_cell", "int"))


@dataclass(frozen=True)
class BlockIdNotice(ProtocolMessage):
    net_id: str
    tag: ClassVar[str] = "block_id"
    _fields = (("net_id", "str"),)


MESSAGE_TYPES: dict[str, type[ProtocolMessage]] = {
    cls.tag: cls for cls in (IniReg, IniRegAck, GetBlockList, GetTranList, BlockMsg, TranMsg,
                             UserVectorMsg, HandoverNotice, BlockIdNotice)
}


def decode_message(data: bytes) -> ProtocolMessage:
    dec = Decoder(data)
    tag = dec.str()
    try:
        cls = MESSAGE_TYPES[tag]
    except KeyError:
        raise ValueError(f"unknown message tag {tag!r}") from None
    msg = cls.decode_fields(dec)
    if not dec.done():
        raise ValueError("trailing bytes after message")
    return msg
