"""Core ledger and user types with their canonical byte encoding.

Canonical form: every field is written as a little-endian ``u32`` length
followed by its payload, in declaration order. Integers are 8-byte signed
little-endian and floats are IEEE-754 doubles. Sequences carry a ``u32``
count followed by their length-prefixed items.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .crypto import DIGEST_SIZE, REAL, CryptoBackend, KeyPair, digest

ZERO_HASH = bytes(DIGEST_SIZE)
BLOCK_VERSION = 1


class EmptyBlock(ValueError):
    pass


class InvalidTransition(ValueError):
    pass


# --- canonical encoding -----------------------------------------------------

class Encoder:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def raw(self, b: bytes) -> "Encoder":
        self._parts.append(struct.pack("<I", len(b)))
        self._parts.append(b)
        return self

    def int(self, v: int) -> "Encoder":
        return self.raw(struct.pack("<q", v))

    def float(self, v: float) -> "Encoder":
        return self.raw(struct.pack("<d", v))

    def str(self, s: str) -> "Encoder":
        return self.raw(s.encode())

    def bool(self, v: bool) -> "Encoder":
        return self.raw(b"\x01" if v else b"\x00")

    def list(self, items: Iterable, put) -> "Encoder":
        items = list(items)
        self._parts.append(struct.pack("<I", len(items)))
        for it in items:
            put(self, it)
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Decoder:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def _u32(self) -> int:
        if self.pos + 4 > len(self.data):
            raise ValueError("truncated encoding")
        (n,) = struct.unpack_from("<I", self.data, self.pos)
        self.pos += 4
        return n

    def raw(self) -> bytes:
        n = self._u32()
        if self.pos + n > len(self.data):
            raise ValueError("truncated encoding")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b

    def int(self) -> int:
        return struct.unpack("<q", self.raw())[0]

    def float(self) -> float:
        return struct.unpack("<d", self.raw())[0]

    def str(self) -> str:
        return self.raw().decode()

    def bool(self) -> bool:
        return self.raw() == b"\x01"

    def list(self, get) -> list:
        return [get(self) for _ in range(self._u32())]

    def done(self) -> bool:
        return self.pos == len(self.data)


def compact_size(n: int) -> bytes:
    """Variable-length count of at most 9 bytes."""
    if n < 0xFD:
        return struct.pack("<B", n)
    if n <= 0xFFFF:
        return b"\xfd" + struct.pack("<H", n)
    if n <= 0xFFFFFFFF:
        return b"\xfe" + struct.pack("<I", n)
    return b"\xff" + struct.pack("<Q", n)


# --- users -------------------------------------------------------------------

class Status(enum.Enum):
    REGISTERED = "Registered"
    ASSOCIATED = "Associated"
    BLOCKED = "Blocked"


ALLOWED_TRANSITIONS = frozenset({
    (Status.REGISTERED, Status.ASSOCIATED),
    (Status.ASSOCIATED, Status.ASSOCIATED),
    (Status.REGISTERED, Status.BLOCKED),
    (Status.ASSOCIATED, Status.BLOCKED),
})


def check_transition(old: Status, new: Status) -> None:
    if (old, new) not in ALLOWED_TRANSITIONS:
        raise InvalidTransition(f"{old.value} -> {new.value}")


@dataclass(frozen=True)
class MobileUserRecord:
    net_id: str
    alias: str
    keypair: KeyPair | None  # scrubbed once Blocked
    position: tuple[float, float]
    speed: float  # km/h
    direction: float  # radians
    phys_ly: str
    rtt: float  # ms
    home_cell: int
    status: Status = Status.REGISTERED
    timeout_T: float = 1000.0  # ms

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        if self.rtt < 0:
            raise ValueError("rtt must be non-negative")
        if not self.timeout_T > 0:
            raise ValueError("timeout_T must be positive")

    @property
    def speed_mps(self) -> float:
        return self.speed / 3.6

    def transition(self, new: Status, **changes) -> "MobileUserRecord":
        check_transition(self.status, new)
        if new is Status.BLOCKED:
            changes["keypair"] = None
        return replace(self, status=new, **changes)


def derive_alias(net_id: str, epoch: int) -> str:
    e = Encoder().str(net_id).int(epoch).getvalue()
    return digest(e)[:12].hex()


# --- transactions and blocks ------------------------------------------------

@dataclass(frozen=True)
class Transaction:
    tx_id: bytes
    in_list: tuple[bytes, ...]
    out_list: tuple[bytes, ...]
    timestamp: float
    signature: bytes
    originating_cell: int
    sender: bytes  # originator public key

    @staticmethod
    def body(in_list: Sequence[bytes], out_list: Sequence[bytes], timestamp: float,
             originating_cell: int, sender: bytes) -> bytes:
        enc = Encoder()
        enc.list(in_list, Encoder.raw).list(out_list, Encoder.raw)
        enc.float(timestamp).int(originating_cell).raw(sender)
        return enc.getvalue()

    def body_bytes(self) -> bytes:
        return self.body(self.in_list, self.out_list, self.timestamp,
                         self.originating_cell, self.sender)

    def compute_id(self) -> bytes:
        return digest(self.body_bytes() + Encoder().raw(self.signature).getvalue())

    def verify(self, crypto: CryptoBackend = REAL) -> bool:
        return (self.tx_id == self.compute_id()
                and crypto.verify(self.sender, self.body_bytes(), self.signature))

    def encode(self, enc: Encoder) -> None:
        enc.raw(self.tx_id).list(self.in_list, Encoder.raw).list(self.out_list, Encoder.raw)
        enc.float(self.timestamp).raw(self.signature).int(self.originating_cell).raw(self.sender)

    def to_bytes(self) -> bytes:
        enc = Encoder()
        self.encode(enc)
        return enc.getvalue()

    @classmethod
    def decode(cls, dec: Decoder) -> "Transaction":
        return cls(tx_id=dec.raw(), in_list=tuple(dec.list(Decoder.raw)),
                   out_list=tuple(dec.list(Decoder.raw)), timestamp=dec.float(),
                   signature=dec.raw(), originating_cell=dec.int(), sender=dec.raw())


def make_transaction(keypair: KeyPair, in_list: Sequence[bytes], out_list: Sequence[bytes],
                     timestamp: float, originating_cell: int,
                     crypto: CryptoBackend = REAL) -> Transaction:
    body = Transaction.body(in_list, out_list, timestamp, originating_cell, keypair.public)
    sig = crypto.sign(keypair.private, body)
    tx_id = digest(body + Encoder().raw(sig).getvalue())
    return Transaction(tx_id, tuple(in_list), tuple(out_list), timestamp, sig,
                       originating_cell, keypair.public)


def merkle_root(txs: Sequence[Transaction]) -> bytes:
    """Binary Merkle root over ``hash(tx_id)`` leaves; odd levels repeat the last node."""
    if not txs:
        raise EmptyBlock("merkle root of an empty transaction list")
    level = [digest(t.tx_id) for t in txs]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [digest(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


@dataclass(frozen=True)
class BlockHeader:
    hash: bytes
    prev_block_hash: bytes
    timestamp: float
    miner: int
    merkle_root: bytes
    block_version: int = BLOCK_VERSION
    nonce: int = 0
    controllers: int = 1  # S, number of SDN controllers

    @staticmethod
    def preimage(block_version: int, prev_block_hash: bytes, timestamp: float,
                 controllers: int, merkle_root: bytes, miner: int) -> bytes:
        enc = Encoder().int(block_version).raw(prev_block_hash).float(timestamp)
        return enc.int(controllers).raw(merkle_root).int(miner).getvalue()

    def own_preimage(self) -> bytes:
        return self.preimage(self.block_version, self.prev_block_hash, self.timestamp,
                             self.controllers, self.merkle_root, self.miner)

    def compute_hash(self) -> bytes:
        return digest(self.own_preimage() + struct.pack("<Q", self.nonce))

    def encode(self, enc: Encoder) -> None:
        enc.raw(self.hash).raw(self.prev_block_hash).float(self.timestamp).int(self.miner)
        enc.raw(self.merkle_root).int(self.block_version).int(self.nonce).int(self.controllers)

    @classmethod
    def decode(cls, dec: Decoder) -> "BlockHeader":
        return cls(hash=dec.raw(), prev_block_hash=dec.raw(), timestamp=dec.float(),
                   miner=dec.int(), merkle_root=dec.raw(), block_version=dec.int(),
                   nonce=dec.int(), controllers=dec.int())


def seal_header(prev_block_hash: bytes, timestamp: float, miner: int, merkle: bytes,
                controllers: int, nonce: int = 0, block_version: int = BLOCK_VERSION) -> BlockHeader:
    pre = BlockHeader.preimage(block_version, prev_block_hash, timestamp, controllers, merkle, miner)
    h = digest(pre + struct.pack("<Q", nonce))
    return BlockHeader(h, prev_block_hash, timestamp, miner, merkle, block_version, nonce, controllers)


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    tran_list: tuple[Transaction, ...] = field(default_factory=tuple)

    @property
    def tx_count(self) -> int:
        return len(self.tran_list)

    @property
    def tx_counter_bytes(self) -> bytes:
        return compact_size(len(self.tran_list))

    @property
    def is_genesis(self) -> bool:
        return self.header.prev_block_hash == ZERO_HASH and not self.tran_list

    def merkle_ok(self) -> bool:
        if not self.tran_list:
            return self.header.merkle_root == ZERO_HASH
        return self.header.merkle_root == merkle_root(self.tran_list)

    def encode(self, enc: Encoder) -> None:
        self.header.encode(enc)
        enc.raw(self.tx_counter_bytes)
        enc.list(self.tran_list, lambda e, t: t.encode(e))

    def to_bytes(self) -> bytes:
        enc = Encoder()
        self.encode(enc)
        return enc.getvalue()

    @classmethod
    def decode(cls, dec: Decoder) -> "Block":
        header = BlockHeader.decode(dec)
        dec.raw()  # tx counter, redundant with the list count
        return cls(header, tuple(dec.list(Transaction.decode)))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        dec = Decoder(data)
        block = cls.decode(dec)
        if not dec.done():
            raise ValueError("trailing bytes after block")
        return block


def genesis_block(controllers: int = 1) -> Block:
    return Block(seal_header(ZERO_HASH, 0.0, -1, ZERO_HASH, controllers))
