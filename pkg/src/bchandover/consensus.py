"""Block production: delegated proof of stake among SDN controllers, and a POW miner.

DPOS blocks carry nonce 0 and cost linear transaction processing only.
POW blocks search nonces from 0 upward until the header hash has the
requested number of leading zero bits; a seeded coinbase transaction makes
the search length vary between seeds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .crypto import REAL, CryptoBackend, KeyPair, digest, mac, mac_ok
from .model import Block, BlockHeader, Encoder, Transaction, make_transaction, merkle_root, seal_header


class NoControllers(ValueError):
    pass


class NotYourSlot(Exception):
    pass


class EmptyPending(ValueError):
    pass


class PolicyDenied(PermissionError):
    pass


class Mode(enum.Enum):
    DPOS = "DPOS"
    POW = "POW"


@dataclass(frozen=True)
class MiningConfig:
    mode: Mode = Mode.DPOS
    pow_difficulty: int = 12
    dpos_slot_time: float = 5000.0  # ms per delegate turn
    delegate_count: int = 30
    c_tx: float = 0.01  # ms per transaction
    c_slot: float = 0.1  # ms per DPOS slot
    hash_cost: float = 0.001  # ms per header hash

    def __post_init__(self) -> None:
        if self.pow_difficulty < 0 or self.pow_difficulty > 256:
            raise ValueError("pow_difficulty must be in [0, 256]")
        if self.dpos_slot_time <= 0:
            raise ValueError("dpos_slot_time must be positive")
        if self.delegate_count < 1:
            raise ValueError("delegate_count must be at least 1")
        if min(self.c_tx, self.c_slot, self.hash_cost) < 0:
            raise ValueError("cost constants must be non-negative")


@dataclass(frozen=True)
class DelegateSet:
    delegates: tuple[int, ...]
    epoch: int = 0
    votes: Mapping[int, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.delegates:
            raise NoControllers("empty delegate set")

    def order(self) -> tuple[int, ...]:
        """Production order for this epoch: the ranked list rotated by the epoch."""
        r = self.epoch % len(self.delegates)
        return self.delegates[r:] + self.delegates[:r]

    def slot(self, now: float, slot_time: float) -> int:
        return int(now // slot_time) % len(self.delegates)

    def scheduled(self, now: float, slot_time: float) -> int:
        return self.order()[self.slot(now, slot_time)]


def vote(controllers: Sequence[int], stakes: Mapping[int, float] | None = None, k: int | None = None,
         epoch: int = 0) -> DelegateSet:
    """Each controller nominates itself with its stake; the top ``k`` become delegates."""
    if not controllers:
        raise NoControllers("no controllers to vote")
    k = len(controllers) if k is None else k
    if not 1 <= k <= len(controllers):
        raise ValueError(f"k must be in [1, {len(controllers)}]")
    stakes = stakes or {}
    weight = {c: float(stakes.get(c, 1.0)) for c in controllers}
    ranked = sorted(controllers, key=lambda c: (-weight[c], c))[:k]
    return DelegateSet(tuple(ranked), epoch, {c: (c,) for c in controllers})


def leading_zero_bits(h: bytes) -> int:
    n = int.from_bytes(h, "big")
    return len(h) * 8 - n.bit_length()


def dpos_produce_block(delegates: DelegateSet, pending: Sequence[Transaction], tip: BlockHeader,
                       now: float, miner: int, config: MiningConfig = MiningConfig(),
                       controllers: int = 1) -> tuple[Block, float]:
    """Seal a block as the delegate scheduled for ``now``; no hash search."""
    if miner != delegates.scheduled(now, config.dpos_slot_time):
        raise NotYourSlot(f"controller {miner} is not scheduled at t={now}")
    if not pending:
        raise EmptyPending("nothing to mine")
    txs = tuple(pending)
    header = seal_header(tip.hash, now, miner, merkle_root(txs), controllers, nonce=0)
    return Block(header, txs), config.c_tx * len(txs) + config.c_slot


def coinbase(keys: KeyPair, rng_seed: int, now: float, crypto: CryptoBackend = REAL) -> Transaction:
    extra = np.random.default_rng(rng_seed).bytes(8)
    return make_transaction(keys, [], [Encoder().raw(b"coinbase").raw(extra).getvalue()], now, -1, crypto)


def pow_produce_block(pending: Sequence[Transaction], tip: BlockHeader, difficulty: int, rng_seed: int,
                      now: float = 0.0, miner: int = -1, config: MiningConfig = MiningConfig(),
                      controllers: int = 1, keys: KeyPair | None = None,
                      crypto: CryptoBackend = REAL, max_iterations: int = 1 << 40) -> tuple[Block, float, int]:
    """Nonce search from 0. Returns the block, elapsed ms and the iteration count."""
    if not pending:
        raise EmptyPending("nothing to mine")
    keys = keys or crypto.keypair(b"pow-miner")
    txs = (coinbase(keys, rng_seed, now, crypto),) + tuple(pending)
    root = merkle_root(txs)
    pre = BlockHeader.preimage(1, tip.hash, now, controllers, root, miner)
    nonce = 0
    while nonce < max_iterations:
        h = digest(pre + nonce.to_bytes(8, "little"))
        if leading_zero_bits(h) >= difficulty:
            break
        nonce += 1
    else:
        raise RuntimeError("nonce search exhausted")
    header = BlockHeader(h, tip.hash, now, miner, root, 1, nonce, controllers)
    iterations = nonce + 1
    return Block(header, txs), config.c_tx * len(pending) + iterations * config.hash_cost, iterations


def validate_block(block: Block, tip: BlockHeader, mode: Mode, *, delegates: DelegateSet | None = None,
                   slot_time: float = MiningConfig.dpos_slot_time, difficulty: int = 0,
                   crypto: CryptoBackend = REAL) -> bool:
    h = block.header
    if h.prev_block_hash != tip.hash or h.compute_hash() != h.hash:
        return False
    if not block.tran_list:
        return False
    try:
        if h.merkle_root != merkle_root(block.tran_list):
            return False
    except Exception:
        return False
    if not all(t.verify(crypto) for t in block.tran_list):
        return False
    if mode is Mode.POW:
        return leading_zero_bits(h.hash) >= difficulty
    if delegates is None or h.nonce != 0:
        return False
    return h.miner == delegates.scheduled(h.timestamp, slot_time)


# --- rewards -------------------------------------------------------------------

@dataclass(frozen=True)
class AccessPolicy:
    """Topics a rewarded miner may read from the BC; everything else is refused."""
    allowed: frozenset[str] = frozenset({"cell-traffic", "load-report", "block-stats"})


@dataclass(frozen=True)
class DataInterestGrant:
    miner: int
    block_hash: bytes
    topics: frozenset[str]
    capability: bytes

    def payload(self) -> bytes:
        return Encoder().int(self.miner).raw(self.block_hash).list(sorted(self.topics), Encoder.str).getvalue()


def reward_miner(requester: int, block: Block, bc_key: bytes, policy: AccessPolicy = AccessPolicy(),
                 topics: Sequence[str] | None = None) -> DataInterestGrant:
    if requester != block.header.miner:
        raise PolicyDenied(f"controller {requester} did not mine this block")
    wanted = frozenset(policy.allowed if topics is None else topics)
    if not wanted <= policy.allowed:
        raise PolicyDenied(f"topics outside policy: {sorted(wanted - policy.allowed)}")
    g = DataInterestGrant(requester, block.header.hash, wanted, b"")
    return DataInterestGrant(g.miner, g.block_hash, g.topics, mac(bc_key, g.payload()))


def share_data(grant: DataInterestGrant, requester: int, topic: str, bc_key: bytes,
               chain_hashes: set[bytes] | frozenset[bytes]) -> str:
    """Check a grant before releasing ``topic``; returns the released topic name."""
    if requester != grant.miner or not mac_ok(bc_key, grant.payload(), grant.capability):
        raise PolicyDenied("grant not held by requester")
    if grant.block_hash not in chain_hashes:
        raise PolicyDenied("grant refers to an unknown block")
    if topic not in grant.topics:
        raise PolicyDenied(f"topic {topic!r} not granted")
    return topic
