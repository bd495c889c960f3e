"""The Blockchain Center: the block store plus the registry of admitted users.

The BC is a single writer. It consumes one message at a time in simulation
order, so its state is a pure function of the message sequence it has seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

from .crypto import REAL, CryptoBackend, KeyPair, digest, mac
from .messages import (BlockIdNotice, BlockMsg, GetBlockList, GetTranList, IniReg,
                       ProtocolMessage, TranMsg, UserVector, UserVectorMsg)
from .model import (Block, Encoder, MobileUserRecord, Status, Transaction, derive_alias,
                    genesis_block, make_transaction, merkle_root)
from .topology import CellTopology


class NotWhitelisted(Exception):
    pass


class AlreadyRegistered(Exception):
    pass


class Blocked(Exception):
    pass


class UnknownUser(KeyError):
    pass


class InvalidBlock(ValueError):
    pass


class StaleParent(ValueError):
    pass


class InvalidTransaction(ValueError):
    pass


@dataclass(frozen=True)
class AttackReport:
    net_id: str
    kind: str
    time: float
    reporter: int  # controller id, -1 for the BC itself
    evidence: str = ""


@dataclass(frozen=True)
class TimeoutPolicy:
    safety_factor: float = 2.0
    min_ms: float = 1000.0
    max_ms: float = 300_000.0

    def timeout(self, distance_m: float, speed_kmh: float) -> float:
        """Twice the straight-line time to the predicted boundary, clamped."""
        if speed_kmh <= 0 or not math.isfinite(distance_m):
            return self.max_ms
        t = self.safety_factor * distance_m / (speed_kmh / 3.6) * 1000.0
        return min(max(t, self.min_ms), self.max_ms)


def predict_cells(topo: CellTopology, cell: int, position, direction: float,
                  speed: float) -> tuple[int | None, float]:
    """Next cell along the straight-line heading and the distance to reach it."""
    if speed <= 0:
        return None, math.inf
    dist, nxt = topo.ray_exit(cell, position, direction)
    return nxt, dist


@dataclass
class Ledger:
    topology: CellTopology
    crypto: CryptoBackend = REAL
    seed: bytes = b"bc"
    whitelist: frozenset[str] | None = None
    timeouts: TimeoutPolicy = field(default_factory=TimeoutPolicy)

    def __post_init__(self) -> None:
        controllers = self.topology.controllers
        self.blocks: list[Block] = [genesis_block(len(controllers))]
        self.pending_txs: list[Transaction] = []
        self.registered_users: dict[str, MobileUserRecord] = {}
        self.blocked_ids: set[str] = set()
        self.controller_keys = {c: digest(self.seed + b"transfer" + str(c).encode())
                                for c in controllers}
        self.bc_keys: KeyPair = self.crypto.keypair(self.seed + b"bc-signing")
        self.vectors: dict[str, UserVector] = {}
        self.alias_history: dict[str, list[str]] = {}
        self.epochs: dict[str, int] = {}
        self.positions: dict[str, int] = {}  # last cell reported by a controller
        self.message_log: list[tuple[float, bytes, float]] = []

    # --- queries ------------------------------------------------------------

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def serve(self, msg: GetBlockList | GetTranList) -> list:
        if isinstance(msg, GetBlockList):
            return list(self.blocks)
        if isinstance(msg, GetTranList):
            return list(self.pending_txs)
        raise TypeError(f"cannot serve {type(msg).__name__}")

    def record(self, net_id: str) -> MobileUserRecord:
        try:
            return self.registered_users[net_id]
        except KeyError:
            raise UnknownUser(net_id) from None

    def public_key(self, net_id: str) -> bytes:
        rec = self.record(net_id)
        if rec.status is Status.BLOCKED:
            raise Blocked(net_id)
        return rec.keypair.public

    def keypair(self, net_id: str) -> KeyPair:
        rec = self.record(net_id)
        if rec.status is Status.BLOCKED:
            raise Blocked(net_id)
        return rec.keypair

    # --- vectors --------------------------------------------------------------

    def sign_vector(self, vector: UserVector) -> bytes:
        return self.crypto.sign(self.bc_keys.private, vector.to_bytes())

    def vector_msg(self, vector: UserVector, controller: int, signature: bytes | None = None) -> UserVectorMsg:
        sig = signature if signature is not None else self.sign_vector(vector)
        tag = mac(self.controller_keys[controller], vector.to_bytes() + sig)
        return UserVectorMsg(vector, controller, sig, tag)

    def _fan_out(self, vector: UserVector) -> list[UserVectorMsg]:
        sig = self.sign_vector(vector)
        ctrls = []
        for cell in vector.predicted_cells:
            c = self.topology.controller_of(cell)
            if c not in ctrls:
                ctrls.append(c)
        return [self.vector_msg(vector, c, sig) for c in ctrls]

    # --- operations ---------------------------------------------------------

    def register_mu(self, req: IniReg, operator_whitelist: Iterable[str] | None = None,
                    now: float = 0.0, speed: float = 0.0):
        """Admit a MU and disseminate its signed vector to the predicted cells.

        Returns ``(record, vector, messages)`` where messages go to the home
        controller and the controller of the geometrically predicted cell.
        """
        wl = self.whitelist if operator_whitelist is None else frozenset(operator_whitelist)
        if req.net_id in self.blocked_ids:
            raise Blocked(req.net_id)
        if wl is not None and req.net_id not in wl:
            raise NotWhitelisted(req.net_id)
        if req.net_id in self.registered_users:
            raise AlreadyRegistered(req.net_id)

        home = req.from_cell
        nxt, dist = predict_cells(self.topology, home, req.loc, req.dire, speed)
        timeout = self.timeouts.timeout(dist, speed)
        keys = self.crypto.keypair(self.seed + b"mu" + req.net_id.encode())
        alias = derive_alias(req.net_id, 0)
        rec = MobileUserRecord(req.net_id, alias, keys, tuple(req.loc), speed, req.dire,
                               req.phys_ly, req.rtt, home, Status.REGISTERED, timeout)
        predicted = (home,) if nxt is None else (home, nxt)
        vector = UserVector(req.net_id, alias, keys.public, req.phys_ly, req.rtt, predicted, timeout)

        self.registered_users[req.net_id] = rec
        self.vectors[req.net_id] = vector
        self.alias_history[req.net_id] = [alias]
        self.epochs[req.net_id] = 0
        self.positions[req.net_id] = home
        self._record_tx(keys, b"register", rec, now)
        return rec, vector, self._fan_out(vector)

    def _record_tx(self, keys: KeyPair, kind: bytes, rec: MobileUserRecord, now: float) -> Transaction:
        out = Encoder().raw(kind).str(rec.net_id).str(rec.alias).raw(keys.public).getvalue()
        tx = make_transaction(keys, [], [out], now, rec.home_cell, self.crypto)
        self.pending_txs.append(tx)
        return tx

    def reauthenticate(self, net_id: str, cell: int, now: float = 0.0) -> Transaction:
        """Re-validate a registered MU entering ``cell`` (baseline behaviour)."""
        rec = self.record(net_id)
        if rec.status is Status.BLOCKED:
            raise Blocked(net_id)
        keys = rec.keypair
        out = Encoder().raw(b"reauth").str(net_id).int(cell).getvalue()
        tx = make_transaction(keys, [], [out], now, cell, self.crypto)
        self.pending_txs.append(tx)
        return tx

    def update_vector(self, net_id: str, predicted: tuple[int, ...], timeout: float) -> UserVector:
        rec = self.record(net_id)
        if rec.status is Status.BLOCKED:
            raise Blocked(net_id)
        old = self.vectors[net_id]
        vec = UserVector(old.net_id, old.alias, old.public_key, old.phys_ly, old.rtt, predicted, timeout)
        self.vectors[net_id] = vec
        return vec

    def change_alias(self, net_id: str, now: float = 0.0):
        rec = self.record(net_id)
        if rec.status is Status.BLOCKED:
            raise Blocked(net_id)
        history = self.alias_history[net_id]
        epoch = self.epochs[net_id]
        alias = history[-1]
        while alias in history:
            epoch += 1
            alias = derive_alias(net_id, epoch)
        self.epochs[net_id] = epoch
        history.append(alias)
        rec = MobileUserRecord(rec.net_id, alias, rec.keypair, rec.position, rec.speed,
                               rec.direction, rec.phys_ly, rec.rtt, rec.home_cell, rec.status,
                               rec.timeout_T)
        self.registered_users[net_id] = rec
        old = self.vectors[net_id]
        vector = UserVector(net_id, alias, old.public_key, old.phys_ly, old.rtt,
                            old.predicted_cells, old.timeout_T)
        self.vectors[net_id] = vector
        self._record_tx(rec.keypair, b"alias", rec, now)
        return rec, self._fan_out(vector)

    def hostile_cancel(self, net_id: str, evidence: AttackReport) -> list[tuple[int, BlockIdNotice]]:
        """Block ``net_id`` and notify every controller. Idempotent."""
        rec = self.record(net_id)
        if rec.status is Status.BLOCKED:
            return []
        self.registered_users[net_id] = rec.transition(Status.BLOCKED)
        self.blocked_ids.add(net_id)
        self.vectors.pop(net_id, None)
        notice = BlockIdNotice(net_id)
        return [(c, notice) for c in self.topology.controllers]

    def blacklist(self, net_id: str) -> list[tuple[int, BlockIdNotice]]:
        """Bar an identity that never registered (e.g. a spoofed id)."""
        if net_id in self.registered_users:
            raise AlreadyRegistered(net_id)
        if net_id in self.blocked_ids:
            return []
        self.blocked_ids.add(net_id)
        return [(c, BlockIdNotice(net_id)) for c in self.topology.controllers]

    def submit_tx(self, tx: Transaction) -> None:
        if not tx.verify(self.crypto):
            raise InvalidTransaction(tx.tx_id.hex())
        self.pending_txs.append(tx)

    def append_block(self, block: Block) -> "Ledger":
        if block.header.prev_block_hash != self.tip.header.hash:
            raise StaleParent(block.header.prev_block_hash.hex())
        if block.header.compute_hash() != block.header.hash:
            raise InvalidBlock("header hash mismatch")
        if not block.tran_list or block.header.merkle_root != merkle_root(block.tran_list):
            raise InvalidBlock("merkle root mismatch")
        if not all(t.verify(self.crypto) for t in block.tran_list):
            raise InvalidBlock("transaction signature mismatch")
        self.blocks.append(block)
        included = {t.tx_id for t in block.tran_list}
        self.pending_txs = [t for t in self.pending_txs if t.tx_id not in included]
        return self

    def report_position(self, net_id: str, cell: int) -> None:
        if net_id in self.registered_users:
            self.positions[net_id] = cell

    # --- replay and dumps -----------------------------------------------------

    def apply(self, msg: ProtocolMessage, now: float = 0.0, speed: float = 0.0):
        """Dispatch one inbound message; every call is logged for replay."""
        self.message_log.append((now, msg.to_bytes(), speed))
        if isinstance(msg, IniReg):
            return self.register_mu(msg, now=now, speed=speed)
        if isinstance(msg, TranMsg):
            return self.submit_tx(msg.tx)
        if isinstance(msg, BlockMsg):
            return self.append_block(msg.block)
        if isinstance(msg, (GetBlockList, GetTranList)):
            return self.serve(msg)
        raise TypeError(f"BC does not accept {type(msg).__name__}")

    def state_bytes(self) -> bytes:
        enc = Encoder()
        enc.list(self.blocks, lambda e, b: b.encode(e))
        enc.list(self.pending_txs, lambda e, t: t.encode(e))
        for net_id in sorted(self.registered_users):
            r = self.registered_users[net_id]
            enc.str(r.net_id).str(r.alias).raw(r.keypair.public if r.keypair else b"")
            enc.int(r.home_cell).str(r.status.value).float(r.timeout_T)
        enc.list(sorted(self.blocked_ids), Encoder.str)
        return enc.getvalue()

    def dump(self) -> str:
        """One hex-encoded serialized block per line."""
        return "".join(b.to_bytes().hex() + "\n" for b in self.blocks)


def load_dump(text: str) -> list[Block]:
    return [Block.from_bytes(bytes.fromhex(line)) for line in text.splitlines() if line.strip()]
