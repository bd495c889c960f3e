"""Multipath privacy-preserving transfer over the controller backhaul.

The sender encrypts the payload once for the receiver, cuts the ciphertext
into sequence-numbered parts and pushes one part down each selected path.
Intermediate links only ever see ciphertext. The receiver puts the parts
back in order before decrypting.

Delay model (fluid, per-link FIFO): a path carrying ``n`` bytes completes
after ``sum(latency + backlog / bandwidth) + n / bottleneck``.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import networkx as nx

from .crypto import REAL, CryptoBackend, DecryptFailure, IntegrityError, KeyPair, digest
from .ledger import AttackReport
from .topology import CellTopology, Link

MTU = 1500
SEQ = struct.Struct("<I")


class NotAuthentic(PermissionError):
    def __init__(self, report: AttackReport):
        super().__init__(f"sender {report.net_id} not authentic")
        self.report = report


class NoPath(ValueError):
    pass


class KTooLarge(UserWarning):
    pass


class Infeasible(ValueError):
    pass


class PartLoss(ValueError):
    def __init__(self, missing: Sequence[int]):
        super().__init__(f"parts {list(missing)} never arrived")
        self.missing = tuple(missing)


@dataclass(frozen=True)
class Path:
    links: tuple[str, ...]
    nodes: tuple[int, ...]
    bandwidth: float  # bottleneck, bytes/ms
    latency: float  # ms
    queue: float = 0.0  # backlog delay at selection time, ms

    @property
    def cost(self) -> float:
        return self.latency + self.queue

    def delay(self, nbytes: float) -> float:
        return self.cost + nbytes / self.bandwidth


@dataclass(frozen=True)
class PathSet:
    paths: tuple[Path, ...]
    requested: int
    short: bool = False  # fewer disjoint paths exist than requested

    @property
    def K(self) -> int:
        return len(self.paths)


@dataclass(frozen=True)
class TransferPlan:
    paths: PathSet
    parts: tuple[tuple[int, int], ...]  # [start, end) byte ranges, one per path
    W: tuple[float, ...]
    Ts: float
    tr: float
    V: tuple[float, ...]
    size: int
    feasible: bool
    completion: float

    @property
    def deadline(self) -> float:
        return min(self.Ts, self.tr)


@dataclass
class DeliveryReport:
    size: int
    K: int
    delay: float
    per_path_bytes: tuple[int, ...]
    feasible: bool
    Ts: float
    verified: bool = True
    duplicates: tuple[int, ...] = ()  # sequence numbers received more than once
    events: list[tuple[float, str, str]] = field(default_factory=list)

    @property
    def bandwidth(self) -> float:
        """Mean consumed bandwidth over used paths, bytes/ms within the deadline."""
        used = [b for b in self.per_path_bytes if b > 0]
        return sum(used) / len(used) / self.Ts if used else 0.0


# --- path selection -------------------------------------------------------------

def _queue(link: Link, traffic: Mapping[str, float] | None) -> float:
    return (traffic or {}).get(link.id, 0.0) / link.bandwidth


def _shortest(topo: CellTopology, src: int, dst: int, weight, banned: set[str]) -> tuple[str, ...] | None:
    """Dijkstra with ties broken by the lexicographic link-id sequence."""
    heap = [(0.0, (), src)]
    done: set[int] = set()
    while heap:
        cost, links, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        if node == dst:
            return links
        for link in topo.incident(node):
            if link.id in banned:
                continue
            nxt = link.other(node)
            if nxt not in done:
                heapq.heappush(heap, (cost + weight(link), links + (link.id,), nxt))
    return None


def _make_path(topo: CellTopology, src: int, links: Sequence[str], traffic) -> Path:
    nodes = [src]
    for lid in links:
        nodes.append(topo.links[lid].other(nodes[-1]))
    ls = [topo.links[l] for l in links]
    return Path(tuple(links), tuple(nodes), min(l.bandwidth for l in ls),
                sum(l.latency for l in ls), sum(_queue(l, traffic) for l in ls))


def _disjoint_flow(topo: CellTopology, src: int, dst: int, K: int, traffic) -> list[tuple[str, ...]]:
    g = nx.Graph()
    for link in sorted(topo.links.values(), key=lambda l: l.id):
        g.add_edge(link.a, link.b, id=link.id)
    out = []
    for nodes in nx.edge_disjoint_paths(g, src, dst, cutoff=K):
        out.append(tuple(g.edges[u, v]["id"] for u, v in zip(nodes, nodes[1:])))
    return out


def select_paths(topo: CellTopology, src: int, dst: int, K: int, traffic: Mapping[str, float] | None = None,
                 authentic: bool = True, sender: str = "", now: float = 0.0) -> PathSet:
    """Up to ``K`` link-disjoint least-cost paths, cost being latency plus queueing."""
    if not authentic:
        raise NotAuthentic(AttackReport(sender, "not-authentic", now, topo.controller_of(src)))
    if src == dst:
        raise ValueError("source and destination cell coincide")
    if K < 1:
        raise ValueError("K must be at least 1")
    weight = lambda l: l.latency + _queue(l, traffic)
    banned: set[str] = set()
    found: list[tuple[str, ...]] = []
    while len(found) < K:
        p = _shortest(topo, src, dst, weight, banned)
        if p is None:
            break
        found.append(p)
        banned.update(p)
    if not found:
        raise NoPath(f"no route from cell {src} to cell {dst}")
    if len(found) < K:
        alt = _disjoint_flow(topo, src, dst, K, traffic)
        if len(alt) > len(found):
            found = alt
    paths = sorted((_make_path(topo, src, p, traffic) for p in found), key=lambda p: (p.cost, p.links))
    return PathSet(tuple(paths), K, short=len(paths) < K)


def hop_path(topo: CellTopology, src: int, dst: int) -> tuple[str, ...]:
    p = _shortest(topo, src, dst, lambda l: 1.0, set())
    if p is None:
        raise NoPath(f"no route from cell {src} to cell {dst}")
    return p


# --- planning -------------------------------------------------------------------

def water_fill(paths: Sequence[Path], W: Sequence[float], size: int) -> list[int]:
    """Integer byte split minimising the latest path completion."""
    if size == 0:
        return [0] * len(paths)
    order = sorted(range(len(paths)), key=lambda k: (paths[k].cost, k))
    # smallest completion tau with sum_k W_k * max(0, tau - c_k) >= size
    active, tau = [], 0.0
    for i, k in enumerate(order):
        active.append(k)
        rate = sum(W[j] for j in active)
        tau = (size + sum(W[j] * paths[j].cost for j in active)) / rate
        nxt = paths[order[i + 1]].cost if i + 1 < len(order) else float("inf")
        if tau <= nxt:
            break
    share = [max(0.0, (tau - paths[k].cost) * W[k]) if k in active else 0.0 for k in range(len(paths))]
    parts = [int(s) for s in share]
    left = size - sum(parts)
    while left > 0:
        k = min(range(len(paths)), key=lambda j: (paths[j].cost + (parts[j] + 1) / W[j], j))
        parts[k] += 1
        left -= 1
    return parts


def plan_transfer(paths: PathSet, size: int, Ts: float, tr: float,
                  allocation: Sequence[float] | None = None) -> TransferPlan:
    if size <= 0:
        raise ValueError("payload must be positive")
    W = tuple(allocation) if allocation is not None else tuple(p.bandwidth for p in paths.paths)
    if len(W) != paths.K or any(w <= 0 or w > p.bandwidth + 1e-9 for w, p in zip(W, paths.paths)):
        raise ValueError("allocation must be positive and within path capacity")
    D = min(Ts, tr)
    V = tuple(w * D for w in W)
    sizes = water_fill(paths.paths, W, size)
    ranges, start = [], 0
    for s in sizes:
        ranges.append((start, start + s))
        start += s
    completion = max(p.cost + s / w for p, s, w in zip(paths.paths, sizes, W) if s > 0)
    return TransferPlan(paths, tuple(ranges), W, Ts, tr, V, size, sum(V) >= size, completion)


# --- execution ------------------------------------------------------------------

@dataclass
class LinkTrace:
    frames: dict[str, list[bytes]] = field(default_factory=dict)

    def record(self, link: str, frame: bytes) -> None:
        self.frames.setdefault(link, []).append(frame)

    def contains(self, needle: bytes) -> bool:
        return any(needle in f for fs in self.frames.values() for f in fs)


def wire_size(payload_size: int, crypto: CryptoBackend = REAL) -> int:
    return payload_size + crypto.overhead


def execute_transfer(plan: TransferPlan, payload: bytes, sender: KeyPair, receiver: KeyPair,
                     crypto: CryptoBackend = REAL, entropy: bytes | None = None,
                     faults: Mapping[int, str] | None = None, trace: LinkTrace | None = None,
                     receiver_private: bytes | None = None):
    """Send ``payload`` along ``plan`` as ciphertext parts and rebuild it at the receiver.

    ``faults`` maps a path index to ``"drop"``, ``"corrupt"`` or
    ``"duplicate"`` to emulate compromised forwarding.
    """
    if not plan.feasible:
        raise Infeasible("plan misses its deadline")
    ct = crypto.encrypt(receiver.public, payload, entropy)
    if len(ct) != plan.size:
        raise ValueError(f"plan covers {plan.size} bytes, ciphertext has {len(ct)}")
    signature = crypto.sign(sender.private, digest(ct))
    faults = faults or {}
    trace = trace if trace is not None else LinkTrace()
    events: list[tuple[float, str, str]] = []
    inbox: list[bytes] = []
    per_path = []
    for k, (path, (a, b)) in enumerate(zip(plan.paths.paths, plan.parts)):
        per_path.append(b - a)
        if b == a:
            continue
        frame = SEQ.pack(k) + ct[a:b]
        fault = faults.get(k)
        if fault == "corrupt":
            frame = frame[:-1] + bytes([frame[-1] ^ 0x01])
        for lid in path.links:
            trace.record(lid, frame)
        events.append((path.delay(b - a), "monitor_data_transient", f"path {k} {b - a} B"))
        if fault == "drop":
            continue
        inbox.append(frame)
        if fault == "duplicate":
            inbox.append(frame)
    got: dict[int, bytes] = {}
    dups: list[int] = []
    for frame in inbox:
        (seq,) = SEQ.unpack_from(frame)
        if seq in got:
            dups.append(seq)
            continue
        got[seq] = frame[SEQ.size:]
    expected = [k for k, (a, b) in enumerate(plan.parts) if b > a]
    missing = [k for k in expected if k not in got]
    if missing:
        raise PartLoss(missing)
    blob = b"".join(got[k] for k in expected)
    out = crypto.decrypt(receiver_private if receiver_private is not None else receiver.private, blob)
    report = DeliveryReport(plan.size, plan.paths.K, plan.completion, tuple(per_path), plan.feasible,
                            plan.Ts, crypto.verify(sender.public, digest(blob), signature), tuple(dups), events)
    return out, report


def baseline_single_path_transfer(topo: CellTopology, src: int, dst: int, size: int, Ts: float,
                                  traffic: Mapping[str, float] | None = None) -> DeliveryReport:
    """Fixed hop-count route, blind to traffic; the payload queues behind backlog."""
    if size <= 0:
        raise ValueError("payload must be positive")
    path = _make_path(topo, src, hop_path(topo, src, dst), traffic)
    return DeliveryReport(size, 1, path.delay(size), (size,), path.bandwidth * Ts >= size, Ts)


__all__ = [
    "MTU", "NotAuthentic", "NoPath", "KTooLarge", "Infeasible", "PartLoss", "DecryptFailure",
    "IntegrityError", "Path", "PathSet", "TransferPlan", "DeliveryReport", "LinkTrace",
    "select_paths", "hop_path", "water_fill", "plan_transfer", "execute_transfer",
    "baseline_single_path_transfer", "wire_size",
]
