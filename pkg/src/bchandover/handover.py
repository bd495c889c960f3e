"""State machines for attaching to an AP and for moving between APs or cells.

Every operation returns a :class:`HandoverEvent` together with the updated
user record and its ordered message trace. Timing is the sum of link
latencies on the critical path; central servers (BC, auth server) are
modelled by a ``server`` callable mapping arrival time to completion time,
so the engine can plug in its FIFO queues.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

from .crypto import REAL, CryptoBackend, mac_ok
from .ledger import AttackReport, Blocked, Ledger, TimeoutPolicy
from .messages import UserVectorMsg
from .model import MobileUserRecord, Status
from .topology import CellTopology

Server = Callable[[float], float]


def _instant(t: float) -> float:
    return t


class NotValidated(Exception):
    pass


class NotAssociated(Exception):
    pass


class NotPreValidated(Exception):
    pass


class SameAp(ValueError):
    pass


class Kind(enum.Enum):
    ASSOCIATE = "Associate"
    INTRA = "IntraCell"
    INTER = "InterCell"


@dataclass(frozen=True)
class Latencies:
    mu_ap: float = 0.1
    ap_ctrl: float = 0.05
    ctrl_ctrl: float = 0.05
    ctrl_bc: float = 0.2
    ctrl_auth: float = 0.5
    verify: float = 0.05  # signature check against the flow-table key

    def __post_init__(self) -> None:
        for name in ("mu_ap", "ap_ctrl", "ctrl_ctrl", "ctrl_bc", "ctrl_auth", "verify"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class Hop:
    t: float  # send time, ms
    src: str
    dst: str
    kind: str
    size: int
    sync: bool = True  # on the handover's critical path


@dataclass(frozen=True)
class HandoverEvent:
    net_id: str
    kind: Kind
    from_ap: int | None
    to_ap: int
    t_start: float
    t_end: float
    message_count: int
    reauthenticated: bool
    from_cell: int = -1
    to_cell: int = -1
    auth_steps: int = 0  # MU to BC/auth-server steps (B)

    @property
    def delay(self) -> float:
        return self.t_end - self.t_start


@dataclass
class FlowEntry:
    public_key: bytes
    alias: str
    deadline: float
    ap: int | None = None
    policy: str = "forward"
    expected: bool = True  # the MU is predicted to arrive here
    arrived: bool = False
    reported: bool = False


@dataclass
class FlowTable:
    cell: int
    controller: int
    entries: dict[str, FlowEntry] = field(default_factory=dict)

    def install(self, net_id: str, public_key: bytes, alias: str, deadline: float,
                expected: bool = True) -> FlowEntry:
        e = self.entries.get(net_id)
        if e is None:
            e = self.entries[net_id] = FlowEntry(public_key, alias, deadline, expected=expected)
        else:
            e.public_key, e.alias = public_key, alias
            e.deadline = max(e.deadline, deadline)
            e.expected = e.expected or expected
            e.reported = False
        return e

    def withdraw(self, net_id: str) -> None:
        """Cancel an arrival expectation that no longer holds."""
        e = self.entries.get(net_id)
        if e is not None and not e.arrived:
            e.expected = False

    def purge(self, net_id: str) -> bool:
        return self.entries.pop(net_id, None) is not None

    def expire(self, now: float) -> list[str]:
        """Drop entries whose deadline passed and that need no follow-up."""
        gone = [k for k, e in self.entries.items()
                if e.deadline < now and (e.arrived or not e.expected or e.reported) and e.ap is None]
        for k in gone:
            del self.entries[k]
        return gone


def tables_for(topo: CellTopology) -> dict[int, FlowTable]:
    return {c.id: FlowTable(c.id, c.controller) for c in topo.cells.values()}


def install_vector(table: FlowTable, msg: UserVectorMsg, transfer_key: bytes, bc_public: bytes,
                   now: float, crypto: CryptoBackend = REAL, expected: bool = True) -> bool:
    """Authenticate a BC vector (MAC plus BC signature) and install it; False if rejected."""
    body = msg.vector.to_bytes()
    if not mac_ok(transfer_key, body + msg.bc_signature, msg.mac):
        return False
    if not crypto.verify(bc_public, body, msg.bc_signature):
        return False
    v = msg.vector
    table.install(v.net_id, v.public_key, v.alias, now + v.timeout_T, expected)
    return True


def block_notice(tables: dict[int, FlowTable], net_id: str) -> int:
    return sum(t.purge(net_id) for t in tables.values())


# --- prediction and timeouts ----------------------------------------------------

def compute_timeout(distance_m: float, speed_kmh: float, policy: TimeoutPolicy = TimeoutPolicy()) -> float:
    return policy.timeout(distance_m, speed_kmh)


def predict_next_cell(mu: MobileUserRecord, topo: CellTopology, cell: int | None = None) -> int | None:
    if mu.speed <= 0:
        return None
    cell = topo.cell_at(mu.position) if cell is None else cell
    if cell is None:
        return None
    return topo.ray_exit(cell, mu.position, mu.direction)[1]


def timeout_check(table: FlowTable, now: float) -> list[AttackReport]:
    reports = []
    for net_id in sorted(table.entries):
        e = table.entries[net_id]
        if e.expected and not e.arrived and not e.reported and e.deadline < now:
            e.reported = True
            reports.append(AttackReport(net_id, "timeout", now, table.controller,
                                        f"deadline {e.deadline:.3f} ms passed in cell {table.cell}"))
    return reports


# --- state machines -------------------------------------------------------------

def _mu(mu: MobileUserRecord) -> str:
    return f"mu:{mu.net_id}"


def _check_live(mu: MobileUserRecord) -> None:
    if mu.status is Status.BLOCKED:
        raise Blocked(mu.net_id)


def _attach(mu: MobileUserRecord, ap: int, now: float, lat: Latencies, trace: list[Hop]) -> float:
    """Association request and accept between MU and AP; returns completion time."""
    trace.append(Hop(now, _mu(mu), f"ap:{ap}", "assoc_req", 32))
    t = now + lat.mu_ap + lat.verify
    trace.append(Hop(t, f"ap:{ap}", _mu(mu), "assoc_accept", 32))
    return t + lat.mu_ap


def associate(mu: MobileUserRecord, ap: int, topo: CellTopology, tables: dict[int, FlowTable],
              now: float = 0.0, lat: Latencies = Latencies()):
    _check_live(mu)
    if mu.status is not Status.REGISTERED:
        raise NotValidated(f"{mu.net_id} is {mu.status.value}, not Registered")
    cell = topo.aps[ap].cell
    entry = tables[cell].entries.get(mu.net_id)
    if entry is None:
        raise NotValidated(f"no flow entry for {mu.net_id} in cell {cell}")
    trace: list[Hop] = []
    t_end = _attach(mu, ap, now, lat, trace)
    entry.ap, entry.arrived = ap, True
    ctrl = f"ctrl:{topo.controller_of(cell)}"
    trace.append(Hop(t_end, ctrl, "bc", "position", 16, sync=False))
    ev = HandoverEvent(mu.net_id, Kind.ASSOCIATE, None, ap, now, t_end, 2, False, -1, cell)
    return ev, mu.transition(Status.ASSOCIATED, home_cell=cell), trace


def intra_cell_handoff(mu: MobileUserRecord, current_ap: int, target_ap: int, topo: CellTopology,
                       tables: dict[int, FlowTable], now: float = 0.0, lat: Latencies = Latencies()):
    _check_live(mu)
    if mu.status is not Status.ASSOCIATED:
        raise NotAssociated(mu.net_id)
    if target_ap == current_ap:
        raise SameAp(target_ap)
    cell = topo.aps[current_ap].cell
    if topo.aps[target_ap].cell != cell:
        raise ValueError("intra-cell handoff across cells")
    trace: list[Hop] = []
    t_end = _attach(mu, target_ap, now, lat, trace)
    trace.append(Hop(t_end, f"ap:{target_ap}", f"ctrl:{topo.controller_of(cell)}", "flow_update", 16, sync=False))
    tables[cell].entries[mu.net_id].ap = target_ap
    ev = HandoverEvent(mu.net_id, Kind.INTRA, current_ap, target_ap, now, t_end, 3, False, cell, cell)
    return ev, mu.transition(Status.ASSOCIATED), trace


def inter_cell_handover(mu: MobileUserRecord, current_ap: int, target_ap: int, topo: CellTopology,
                        tables: dict[int, FlowTable], bc: Ledger | None = None, now: float = 0.0,
                        lat: Latencies = Latencies(), server: Server = _instant, fallback: bool = True):
    """Move to another cell on the strength of a pre-installed flow entry.

    Without an entry the MU is re-registered through the BC (``fallback``)
    and the event is tagged ``reauthenticated``.
    """
    _check_live(mu)
    if mu.status is not Status.ASSOCIATED:
        raise NotAssociated(mu.net_id)
    src, dst = topo.aps[current_ap].cell, topo.aps[target_ap].cell
    if src == dst:
        raise ValueError("inter-cell handover within one cell")
    entry = tables[dst].entries.get(mu.net_id)
    if entry is None:
        if not fallback:
            raise NotPreValidated(f"cell {dst} holds no entry for {mu.net_id}")
        return reauth_handover(mu, current_ap, target_ap, topo, tables, bc, now, lat, server)
    trace: list[Hop] = []
    t_end = _attach(mu, target_ap, now, lat, trace)
    entry.ap, entry.arrived = target_ap, True
    old = tables[src].entries.get(mu.net_id)
    if old is not None:
        old.ap = None
    c_new, c_old = topo.controller_of(dst), topo.controller_of(src)
    trace.append(Hop(t_end, f"ctrl:{c_new}", f"ctrl:{c_old}", "handover_notice", 16, sync=False))
    trace.append(Hop(t_end, f"ctrl:{c_new}", "bc", "position", 16, sync=False))
    if bc is not None:
        bc.report_position(mu.net_id, dst)
    ev = HandoverEvent(mu.net_id, Kind.INTER, current_ap, target_ap, now, t_end, 4, False, src, dst)
    return ev, mu.transition(Status.ASSOCIATED, home_cell=dst), trace


def reauth_handover(mu: MobileUserRecord, current_ap: int, target_ap: int, topo: CellTopology,
                    tables: dict[int, FlowTable], bc: Ledger | None, now: float = 0.0,
                    lat: Latencies = Latencies(), server: Server = _instant):
    """Full BC authentication on cell entry: request and ack through AP and controller."""
    _check_live(mu)
    src, dst = topo.aps[current_ap].cell, topo.aps[target_ap].cell
    ctrl = f"ctrl:{topo.controller_of(dst)}"
    ap = f"ap:{target_ap}"
    trace = [Hop(now, _mu(mu), ap, "Ini_reg", 32)]
    t = now + lat.mu_ap
    trace.append(Hop(t, ap, ctrl, "Ini_reg", 32))
    t += lat.ap_ctrl
    trace.append(Hop(t, ctrl, "bc", "Ini_reg", 32))
    t = server(t + lat.ctrl_bc)
    trace.append(Hop(t, "bc", ctrl, "user_vector", 16))
    t += lat.ctrl_bc
    if bc is not None:
        bc.reauthenticate(mu.net_id, dst, t)
        bc.report_position(mu.net_id, dst)
    tables[dst].install(mu.net_id, mu.keypair.public, mu.alias, t + mu.timeout_T)
    trace.append(Hop(t, ctrl, ap, "Ini_reg_ack", 32))
    t += lat.ap_ctrl
    trace.append(Hop(t, ap, _mu(mu), "Ini_reg_ack", 32))
    t += lat.mu_ap
    t_end = _attach(mu, target_ap, t, lat, trace)
    e = tables[dst].entries[mu.net_id]
    e.ap, e.arrived = target_ap, True
    old = tables[src].entries.get(mu.net_id)
    if old is not None:
        old.ap = None
    ev = HandoverEvent(mu.net_id, Kind.INTER, current_ap, target_ap, now, t_end, len(trace), True,
                       src, dst, auth_steps=2)
    return ev, mu.transition(Status.ASSOCIATED, home_cell=dst), trace


def handshake_handover(mu: MobileUserRecord, current_ap: int | None, target_ap: int, topo: CellTopology,
                       tables: dict[int, FlowTable], now: float = 0.0, lat: Latencies = Latencies(),
                       server: Server = _instant, kind: Kind = Kind.INTER):
    """Three-way handshake with a remote authentication server on every cell entry."""
    _check_live(mu)
    dst = topo.aps[target_ap].cell
    src = topo.aps[current_ap].cell if current_ap is not None else -1
    leg = lat.mu_ap + lat.ap_ctrl + lat.ctrl_auth
    trace = [Hop(now, _mu(mu), "auth", "auth_request", 32)]
    t = server(now + leg)
    trace.append(Hop(t, "auth", _mu(mu), "auth_challenge", 32))
    t += leg
    trace.append(Hop(t, _mu(mu), "auth", "auth_response", 32))
    t = server(t + leg)
    trace.append(Hop(t, "auth", f"ctrl:{topo.controller_of(dst)}", "auth_accept", 16))
    t += lat.ctrl_auth
    tables[dst].install(mu.net_id, mu.keypair.public, mu.alias, t + mu.timeout_T)
    t_end = _attach(mu, target_ap, t, lat, trace)
    e = tables[dst].entries[mu.net_id]
    e.ap, e.arrived = target_ap, True
    if src >= 0 and mu.net_id in tables[src].entries:
        tables[src].entries[mu.net_id].ap = None
    ev = HandoverEvent(mu.net_id, kind, current_ap, target_ap, now, t_end, len(trace),
                       True, src, dst, auth_steps=3)
    return ev, mu.transition(Status.ASSOCIATED, home_cell=dst), trace


def auth_round_trips(trace: list[Hop]) -> int:
    """Messages exchanged with an authentication authority (BC or auth server)."""
    return sum(1 for h in trace if h.sync and ("auth" in (h.src, h.dst) or "bc" in (h.src, h.dst)))
