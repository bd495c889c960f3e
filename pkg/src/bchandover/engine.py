"""Deterministic discrete-event engine driving all protocol state machines.

Time is in milliseconds. Events execute in ``(time, sequence)`` order.
Mobility advances in fixed ticks; inside a tick, cell-boundary crossings
and wall reflections are located exactly along each straight segment.

Randomness comes from independent named streams spawned off the master
seed, so every model sees identical user trajectories for the same seed.
"""

from __future__ import annotations

import enum
import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import handover as ho
from .attacks import (AttackPlan, DeliveryMonitor, Detection, DetectionReport, DuplicateMonitor,
                      make_plan)
from .consensus import (AccessPolicy, DelegateSet, MiningConfig, Mode, PolicyDenied, dpos_produce_block,
                        pow_produce_block, reward_miner, share_data, validate_block, vote)
from .crypto import digest, get_backend
from .handover import FlowTable, HandoverEvent, Hop, Kind, Latencies
from .ledger import AlreadyRegistered, AttackReport, Blocked, Ledger, NotWhitelisted, TimeoutPolicy
from .messages import IniReg
from .model import Encoder, MobileUserRecord, Status, make_transaction
from .privacy import (Infeasible, IntegrityError, LinkTrace, PartLoss, execute_transfer, plan_transfer,
                      select_paths, wire_size)
from .scenario import Model, Scenario
from .topology import CellTopology, hex_grid

TWO_PI = 2.0 * math.pi


class EventKind(enum.Enum):
    MOVE = "Move"
    REGISTER = "Register"
    ASSOCIATE = "Associate"
    HANDOFF = "Handoff"
    HANDOVER = "Handover"
    MINE = "Mine"
    TRANSFER = "Transfer"
    ATTACK_PROBE = "AttackProbe"
    TIMEOUT_SCAN = "TimeoutScan"
    METRIC_SAMPLE = "MetricSample"
    BACKGROUND = "Background"


@dataclass(order=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(default=None, compare=False)


class EventQueue:
    """Min-heap on ``(time, seq)`` that refuses to schedule into the past."""

    def __init__(self) -> None:
        self._heap: list[Event] = []
        self._seq = 0
        self.now = 0.0
        self._last = (-math.inf, -1)

    def push(self, time: float, kind: EventKind, payload: Any = None) -> Event:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time} before now={self.now}")
        ev = Event(time, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        key = (ev.time, ev.seq)
        assert key > self._last, "event order violated"
        self._last = key
        self.now = ev.time
        return ev

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class Server:
    """Single FIFO server; jobs are served in submission order."""
    free_at: float = 0.0
    busy: float = 0.0
    jobs: int = 0

    def submit(self, arrival: float, service: float) -> float:
        start = max(arrival, self.free_at)
        self.free_at = start + service
        self.busy += service
        self.jobs += 1
        return self.free_at


# --- mobility ---------------------------------------------------------------------

@dataclass(frozen=True)
class Walker:
    position: tuple[float, float]
    direction: float  # radians
    speed: float  # km/h
    clock: float = 0.0  # s since the last direction draw


def reflect_move(p, theta: float, dist: float, bounds) -> tuple[tuple[float, float], float]:
    """Move ``dist`` metres from ``p`` inside ``bounds``, mirroring off the walls."""
    x0, y0, x1, y1 = bounds
    x, y = p
    for _ in range(64):
        if dist <= 0:
            break
        dx, dy = math.cos(theta), math.sin(theta)
        tx = (x1 - x) / dx if dx > 1e-12 else (x0 - x) / dx if dx < -1e-12 else math.inf
        ty = (y1 - y) / dy if dy > 1e-12 else (y0 - y) / dy if dy < -1e-12 else math.inf
        t = max(min(tx, ty), 0.0)
        if t >= dist:
            x, y = x + dx * dist, y + dy * dist
            break
        x, y = x + dx * t, y + dy * t
        dist -= t
        if tx <= ty + 1e-12:
            theta = math.pi - theta
        if ty <= tx + 1e-12:
            theta = -theta
    return (x, y), theta % TWO_PI


def mobility_step(w: Walker, dt: float, rng: np.random.Generator, bounds,
                  period: float = 3.0) -> Walker:
    """Advance ``dt`` seconds; the heading is redrawn each time ``period`` seconds elapse."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    pos, theta, clock = w.position, w.direction, w.clock
    v = w.speed / 3.6
    left = dt
    while left > 1e-12:
        step = min(left, period - clock)
        pos, theta = reflect_move(pos, theta, v * step, bounds)
        clock += step
        left -= step
        if clock >= period - 1e-12:
            theta = float(rng.uniform(0.0, TWO_PI))
            clock = 0.0
    return Walker(pos, theta, w.speed, clock)


# --- artifacts ----------------------------------------------------------------------

@dataclass
class RunArtifacts:
    scenario: Scenario
    events: list[dict]
    handovers: list[tuple[HandoverEvent, float]]  # event, utilisation at its start
    samples: list[dict]
    ledger_dump: str
    mining: list[dict]
    transfers: list[dict]
    detection: DetectionReport
    conservation: dict[str, int]
    t1: np.ndarray  # per-user signalling airtime, ms
    active: np.ndarray  # per-user time in the network, ms
    meta: dict


def streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("mobility", "attacks", "consensus", "traffic", "transfers")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def build_topology(s: Scenario) -> CellTopology:
    topo = hex_grid(s.cells, s.cols, s.cell_radius, s.aps_per_cell, s.ap_ring, s.link_bandwidth,
                    s.link_latency, spacing=s.ap_spacing)
    topo.validate()
    return topo


class Simulation:
    def __init__(self, s: Scenario):
        self.s = s
        self.model = s.model
        self.crypto = get_backend(s.crypto)
        self.rng = streams(s.seed)
        self.topo = build_topology(s)
        self.lat = Latencies(s.mu_ap, s.ap_ctrl, s.ctrl_ctrl, s.ctrl_bc, s.ctrl_auth, s.verify)
        self.timeouts = TimeoutPolicy()
        self.q = EventQueue()
        self.end = s.duration * 1000.0
        self.tables = ho.tables_for(self.topo)
        self.server = Server()
        n = s.users
        self.ids = [f"mu-{i:04d}" for i in range(n)]
        self.index = {nid: i for i, nid in enumerate(self.ids)}
        self.ledger = None
        if self.model is not Model.NETWORK_BASED:
            self.ledger = Ledger(self.topo, self.crypto, seed=b"bc-%d" % s.seed, whitelist=frozenset(self.ids),
                                 timeouts=self.timeouts)
        self.mining_cfg = MiningConfig(Mode.DPOS if self.model is Model.PROPOSED else Mode.POW,
                                       s.pow_difficulty, s.Tcp, s.delegate_count, s.c_tx, s.c_slot, s.hash_cost)
        self.plan: AttackPlan = make_plan(s, self.topo, self.rng["attacks"])

        # kinematic state
        mob = self.rng["mobility"]
        x0, y0, x1, y1 = self.topo.bounds
        self.pos = np.column_stack([mob.uniform(x0, x1, n), mob.uniform(y0, y1, n)])
        self.theta = mob.uniform(0.0, TWO_PI, n)
        self.join = np.sort(mob.uniform(0.0, s.join_window * 1000.0, n))
        self.v = s.speed / 3.6  # m/s
        self.cell = self.topo.cells_at(self.pos)
        self.exit_d = np.zeros(n)
        self.next_c = np.full(n, -1)
        self.wall_d = np.zeros(n)
        self.pred = np.full(n, -1)
        self.ap_local = np.zeros(n, dtype=int)
        self.moving = np.zeros(n, dtype=bool)
        self.associated = np.zeros(n, dtype=bool)
        self.blocked = np.zeros(n, dtype=bool)
        self.assoc_time = np.full(n, np.nan)
        self.recs: list[MobileUserRecord | None] = [None] * n
        self.t1 = np.zeros(n)
        ids = sorted(self.topo.cells)
        self.ap_ids = np.array([self.topo.cells[c].aps for c in ids])
        self.ap_pos = np.array([[self.topo.aps[a].position for a in self.topo.cells[c].aps] for c in ids])

        # accounting
        self.events: list[dict] = []
        self.handovers: list[tuple[HandoverEvent, float]] = []
        self.samples: list[dict] = []
        self.mining: list[dict] = []
        self.transfers: list[dict] = []
        self.overhead_bytes = 0
        self.control_bytes = 0
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.pending = 0
        self.detections: dict[str, Detection] = {}
        self.dup_monitor = DuplicateMonitor(s.dup_threshold, s.dup_window * 1000.0)
        self.delivery = DeliveryMonitor(s.fault_threshold)
        self.flood_onset: dict[int, float] = {}
        self.rejoins_left = self.plan.rejoin
        self.access = AccessPolicy()
        self.bc_grants = []

        # background load
        traffic = self.rng["traffic"]
        nb = s.requests + s.transactions
        self.bg_times = np.sort(self.end * np.sqrt(traffic.uniform(0.0, 1.0, nb)))
        kinds = np.array([0] * s.requests + [1] * s.transactions)
        self.bg_kind = traffic.permutation(kinds)
        self.bg_sender = traffic.integers(0, max(n, 1), nb)

    # --- helpers ----------------------------------------------------------------

    def utilisation(self, t: float) -> float:
        w = self.s.util_window * 1000.0
        lo, hi = np.searchsorted(self.bg_times, [t - w, t], side="right")
        return float((hi - lo) * self.s.bc_service / w)

    def log(self, t: float, kind: str, **kw) -> None:
        rec = {"t": round(t, 6), "kind": kind}
        rec.update(kw)
        self.events.append(rec)

    def account(self, i: int, trace: list[Hop]) -> None:
        mu = f"mu:{self.ids[i]}" if i >= 0 else None
        for h in trace:
            self.emit(h.t)
            if mu is not None and (h.src == mu or h.dst == mu):
                self.t1[i] += self.s.mu_ap

    def emit(self, t: float, n: int = 1, dropped: int = 0) -> None:
        """Count ``n`` messages sent at ``t``, sorted by their fate at the end of the run."""
        self.sent += n
        self.dropped += dropped
        if t > self.end:
            self.pending += n - dropped
        else:
            self.delivered += n - dropped

    def recompute(self, idx: np.ndarray) -> None:
        if len(idx) == 0:
            return
        d, nx_ = self.topo.ray_exits(self.cell[idx], self.pos[idx], self.theta[idx])
        self.exit_d[idx] = d
        self.next_c[idx] = nx_
        x0, y0, x1, y1 = self.topo.bounds
        dx, dy = np.cos(self.theta[idx]), np.sin(self.theta[idx])
        px, py = self.pos[idx, 0], self.pos[idx, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(dx > 1e-12, (x1 - px) / dx, np.where(dx < -1e-12, (x0 - px) / dx, np.inf))
            ty = np.where(dy > 1e-12, (y1 - py) / dy, np.where(dy < -1e-12, (y0 - py) / dy, np.inf))
        self.wall_d[idx] = np.maximum(np.minimum(tx, ty), 0.0)

    def nearest_local_ap(self, i: int) -> int:
        d = np.hypot(*(self.ap_pos[self.cell[i]] - self.pos[i]).T)
        return int(np.argmin(d))

    def ap_of(self, i: int) -> int:
        return int(self.ap_ids[self.cell[i], self.ap_local[i]])

    def bc_job(self, service: float):
        return lambda t: self.server.submit(t, service)

    # --- scheduling -------------------------------------------------------------

    def schedule_all(self) -> None:
        s = self.s
        for i in range(s.users):
            self.q.push(float(self.join[i]), EventKind.REGISTER, i)
        tick = s.tick * 1000.0
        for k in range(1, int(self.end // tick) + 1):
            self.q.push(k * tick, EventKind.MOVE, k)
        for k in range(1, int(self.end // 1000.0) + 1):
            self.q.push(k * 1000.0, EventKind.TIMEOUT_SCAN, k)
            if self.plan.flooders or self.plan.linkability:
                self.q.push(k * 1000.0, EventKind.ATTACK_PROBE, k)
        if self.model is not Model.NETWORK_BASED:
            for k in range(1, int(self.end // s.Tcp) + 1):
                self.q.push(k * s.Tcp, EventKind.MINE, k)
        for k in range(1, int(self.end // (s.sample_period * 1000.0)) + 1):
            self.q.push(k * s.sample_period * 1000.0, EventKind.METRIC_SAMPLE, k)
        for j, t in enumerate(self.bg_times):
            self.q.push(float(t), EventKind.BACKGROUND, j)
        for t, fake in self.plan.spoofed:
            self.q.push(t, EventKind.ATTACK_PROBE, ("spoofed", fake))
        for t, victim in self.plan.replayed:
            # a replay needs a captured registration, so it follows the victim's join
            t = max(t, float(self.join[victim]) + 1000.0)
            self.q.push(t, EventKind.ATTACK_PROBE, ("replayed", victim))
        if s.transfers:
            tr = self.rng["transfers"]
            lo = min(s.join_window * 1000.0 + 1000.0, self.end / 2)
            for t in np.sort(tr.uniform(lo, self.end, s.transfers)):
                self.q.push(float(t), EventKind.TRANSFER, None)

    def run(self) -> RunArtifacts:
        self.schedule_all()
        handlers = {
            EventKind.REGISTER: self.on_register,
            EventKind.ASSOCIATE: self.on_associate,
            EventKind.MOVE: self.on_move,
            EventKind.TIMEOUT_SCAN: self.on_timeout_scan,
            EventKind.ATTACK_PROBE: self.on_attack_probe,
            EventKind.MINE: self.on_mine,
            EventKind.METRIC_SAMPLE: self.on_sample,
            EventKind.BACKGROUND: self.on_background,
            EventKind.TRANSFER: self.on_transfer,
        }
        while self.q:
            ev = self.q.pop()
            if ev.time > self.end:
                break
            handlers[ev.kind](ev.time, ev.payload)
        return self.artifacts()

    # --- registration and association ----------------------------------------------

    def ini_reg(self, i: int) -> IniReg:
        cell = int(self.cell[i])
        return IniReg(self.ids[i], (float(self.pos[i, 0]), float(self.pos[i, 1])), float(self.theta[i]), cell,
                      "5G-NR", 2 * (self.s.mu_ap + self.s.ap_ctrl))

    def on_register(self, t: float, i: int) -> None:
        s, lat = self.s, self.lat
        self.moving[i] = True
        self.recompute(np.array([i]))
        self.ap_local[i] = self.nearest_local_ap(i)
        ap = self.ap_of(i)
        if self.model is Model.NETWORK_BASED:
            keys = self.crypto.keypair(b"op-%d-" % s.seed + self.ids[i].encode())
            d = self.timeouts.timeout(self.exit_d[i], s.speed)
            rec = MobileUserRecord(self.ids[i], self.ids[i], keys, tuple(self.pos[i]), s.speed,
                                   float(self.theta[i]), "5G-NR", 0.3, int(self.cell[i]), Status.REGISTERED, d)
            ev, rec, trace = ho.handshake_handover(rec, None, ap, self.topo, self.tables, t, lat,
                                                   self.bc_job(s.auth_service), kind=Kind.ASSOCIATE)
            self.recs[i] = rec
            self.overhead_bytes += 3 * s.M + s.N
            self.account(i, trace)
            self.q.push(ev.t_end, EventKind.ASSOCIATE, (i, ev))
            self.log(t, "register", mu=self.ids[i], cell=int(self.cell[i]), steps=3)
            return
        req = self.ini_reg(i)
        up = t + lat.mu_ap + lat.ap_ctrl + lat.ctrl_bc
        done = self.server.submit(up, s.auth_service)
        rec, vector, msgs = self.ledger.register_mu(req, now=done, speed=s.speed)
        for m in msgs:
            table = self.tables[self.topo.cell_of_controller(m.controller)]
            ok = ho.install_vector(table, m, self.ledger.controller_keys[m.controller], self.ledger.bc_keys.public,
                                   done + lat.ctrl_bc, self.crypto)
            assert ok, "BC vector failed authentication"
        self.recs[i] = rec
        self.pred[i] = vector.predicted_cells[1] if len(vector.predicted_cells) > 1 else -1
        self.overhead_bytes += 2 * s.M + len(msgs) * s.N
        trace = [Hop(t, f"mu:{self.ids[i]}", f"ap:{ap}", "Ini_reg", s.M),
                 Hop(done + lat.ctrl_bc + lat.ap_ctrl, f"ap:{ap}", f"mu:{self.ids[i]}", "Ini_reg_ack", s.M)]
        self.account(i, trace)
        self.emit(done, 2 + len(msgs))  # AP->controller->BC relays and the fan-out
        ack = done + lat.ctrl_bc + lat.ap_ctrl + lat.mu_ap
        # the home controller expects the association right after the ack
        self.tables[req.from_cell].entries[self.ids[i]].deadline = ack + self.timeouts.min_ms
        self.log(t, "register", mu=self.ids[i], cell=req.from_cell, fanout=len(msgs), done=round(ack, 6))
        if i in self.plan.numb:
            return  # registers, then stays silent
        self.q.push(ack, EventKind.ASSOCIATE, (i, None))

    def on_associate(self, t: float, payload) -> None:
        i, ev = payload
        if self.blocked[i]:
            return
        if ev is None:
            cell = int(self.cell[i])
            table = self.tables[cell]
            if self.ids[i] not in table.entries:
                # crossed into another cell while registering: home controller forwards the vector
                home = self.recs[i].home_cell
                src = self.tables[home].entries[self.ids[i]]
                table.install(self.ids[i], src.public_key, src.alias, t + self.recs[i].timeout_T)
                self.control_bytes += self.s.N
                self.emit(t)
            self.ap_local[i] = self.nearest_local_ap(i)
            ev, rec, trace = ho.associate(self.recs[i], self.ap_of(i), self.topo, self.tables, t, self.lat)
            self.recs[i] = rec
            self.account(i, trace)
            if self.ledger is not None:
                self.ledger.report_position(self.ids[i], cell)
        self.associated[i] = True
        self.assoc_time[i] = t
        self.handovers.append((ev, self.utilisation(ev.t_start)))
        self.log(t, "associate", mu=self.ids[i], ap=ev.to_ap, delay=round(ev.delay, 6))
        if ev.to_cell != self.cell[i]:
            # walked on while the handshake was queued: counts as a cell entry
            self.ap_local[i] = self.topo.cells[ev.to_cell].aps.index(ev.to_ap)
            self.cross(i, ev.to_cell, int(self.cell[i]), t)
        if self.model is Model.PROPOSED:
            self.repredict(i, t)
        if i in self.plan.flooders:
            self.flood_onset[i] = t + self.plan.flooders[i]

    # --- mobility ---------------------------------------------------------------------

    def on_move(self, t: float, k: int) -> None:
        s = self.s
        tick = s.tick * 1000.0
        period = max(int(round(s.direction_period / s.tick)), 1)
        if k % period == 0:
            self.theta = self.rng["mobility"].uniform(0.0, TWO_PI, s.users)
            idx = np.flatnonzero(self.moving & ~self.blocked)
            self.recompute(idx)
            if self.model is Model.PROPOSED:
                for i in idx[self.associated[idx]]:
                    self.repredict(int(i), t - tick)
        movers = self.moving & ~self.blocked
        step = self.v * s.tick
        simple = movers & (step < self.exit_d) & (step < self.wall_d)
        d = np.column_stack([np.cos(self.theta), np.sin(self.theta)])
        self.pos[simple] += step * d[simple]
        self.exit_d[simple] -= step
        self.wall_d[simple] -= step
        for i in np.flatnonzero(movers & ~simple):
            self.walk(int(i), t - tick, step)
        self.check_handoffs(t)

    def walk(self, i: int, t0: float, dist: float) -> None:
        t = t0
        ms_per_m = 1000.0 / self.v
        for _ in range(32):
            if dist <= 1e-12:
                return
            wall, ex = self.wall_d[i], self.exit_d[i]
            if wall <= ex and wall <= dist:
                self.pos[i] += wall * np.array([math.cos(self.theta[i]), math.sin(self.theta[i])])
                dist -= wall
                t += wall * ms_per_m
                _, hit_x, hit_y = self.topo.wall_distance(self.pos[i], self.theta[i])
                th = self.theta[i]
                if hit_x:
                    th = math.pi - th
                if hit_y:
                    th = -th
                self.theta[i] = th % TWO_PI
                self.recompute(np.array([i]))
                if self.associated[i] and self.model is Model.PROPOSED:
                    self.repredict(i, t)
            elif ex <= dist:
                self.pos[i] += ex * np.array([math.cos(self.theta[i]), math.sin(self.theta[i])])
                dist -= ex
                t += ex * ms_per_m
                old, new = int(self.cell[i]), int(self.next_c[i])
                if new < 0:  # leaving coverage: turn back
                    self.theta[i] = (self.theta[i] + math.pi) % TWO_PI
                    self.recompute(np.array([i]))
                    continue
                self.cell[i] = new
                self.recompute(np.array([i]))
                if self.associated[i]:
                    self.cross(i, old, new, t)
            else:
                self.pos[i] += dist * np.array([math.cos(self.theta[i]), math.sin(self.theta[i])])
                self.exit_d[i] -= dist
                self.wall_d[i] -= dist
                return

    def repredict(self, i: int, t: float) -> None:
        """Serving controller forwards the user's vector to the controller it is heading for."""
        new = int(self.next_c[i]) if self.exit_d[i] < self.wall_d[i] else -1
        old = int(self.pred[i])
        nid = self.ids[i]
        if old >= 0 and old != new and old != self.cell[i]:
            self.tables[old].withdraw(nid)
            self.control_bytes += self.s.N
            self.emit(t)
        if new >= 0:
            entry = self.tables[int(self.cell[i])].entries.get(nid)
            if entry is not None:
                T = self.timeouts.timeout(float(self.exit_d[i]), self.s.speed)
                self.tables[new].install(nid, entry.public_key, entry.alias, t + self.lat.ctrl_ctrl + T)
                self.control_bytes += self.s.N
                self.emit(t)
        self.pred[i] = new

    def cross(self, i: int, old: int, new: int, t: float) -> None:
        s, lat = self.s, self.lat
        cur_ap = int(self.ap_ids[old, self.ap_local[i]])
        self.ap_local[i] = self.nearest_local_ap(i)
        target = self.ap_of(i)
        if self.model is Model.PROPOSED:
            ev, rec, trace = ho.inter_cell_handover(self.recs[i], cur_ap, target, self.topo, self.tables, self.ledger,
                                                    t, lat, self.bc_job(s.auth_service))
            if ev.reauthenticated:
                self.overhead_bytes += 2 * s.M + s.N
            self.repredict(i, t)
        elif self.model is Model.POW_BASED:
            ev, rec, trace = ho.reauth_handover(self.recs[i], cur_ap, target, self.topo, self.tables, self.ledger,
                                                t, lat, self.bc_job(s.auth_service))
            self.overhead_bytes += 2 * s.M + s.N
        else:
            ev, rec, trace = ho.handshake_handover(self.recs[i], cur_ap, target, self.topo, self.tables, t, lat,
                                                   self.bc_job(s.auth_service))
            self.overhead_bytes += 3 * s.M + s.N
        self.recs[i] = rec
        self.account(i, trace)
        self.handovers.append((ev, self.utilisation(t)))
        self.log(t, "handover", mu=self.ids[i], src=old, dst=new, delay=round(ev.delay, 6),
                 reauth=ev.reauthenticated, msgs=ev.message_count)

    def check_handoffs(self, t: float) -> None:
        idx = np.flatnonzero(self.associated & ~self.blocked)
        if len(idx) == 0:
            return
        d = np.linalg.norm(self.ap_pos[self.cell[idx]] - self.pos[idx, None, :], axis=2)
        best = np.argmin(d, axis=1)
        cur = d[np.arange(len(idx)), self.ap_local[idx]]
        switch = (best != self.ap_local[idx]) & (cur > d[np.arange(len(idx)), best] + self.s.hysteresis)
        for j in np.flatnonzero(switch):
            i = int(idx[j])
            cur_ap = self.ap_of(i)
            self.ap_local[i] = int(best[j])
            ev, rec, trace = ho.intra_cell_handoff(self.recs[i], cur_ap, self.ap_of(i), self.topo, self.tables, t,
                                                   self.lat)
            self.recs[i] = rec
            self.account(i, trace)
            self.handovers.append((ev, self.utilisation(t)))

    # --- periodic scans -------------------------------------------------------------

    def on_timeout_scan(self, t: float, k: int) -> None:
        if self.ledger is None:
            return
        for cell in sorted(self.tables):
            table = self.tables[cell]
            for report in ho.timeout_check(table, t):
                self.assess(report, t)
            table.expire(t)

    def assess(self, report: AttackReport, t: float) -> None:
        """BC follow-up on a timeout: dismissed if the user is attached anywhere."""
        i = self.index.get(report.net_id)
        if i is None or self.blocked[i]:
            return
        if self.associated[i]:
            self.log(t, "timeout_dismissed", mu=report.net_id, cell=report.reporter)
            return
        self.block(i, report, t, kind="numb", attack_class=2, t_attack=float(self.join[i]))

    def block(self, i: int, report: AttackReport, t: float, kind: str, attack_class: int, t_attack: float,
              at_join: bool = False) -> None:
        nid = self.ids[i]
        notices = self.ledger.hostile_cancel(nid, report)
        purged = ho.block_notice(self.tables, nid)
        self.emit(t, len(notices))
        self.blocked[i] = True
        self.associated[i] = False
        self.recs[i] = self.ledger.record(nid)
        self.dup_monitor.forget(nid)
        self.detections[nid] = Detection(nid, kind, attack_class, t_attack, t, at_join)
        self.log(t, "blocked", mu=nid, reason=kind, notices=len(notices), purged=purged)
        if kind == "flood" and self.rejoins_left > 0:
            self.rejoins_left -= 1
            self.q.push(t + 2000.0, EventKind.ATTACK_PROBE, ("blocked", i))

    def on_attack_probe(self, t: float, payload) -> None:
        if isinstance(payload, int):
            self.flood_window(t)
            self.link_probes(t)
            return
        kind, who = payload
        if kind == "spoofed":
            self.spoof(t, who)
        elif kind == "replayed":
            self.replay(t, who)
        elif kind == "blocked":
            self.rejoin(t, who)

    def flood_window(self, t: float) -> None:
        s = self.s
        rng = self.rng["attacks"]
        idx = np.flatnonzero(self.associated & ~self.blocked)
        win = s.dup_window
        for i in idx:
            i = int(i)
            flooding = i in self.flood_onset and t - 1000.0 >= self.flood_onset[i]
            if flooding:
                orig = int(rng.poisson(s.flood_rate * win))
                dup = int(round(orig * s.flood_dup))
            else:
                orig = int(rng.poisson(s.honest_rate * win))
                dup = int(rng.binomial(orig, 0.01))
            if self.dup_monitor.observe(self.ids[i], t, orig, dup):
                report = AttackReport(self.ids[i], "duplicate-flood", t, int(self.topo.controller_of(int(self.cell[i]))),
                                      f"dup ratio over {win} s")
                onset = self.flood_onset.get(i, t)
                self.block(i, report, t, kind="flood", attack_class=1, t_attack=onset)

    def link_probes(self, t: float) -> None:
        for i, delay in sorted(self.plan.linkability.items()):
            if self.blocked[i] or not self.associated[i] or t < self.assoc_time[i] + delay:
                continue
            if self.ids[i] in self.detections:
                continue
            try:
                share_data(self.bc_grants[-1] if self.bc_grants else _NO_GRANT, -1, "identity-link",
                           self.ledger.bc_keys.private, frozenset(b.header.hash for b in self.ledger.blocks))
            except PolicyDenied:
                report = AttackReport(self.ids[i], "linkability", t, -1, "identity-link request denied")
                self.block(i, report, t, kind="linkability", attack_class=2,
                           t_attack=float(self.assoc_time[i] + delay))

    def spoof(self, t: float, fake: str) -> None:
        req = IniReg(fake, (0.0, 0.0), 0.0, 0, "5G-NR", 0.3)
        self.emit(t)
        try:
            self.ledger.register_mu(req, now=t, speed=self.s.speed)
        except NotWhitelisted:
            self.ledger.blacklist(fake)
            self.detections[fake] = Detection(fake, "spoofed", 2, t, t, True)
            self.log(t, "detected", attacker=fake, reason="not-whitelisted")
            return
        self.detections[fake] = Detection(fake, "spoofed", 2, t, None)

    def replay(self, t: float, victim: int) -> None:
        attacker = f"replay-{len([d for d in self.detections.values() if d.kind == 'replayed']):04d}"
        req = self.ini_reg(victim)
        captured = IniReg(req.net_id, req.loc, req.dire, req.from_cell, req.phys_ly, req.rtt)
        self.emit(t)
        try:
            self.ledger.register_mu(captured, now=t, speed=self.s.speed)
        except (AlreadyRegistered, Blocked):
            self.detections[attacker] = Detection(attacker, "replayed", 2, t, t, True)
            self.log(t, "detected", attacker=attacker, reason="replayed-registration", victim=self.ids[victim])
            return
        self.detections[attacker] = Detection(attacker, "replayed", 2, t, None)

    def rejoin(self, t: float, i: int) -> None:
        nid = self.ids[i]
        key = f"{nid}/rejoin"
        self.emit(t)
        try:
            self.ledger.register_mu(self.ini_reg(i), now=t, speed=self.s.speed)
        except Blocked:
            self.detections[key] = Detection(key, "blocked", 2, t, t, True)
            self.log(t, "detected", attacker=nid, reason="blocked-id")
            return
        except AlreadyRegistered:
            pass
        self.detections[key] = Detection(key, "blocked", 2, t, None)

    # --- mining and background ---------------------------------------------------------

    def on_background(self, t: float, j: int) -> None:
        self.server.submit(t, self.s.bc_service)
        self.emit(t)
        if self.ledger is None or self.bg_kind[j] == 0:
            return
        i = int(self.bg_sender[j])
        rec = self.recs[i]
        if rec is None or rec.keypair is None:
            return
        out = Encoder().raw(b"data").int(j).getvalue()
        tx = make_transaction(rec.keypair, [], [out], t, rec.home_cell, self.crypto)
        self.ledger.submit_tx(tx)

    def on_mine(self, t: float, k: int) -> None:
        led = self.ledger
        pending = list(led.pending_txs)
        if not pending:
            return
        S = len(self.topo.controllers)
        tip = led.tip.header
        if self.model is Model.PROPOSED:
            n = self.mining_cfg.delegate_count
            epoch = int(t // (self.s.Tcp * n))
            ds: DelegateSet = vote(self.topo.controllers, None, n, epoch)
            miner = ds.scheduled(t, self.mining_cfg.dpos_slot_time)
            block, elapsed = dpos_produce_block(ds, pending, tip, t, miner, self.mining_cfg, S)
            ok = validate_block(block, tip, Mode.DPOS, delegates=ds, slot_time=self.mining_cfg.dpos_slot_time,
                                crypto=self.crypto)
            iterations = 0
        else:
            seed = int(self.rng["consensus"].integers(0, 2**63 - 1))
            block, elapsed, iterations = pow_produce_block(pending, tip, self.s.pow_difficulty, seed, t, -1,
                                                           self.mining_cfg, S, crypto=self.crypto)
            self.server.submit(t, elapsed)
            ok = validate_block(block, tip, Mode.POW, difficulty=self.s.pow_difficulty, crypto=self.crypto)
            miner = -1
        assert ok, "freshly produced block failed validation"
        led.append_block(block)
        if miner >= 0:
            self.bc_grants.append(reward_miner(miner, block, led.bc_keys.private, self.access))
        self.emit(t)
        self.mining.append({"t": t, "mode": self.mining_cfg.mode.value, "txs": len(pending),
                            "elapsed_ms": elapsed, "iterations": iterations, "miner": miner})
        self.log(t, "mine", mode=self.mining_cfg.mode.value, txs=len(pending), elapsed=round(elapsed, 6),
                 miner=miner, block=block.header.hash.hex()[:16])

    # --- transfers -------------------------------------------------------------------

    def on_transfer(self, t: float, _) -> None:
        s = self.s
        rng = self.rng["transfers"]
        live = np.flatnonzero(self.associated & ~self.blocked)
        live = [int(i) for i in live if not self.plan.is_malicious(int(i))]
        if len(live) < 2:
            return
        a, b = (live[int(x)] for x in rng.choice(len(live), 2, replace=False))
        src, dst = int(self.cell[a]), int(self.cell[b])
        payload = rng.bytes(s.transfer_size)
        entropy = rng.bytes(16)
        if src == dst:
            return
        ra, rb = self.recs[a], self.recs[b]
        paths = select_paths(self.topo, src, dst, s.K, authentic=True, sender=self.ids[a], now=t)
        plan = plan_transfer(paths, wire_size(s.transfer_size, self.crypto), s.Ts, s.tr)
        faults, path_aps = {}, []
        for k, p in enumerate(paths.paths):
            aps = [int(self.ap_ids[c, (k + c) % self.ap_ids.shape[1]]) for c in p.nodes]
            path_aps.append(aps)
            bad = [ap for ap in aps if ap in self.plan.compromised_aps]
            if bad:
                faults[k] = s.ap_fault
        outcome = "ok"
        failed: set[int] = set()
        try:
            out, rep = execute_transfer(plan, payload, ra.keypair, rb.keypair, self.crypto, entropy, faults,
                                        LinkTrace())
            assert out == payload
            failed = set(rep.duplicates)
            if failed:
                outcome = "duplicate"
        except PartLoss as exc:
            failed, outcome = set(exc.missing), "loss"
        except IntegrityError:
            failed, outcome = set(range(len(paths.paths))), "integrity"
        except Infeasible:
            outcome = "infeasible"
        if outcome != "infeasible":
            for k, aps in enumerate(path_aps):
                if plan.parts[k][1] > plan.parts[k][0]:
                    self.delivery.record(aps, k not in failed)
        if outcome != "infeasible":
            used = [k for k, (a, b) in enumerate(plan.parts) if b > a]
            self.emit(t, len(used), sum(1 for k in used if faults.get(k) == "drop"))
        self.transfers.append({"t": t, "src": src, "dst": dst, "K": paths.K, "size": s.transfer_size,
                               "delay_ms": plan.completion, "outcome": outcome})
        self.log(t, "transfer", src=src, dst=dst, K=paths.K, outcome=outcome)

    # --- metrics ------------------------------------------------------------------------

    def energy(self, t: float) -> float:
        """Summed per-user energy in mJ; powers are in mW and times in s."""
        s = self.s
        joined = self.join <= t
        active = np.where(joined, (t - self.join) / 1000.0, 0.0)
        t1 = self.t1 / 1000.0
        return float(np.sum(s.Ctx * s.Pt * t1 + s.Crx * s.Rx * t1 + s.Pr * (active - t1)))

    def on_sample(self, t: float, k: int) -> None:
        self.samples.append({
            "t_ms": t,
            "overhead_bytes": self.overhead_bytes,
            "control_bytes": self.control_bytes,
            "energy_mJ": self.energy(t),
            "t1_ms": float(self.t1.sum()),
            "active_ms": float(np.clip(t - self.join, 0.0, None).sum()),
            "handovers": sum(1 for ev, _ in self.handovers if ev.kind is Kind.INTER),
            "utilisation": self.utilisation(t),
            "blocks": len(self.ledger.blocks) if self.ledger else 0,
        })

    def artifacts(self) -> RunArtifacts:
        s = self.s
        honest_blocked = [self.ids[i] for i in np.flatnonzero(self.blocked) if not self.plan.is_malicious(int(i))]
        dets = dict(self.detections)
        for i, onset in self.flood_onset.items():
            if self.ids[i] not in dets and onset <= self.end:
                dets[self.ids[i]] = Detection(self.ids[i], "flood", 1, onset, None)
        for i in self.plan.numb:
            if self.ids[i] not in dets and self.join[i] <= self.end:
                dets[self.ids[i]] = Detection(self.ids[i], "numb", 2, float(self.join[i]), None)
        for i, delay in self.plan.linkability.items():
            if self.ids[i] not in dets and not math.isnan(self.assoc_time[i]) \
                    and self.assoc_time[i] + delay + 1000.0 <= self.end:
                dets[self.ids[i]] = Detection(self.ids[i], "linkability", 2, float(self.assoc_time[i] + delay), None)
        report = DetectionReport(s.seed, [dets[k] for k in sorted(dets)], honest_blocked,
                                 set(self.plan.compromised_aps), self.delivery.flagged())
        active = np.where(self.join <= self.end, self.end - self.join, 0.0)
        meta = {"seed": s.seed, "model": s.model.value, "crypto": s.crypto,
                "blocks": len(self.ledger.blocks) if self.ledger else 0,
                "pending_txs": len(self.ledger.pending_txs) if self.ledger else 0,
                "server_jobs": self.server.jobs, "server_busy_ms": self.server.busy}
        conservation = {"sent": self.sent, "dropped": self.dropped, "pending": self.pending,
                        "delivered": self.delivered}
        return RunArtifacts(s, self.events, self.handovers, self.samples,
                            self.ledger.dump() if self.ledger else "", self.mining, self.transfers, report,
                            conservation, self.t1.copy(), active, meta)


class _NoGrant:
    miner = -2
    block_hash = b""
    topics = frozenset()
    capability = b""

    def payload(self) -> bytes:
        return b""


_NO_GRANT = _NoGrant()


def run(scenario: Scenario) -> RunArtifacts:
    return Simulation(scenario).run()


def events_jsonl(art: RunArtifacts) -> str:
    return "".join(json.dumps(e, sort_keys=True) + "\n" for e in art.events)


HANDOVER_COLUMNS = ("net_id", "kind", "from_cell", "to_cell", "from_ap", "to_ap", "t_start_ms", "t_end_ms",
                    "delay_ms", "messages", "auth_steps", "reauthenticated", "utilisation")


def handover_rows(art: RunArtifacts) -> list[dict]:
    return [{"net_id": e.net_id, "kind": e.kind.value, "from_cell": e.from_cell, "to_cell": e.to_cell,
             "from_ap": -1 if e.from_ap is None else e.from_ap, "to_ap": e.to_ap, "t_start_ms": e.t_start,
             "t_end_ms": e.t_end, "delay_ms": e.delay, "messages": e.message_count, "auth_steps": e.auth_steps,
             "reauthenticated": e.reauthenticated, "utilisation": u} for e, u in art.handovers]


def write_run(art: RunArtifacts, directory) -> Path:
    """Write one run's artifacts; every file is written then renamed into place."""
    from .metrics import atomic_write, csv_text, run_meta
    d = Path(directory)
    atomic_write(d / "events.jsonl", events_jsonl(art))
    atomic_write(d / "handovers.csv", csv_text(handover_rows(art), HANDOVER_COLUMNS))
    atomic_write(d / "metrics.csv", csv_text(art.samples))
    atomic_write(d / "transfers.csv", csv_text(art.transfers, ("t", "src", "dst", "K", "size", "delay_ms", "outcome")))
    atomic_write(d / "ledger.dump", art.ledger_dump)
    meta = {"run": art.meta, "defaults": run_meta(art.scenario), "conservation": art.conservation}
    atomic_write(d / "run_meta.json", json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return d


def trace_digest(art: RunArtifacts) -> str:
    return digest(events_jsonl(art).encode() + art.ledger_dump.encode()).hex()
