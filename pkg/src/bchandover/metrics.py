"""Closed-form metrics and the CSV datasets built from simulation runs."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .consensus import MiningConfig, dpos_produce_block, pow_produce_block, vote
from .crypto import STUB
from .handover import HandoverEvent, Kind
from .keymgmt import KeyTimingParams, compute_total_key_time
from .model import Encoder, genesis_block, make_transaction
from .privacy import baseline_single_path_transfer, plan_transfer, select_paths, wire_size
from .scenario import Model, Scenario
from .topology import CellTopology


class ZeroTime(ValueError):
    pass


class TimeOrder(ValueError):
    pass


class ZeroSteps(ValueError):
    pass


class BadVariance(ValueError):
    pass


class EmptyLog(ValueError):
    pass


# --- closed forms ---------------------------------------------------------------

def signaling_overhead(B: float, M: float, N: float, t: float) -> float:
    """Bytes per unit time: ``(B*M)/t + N/t``."""
    if t <= 0:
        raise ZeroTime("t must be positive")
    return (B * M) / t + N / t


@dataclass(frozen=True)
class EnergyParams:
    Ctx: float = 1.0
    Crx: float = 1.0
    Pt: float = 1726.0  # mW
    Rx: float = 1340.0  # mW
    Pr: float = 100.0  # mW
    t1: float = 0.0  # connection time
    t: float = 0.0  # total time
    a1: float = 1.0
    a2: float = 1.0
    n: int = 30  # cells
    c: int = 30  # controllers


def energy_single(p: EnergyParams) -> float:
    if p.t < p.t1:
        raise TimeOrder(f"t={p.t} precedes t1={p.t1}")
    return p.Ctx * p.Pt * p.t1 + p.Crx * p.Rx * p.t1 + p.Pr * (p.t - p.t1)


def energy_network(p: EnergyParams, sover: float, B: float) -> float:
    """Whole-network energy; ``Ptx`` is taken to be ``Pt``."""
    if B <= 0:
        raise ZeroSteps("B must be positive")
    return (p.n * p.c) * ((sover / B) * p.a1 + p.a2) * p.Pt * (p.Ctx * p.Crx) + p.Pr * (p.t - p.t1)


def miner_pdf(x, mu: float, var: float):
    if not var > 0:
        raise BadVariance("variance must be positive")
    sigma = math.sqrt(var)
    return 1.0 / (sigma * math.sqrt(2.0 * math.pi)) * np.exp(-((np.asarray(x) - mu) ** 2) / (2.0 * var))


def service_demand(miner_count: int, mu: float, var: float, rng: np.random.Generator) -> np.ndarray:
    """Cumulative block-size demand as miners are added one at a time."""
    if miner_count < 1:
        raise ValueError("miner_count must be at least 1")
    return np.cumsum(rng.normal(mu, math.sqrt(var), miner_count))


def offered_service_rate(miner_count: int, mu: float, var: float, seed: int) -> np.ndarray:
    """Normalised offered rate for 1..miner_count miners; the largest demand maps to 1."""
    if not var > 0:
        raise BadVariance("variance must be positive")
    d = service_demand(miner_count, mu, var, np.random.default_rng(seed))
    return d / d.max()


def service_rate_curve(max_miners: int, mu: float, var: float, seeds: Iterable[int]):
    """Mean normalised rate per miner count with a normal 95% interval."""
    runs = np.array([offered_service_rate(max_miners, mu, var, s) for s in seeds])
    mean = runs.mean(axis=0)
    half = 1.96 * runs.std(axis=0, ddof=1) / math.sqrt(len(runs)) if len(runs) > 1 else np.zeros(max_miners)
    return mean, mean - half, mean + half


@dataclass(frozen=True)
class PrivacyCost:
    scheme: str
    size: float
    decrypt_Te: float  # multiples of Te
    revocation: float
    revocation_unit: str  # "S" bytes, "Te" or "Tc" time units
    transfer_security: bool


def privacy_cost_table(f: float, S: float, L: float) -> list[PrivacyCost]:
    if min(f, S, L) < 0:
        raise ValueError("f, S and L must be non-negative")
    return [
        PrivacyCost("DACC", (3 * f + f) * S, f, f * S, "S", False),
        PrivacyCost("SEMR-ABE", L ** 2 + (f * S) + S, 1.0, 1.0, "Te", True),
        PrivacyCost("Ours", S, 1.0, 1.0, "Tc", True),
    ]


def linear_r2(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    tot = ((y - y.mean()) ** 2).sum()
    return 1.0 if tot == 0 else float(1.0 - (resid ** 2).sum() / tot)


# --- series and delay statistics ------------------------------------------------

@dataclass
class MetricSeries:
    name: str
    model: str
    unit: str
    samples: list[tuple[float, float]] = field(default_factory=list)  # (t ms, value)

    def add(self, t: float, value: float) -> None:
        if self.samples and t < self.samples[-1][0]:
            raise ValueError("samples must be time-ordered")
        self.samples.append((t, value))

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.samples])


@dataclass(frozen=True)
class DelayBin:
    lo: float
    hi: float
    count: int
    mean: float
    p95: float


UTIL_BINS = tuple(np.round(np.arange(0.0, 1.2, 0.2), 10))


def handover_delay_stats(log: Sequence[tuple[HandoverEvent, float]],
                         bins: Sequence[float] = UTIL_BINS) -> list[DelayBin]:
    """Mean and 95th percentile of inter-cell handover delay per utilisation bin.

    The last bin is closed on the right; loads beyond it fall into it.
    """
    events = [(e.delay, u) for e, u in log if e.kind is Kind.INTER]
    if not events:
        raise EmptyLog("no inter-cell handovers in the log")
    d = np.array([x for x, _ in events])
    u = np.array([y for _, y in events])
    k = np.clip(np.searchsorted(bins, u, side="right") - 1, 0, len(bins) - 2)
    out = []
    for b in range(len(bins) - 1):
        sel = d[k == b]
        if len(sel):
            out.append(DelayBin(bins[b], bins[b + 1], len(sel), float(sel.mean()), float(np.percentile(sel, 95))))
    return out


# --- figure datasets --------------------------------------------------------------

def steps_per_user(model: Model, handovers: int, users: int) -> float:
    """Mean MU-to-authority steps per user: registration plus any per-entry re-authentication."""
    per_entry = {Model.PROPOSED: 0, Model.POW_BASED: 2, Model.NETWORK_BASED: 3}[model]
    first = {Model.PROPOSED: 2, Model.POW_BASED: 2, Model.NETWORK_BASED: 3}[model]
    return first + per_entry * handovers / max(users, 1)


def fig06_rows(art) -> list[dict]:
    """Cumulative signalling bytes and the windowed overhead rate per sample."""
    s = art.scenario
    rows = []
    for smp in art.samples:
        t = smp["t_ms"]
        rows.append({"model": s.model.value, "seed": s.seed, "t_s": t / 1000.0,
                     "overhead_bytes": smp["overhead_bytes"], "control_bytes": smp["control_bytes"],
                     "sover_bytes_per_s": smp["overhead_bytes"] / (t / 1000.0)})
    return rows


def fig07_rows(art) -> list[dict]:
    s = art.scenario
    rows = []
    for smp in art.samples:
        t_s = smp["t_ms"] / 1000.0
        B = steps_per_user(s.model, smp["handovers"], s.users)
        sover = smp["overhead_bytes"] / t_s
        p = EnergyParams(s.Ctx, s.Crx, s.Pt, s.Rx, s.Pr, smp["t1_ms"] / 1000.0, smp["active_ms"] / 1000.0, s.a1,
                         s.a2, s.cells, s.controllers)
        rows.append({"model": s.model.value, "seed": s.seed, "t_s": t_s, "energy_mJ": smp["energy_mJ"],
                     "t1_s": smp["t1_ms"] / 1000.0, "energy_network": energy_network(p, sover, B)})
    return rows


def fig08_rows(max_miners: int = 30, mus: Sequence[float] = (150.0, 1500.0), var: float = 4.0,
               seeds: Iterable[int] = range(1000)) -> list[dict]:
    seeds = list(seeds)
    rows = []
    for mu in mus:
        mean, lo, hi = service_rate_curve(max_miners, mu, var, seeds)
        raw = np.mean([service_demand(max_miners, mu, var, np.random.default_rng(s)) for s in seeds], axis=0)
        for m in range(max_miners):
            rows.append({"mu_t": mu, "var": var, "miners": m + 1, "rate_mean": mean[m], "ci_low": lo[m],
                         "ci_high": hi[m], "demand_mean": raw[m]})
    return rows


def link_backlog(topo: CellTopology, mean_bytes: float, seed: int) -> dict[str, float]:
    """Queued bytes per link, exponential around ``mean_bytes``."""
    rng = np.random.default_rng(seed)
    ids = sorted(topo.links)
    return dict(zip(ids, rng.exponential(mean_bytes, len(ids)).tolist()))


def transfer_rows(topo: CellTopology, src: int, dst: int, sizes: Sequence[int], Ks: Sequence[int], seed: int,
                  Ts: float = 50.0, tr: float = 50.0, backlog: float = 500.0) -> list[dict]:
    """Completion delay and consumed bandwidth, multipath against the hop-count route."""
    traffic = link_backlog(topo, backlog, seed)
    rows = []
    for size in sizes:
        wire = wire_size(size)
        base = baseline_single_path_transfer(topo, src, dst, wire, Ts, traffic)
        for K in Ks:
            paths = select_paths(topo, src, dst, K, traffic)
            plan = plan_transfer(paths, wire, Ts, tr)
            used = [b - a for a, b in plan.parts if b > a]
            rows.append({"seed": seed, "size": size, "K": K, "paths": paths.K, "multipath_ms": plan.completion,
                         "baseline_ms": base.delay,
                         "multipath_bw": sum(used) / len(used) / Ts, "baseline_bw": base.bandwidth})
    return rows


def fig11_rows(arts, bins: Sequence[float] = UTIL_BINS) -> list[dict]:
    rows = []
    for art in arts:
        for b in handover_delay_stats(art.handovers, bins):
            rows.append({"model": art.scenario.model.value, "seed": art.scenario.seed, "util_lo": b.lo,
                         "util_hi": b.hi, "count": b.count, "mean_ms": b.mean, "p95_ms": b.p95})
    return rows


def pending_batch(n: int, seed: int = 0) -> list:
    keys = STUB.keypair(b"fig12-%d" % seed)
    return [make_transaction(keys, [], [Encoder().int(i).getvalue()], float(i), 0, STUB) for i in range(n)]


def consensus_times(tx_counts: Sequence[int], difficulty: int = 12, seeds: Iterable[int] = range(20),
                    config: MiningConfig = MiningConfig(), delegates: int = 30) -> list[dict]:
    """Elapsed mining time per consensus mode, POW averaged over seeds."""
    seeds = list(seeds)
    ds = vote(list(range(delegates)), k=delegates)
    tip = genesis_block(delegates).header
    base = KeyTimingParams()
    rows = []
    for n in tx_counts:
        txs = pending_batch(n)
        miner = ds.scheduled(0.0, config.dpos_slot_time)
        _, dpos = dpos_produce_block(ds, txs, tip, 0.0, miner, config, delegates)
        pow_runs = [pow_produce_block(txs, tip, difficulty, s, 0.0, -1, config, delegates, crypto=STUB)
                    for s in seeds]
        pow_ms = float(np.mean([r[1] for r in pow_runs]))
        iters = float(np.mean([r[2] for r in pow_runs]))
        rows.append({"txs": n, "difficulty": difficulty, "dpos_ms": dpos, "pow_ms": pow_ms,
                     "pow_iterations": iters,
                     "dpos_key_ms": compute_total_key_time(replace(base, Tm=dpos)),
                     "pow_key_ms": compute_total_key_time(replace(base, Tm=pow_ms))})
    return rows


def fig13_rows(reports) -> list[dict]:
    return [{"seed": r.seed, "class1_rate": r.class1_rate, "class1_latency_ms": r.class1_latency,
             "class2_rate": r.class2_rate, "join_time_rate": r.join_time_rate,
             "false_positives": r.false_positives, "ap_detection_rate": r.ap_detection_rate,
             "ap_false_positives": r.ap_false_positives} for r in reports]


def table2_rows(triples: Iterable[tuple[float, float, float]]) -> list[dict]:
    rows = []
    for f, S, L in triples:
        for c in privacy_cost_table(f, S, L):
            rows.append({"f": f, "S": S, "L": L, **asdict(c)})
    return rows


# --- output -------------------------------------------------------------------------

def csv_text(rows: Sequence[dict], header: Sequence[str] | None = None) -> str:
    header = list(header or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    w = csv.DictWriter(buf, header, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def atomic_write(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def write_csv(path: str | Path, rows: Sequence[dict], header: Sequence[str] | None = None) -> Path:
    return atomic_write(path, csv_text(rows, header))


def run_meta(s: Scenario) -> dict:
    """Every modelling default that has no published value, plus the run identity."""
    return {
        "seed": s.seed, "model": s.model.value, "crypto": s.crypto, "duration_s": s.duration,
        "Pr_mW": s.Pr, "a1": s.a1, "a2": s.a2, "Ctx": s.Ctx, "Crx": s.Crx,
        "latency_ms": {"mu_ap": s.mu_ap, "ap_ctrl": s.ap_ctrl, "ctrl_ctrl": s.ctrl_ctrl, "ctrl_bc": s.ctrl_bc,
                       "ctrl_auth": s.ctrl_auth, "verify": s.verify},
        "service_ms": {"bc_service": s.bc_service, "auth_service": s.auth_service},
        "util_window_s": s.util_window, "utilisation": "background arrivals in window x bc_service / window",
        "timeout": {"safety_factor": 2.0, "min_ms": 1000.0, "max_ms": 300000.0},
        "steps_B": {"Proposed": 2, "PowBased": "2 + 2 per re-entry", "NetworkBased": "3 per entry"},
        "mining": {"pow_difficulty": s.pow_difficulty, "delegate_count": s.delegate_count, "c_tx_ms": s.c_tx,
                   "c_slot_ms": s.c_slot, "hash_cost_ms": s.hash_cost},
        "miner_distribution": {"mu_t": s.miner_mu, "mu_t_alternative": 150.0, "var": s.miner_var},
        "class1": {"dup_threshold": s.dup_threshold, "dup_window_s": s.dup_window, "flood_rate": s.flood_rate,
                   "flood_dup": s.flood_dup, "honest_rate": s.honest_rate},
        "ap_fault": s.ap_fault, "fault_threshold": s.fault_threshold,
        "mobility": {"direction_period_s": s.direction_period, "tick_s": s.tick, "join_window_s": s.join_window,
                     "hysteresis_m": s.hysteresis, "boundary": "reflective"},
    }
