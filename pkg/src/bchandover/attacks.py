"""Attack injection plans and the controller-side detectors.

Class 1 attackers flood their cell with duplicated packets once associated.
Class 2 attackers abuse identity handling, for instance by joining under a
forged or blocked id or by registering and then staying silent ("numb").
Compromised APs tamper with the transfer parts they forward.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np

from .scenario import Model, Scenario
from .topology import CellTopology


@dataclass(frozen=True)
class FloodProfile:
    rate: float  # packets/s
    dup_factor: float  # duplicates per original


@dataclass(frozen=True)
class IdentityProfile:
    kind: str  # spoofed | replayed | blocked | numb | linkability
    count: int


@dataclass(frozen=True)
class AttackConfig:
    class1: tuple[FloodProfile, ...]
    class2: tuple[IdentityProfile, ...]
    malicious_mu_count: int
    compromised_ap_count: int

    @property
    def empty(self) -> bool:
        return (self.malicious_mu_count == 0 and self.compromised_ap_count == 0
                and not any(p.count for p in self.class2))


def attack_config(s: Scenario) -> AttackConfig:
    class2 = (IdentityProfile("spoofed", s.spoofed), IdentityProfile("replayed", s.replayed),
              IdentityProfile("blocked", s.blocked_rejoin), IdentityProfile("numb", s.numb),
              IdentityProfile("linkability", s.linkability))
    return AttackConfig((FloodProfile(s.flood_rate, s.flood_dup),), class2, s.malicious_mus, s.compromised_aps)


@dataclass
class AttackPlan:
    flooders: dict[int, float] = field(default_factory=dict)  # user -> flood onset after association, ms
    numb: set[int] = field(default_factory=set)
    linkability: dict[int, float] = field(default_factory=dict)  # user -> probe delay after association, ms
    spoofed: list[tuple[float, str]] = field(default_factory=list)
    replayed: list[tuple[float, int]] = field(default_factory=list)  # (time, victim)
    rejoin: int = 0
    compromised_aps: set[int] = field(default_factory=set)

    def is_malicious(self, i: int) -> bool:
        return i in self.flooders or i in self.numb or i in self.linkability


def make_plan(s: Scenario, topo: CellTopology, rng: np.random.Generator) -> AttackPlan:
    """Draw attackers and timings from the attack stream. Baselines carry no attacks."""
    if s.model is not Model.PROPOSED:
        return AttackPlan()
    n_bad = s.malicious_mus + s.numb + s.linkability
    bad = [int(i) for i in rng.permutation(s.users)[:n_bad]]
    flood = bad[:s.malicious_mus]
    numb = bad[s.malicious_mus:s.malicious_mus + s.numb]
    link = bad[s.malicious_mus + s.numb:]
    horizon = s.duration * 1000.0
    late = min(60_000.0, horizon / 4)
    plan = AttackPlan(
        flooders={i: float(rng.uniform(1000.0, late)) for i in flood},
        numb=set(numb),
        linkability={i: float(rng.uniform(1000.0, late)) for i in link},
        spoofed=[(float(rng.uniform(0.0, horizon / 2)), f"spoof-{k:04d}") for k in range(s.spoofed)],
        rejoin=min(s.blocked_rejoin, s.malicious_mus),
    )
    honest = [i for i in range(s.users) if not plan.is_malicious(i)]
    lo = min(s.join_window * 1000.0 + 1000.0, horizon / 2)
    for _ in range(s.replayed):
        victim = honest[int(rng.integers(len(honest)))] if honest else 0
        plan.replayed.append((float(rng.uniform(lo, horizon / 2)), victim))
    plan.compromised_aps = {int(a) for a in rng.permutation(sorted(topo.aps))[:s.compromised_aps]}
    return plan


class DuplicateMonitor:
    """Class 1 detector: share of duplicate packets over a trailing window."""

    def __init__(self, threshold: float = 0.5, window_ms: float = 1000.0):
        self.threshold = threshold
        self.window = window_ms
        self._hist: dict[str, deque] = {}

    def observe(self, net_id: str, t: float, originals: int, duplicates: int) -> bool:
        h = self._hist.setdefault(net_id, deque())
        h.append((t, originals, duplicates))
        while h and h[0][0] <= t - self.window:
            h.popleft()
        orig = sum(x[1] for x in h)
        dup = sum(x[2] for x in h)
        total = orig + dup
        return total > 0 and dup / total > self.threshold

    def forget(self, net_id: str) -> None:
        self._hist.pop(net_id, None)


class DeliveryMonitor:
    """Flags APs that appear on failing transfer paths and never on a clean one."""

    def __init__(self, threshold: int = 3):
        self.threshold = threshold
        self.failures: Counter = Counter()
        self.successes: Counter = Counter()

    def record(self, aps, ok: bool) -> None:
        (self.successes if ok else self.failures).update(aps)

    def flagged(self) -> set[int]:
        return {a for a, n in self.failures.items() if n >= self.threshold and self.successes[a] == 0}


@dataclass(frozen=True)
class Detection:
    attacker: str
    kind: str
    attack_class: int
    t_attack: float  # ms
    t_detect: float | None  # ms, None when missed
    at_join: bool = False

    @property
    def detected(self) -> bool:
        return self.t_detect is not None

    @property
    def latency(self) -> float | None:
        return None if self.t_detect is None else self.t_detect - self.t_attack


@dataclass
class DetectionReport:
    seed: int
    detections: list[Detection]
    honest_blocked: list[str]
    ap_compromised: set[int]
    ap_flagged: set[int]

    def _of(self, cls: int) -> list[Detection]:
        return [d for d in self.detections if d.attack_class == cls]

    @property
    def class1_rate(self) -> float:
        c = self._of(1)
        return sum(d.detected for d in c) / len(c) if c else float("nan")

    @property
    def class1_latency(self) -> float:
        lat = [d.latency for d in self._of(1) if d.detected]
        return float(np.mean(lat)) if lat else float("nan")

    @property
    def class2_rate(self) -> float:
        c = self._of(2)
        return sum(d.detected for d in c) / len(c) if c else float("nan")

    @property
    def join_time_rate(self) -> float:
        """Share of join-time identity attacks that were refused at the join attempt itself."""
        c = [d for d in self._of(2) if d.kind in ("spoofed", "replayed", "blocked")]
        return sum(d.detected and d.at_join for d in c) / len(c) if c else float("nan")

    @property
    def false_positives(self) -> int:
        return len(self.honest_blocked)

    @property
    def ap_detection_rate(self) -> float:
        if not self.ap_compromised:
            return float("nan")
        return len(self.ap_flagged & self.ap_compromised) / len(self.ap_compromised)

    @property
    def ap_false_positives(self) -> int:
        return len(self.ap_flagged - self.ap_compromised)


def fig13_scenario(seed: int = 0, **overrides) -> Scenario:
    """Attack-heavy layout on 20 cells; see the defaults below for attacker counts."""
    base = dict(seed=seed, cells=20, cols=5, controllers=20, switches=100, users=400, malicious_mus=50,
                compromised_aps=20, spoofed=10, replayed=5, blocked_rejoin=10, numb=5, linkability=5,
                transfers=200, duration=120.0, requests=400, transactions=240, delegate_count=20,
                crypto="stub")
    base.update(overrides)
    return Scenario().with_overrides(**base)


def inject_and_detect(s: Scenario) -> DetectionReport:
    from .engine import run
    if attack_config(s).empty:
        raise ValueError("attack configuration is empty")
    return run(s).detection
