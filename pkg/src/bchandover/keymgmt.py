"""Key-transfer timing model and collection-period selection."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence


class ZeroCells(ValueError):
    pass


class EmptyCandidates(ValueError):
    pass


@dataclass(frozen=True)
class KeyTimingParams:
    Tcp: float = 5.0  # collection-period duration, ms
    Tk: float = 2.0  # key distribution to controllers, ms
    Tp: float = 1.0  # propagation and emission delay, ms
    Tm: float = 0.1  # mining time, ms
    Ti: float = 0.0  # user info to controller, ms (not part of key time)
    Tcb: float = 0.0  # controller to BC, ms (not part of key time)
    n_req: int = 2000
    m_window: float = 10.0  # minutes
    Ncp: int = 1
    n_cells: int = 30

    def __post_init__(self) -> None:
        for name in ("Tcp", "Tk", "Tp", "Tm", "Ti", "Tcb", "m_window"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("n_req", "Ncp", "n_cells"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer")


def compute_nt(p: KeyTimingParams) -> float:
    """Transaction count, taken exactly as ``(n * m / 60) * Ncp``."""
    return (p.n_req * p.m_window) / 60.0 * p.Ncp


def compute_total_key_time(p: KeyTimingParams) -> float:
    return compute_nt(p) * p.Tcp + p.Tk + (p.Tp + p.Tm)


def compute_total_all(p: KeyTimingParams) -> float:
    if p.n_cells == 0:
        raise ZeroCells("n_cells must be at least 1")
    return compute_total_key_time(p) * p.n_cells


def traffic_params(base: KeyTimingParams, tcp: float, traffic: Mapping[int, Sequence[int]] | None) -> KeyTimingParams:
    """Parameters under collection period ``tcp``.

    ``traffic`` maps cell id to pending-request counts sampled once per
    collection period. The request count becomes the mean per-period load
    summed over reporting cells; with no report the base counts stand.
    """
    if not traffic:
        return replace(base, Tcp=tcp)
    per_cell = [sum(v) / len(v) for v in traffic.values() if len(v)]
    n = int(round(sum(per_cell)))
    return replace(base, Tcp=tcp, n_req=n)


def optimize_tcp(candidates: Sequence[float], base: KeyTimingParams,
                 traffic: Mapping[int, Sequence[int]] | None = None) -> float:
    """Candidate with the smallest total key time; ties go to the smaller period."""
    if not candidates:
        raise EmptyCandidates("no collection periods to choose from")
    best, best_cost = None, None
    for tcp in sorted(candidates):
        cost = compute_total_all(traffic_params(base, tcp, traffic))
        if best_cost is None or cost < best_cost:
            best, best_cost = tcp, cost
    return best
