"""Scenario configuration with defaults and a sectioned key=value file format.

File format::

    # comment
    seed = 3
    model = PowBased
    [topology]
    cells = 30
    [attacks]
    malicious_mus = 50

Keys before the first section header belong to ``[run]``. Every key must
belong to the section it appears in; unknown keys are rejected with their
line number.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class Model(enum.Enum):
    PROPOSED = "Proposed"
    POW_BASED = "PowBased"
    NETWORK_BASED = "NetworkBased"


MODELS = tuple(Model)


@dataclass(frozen=True)
class Scenario:
    # [run]
    seed: int = 0
    duration: float = 600.0  # s
    model: Model = Model.PROPOSED
    crypto: str = "real"
    requests: int = 2000  # background request/response exchanges with the BC
    transactions: int = 1200  # background transactions
    M: int = 32  # bytes, MU to BC packet
    N: int = 16  # bytes, BC to controller packet
    Pt: float = 1726.0  # mW
    Rx: float = 1340.0  # mW
    Pr: float = 100.0  # mW
    Ctx: float = 1.0
    Crx: float = 1.0
    a1: float = 1.0
    a2: float = 1.0
    util_window: float = 30.0  # s, trailing window for utilisation
    sample_period: float = 10.0  # s, metric sampling
    # [topology]
    cells: int = 30
    cols: int = 6
    controllers: int = 30
    switches: int = 90
    cell_radius: float = 100.0  # m
    ap_spacing: float = 200.0  # m, between neighbouring cell centres
    ap_ring: float = 50.0  # m
    link_bandwidth: float = 1250.0  # bytes/ms
    link_latency: float = 0.05  # ms
    # [mobility]
    users: int = 600
    speed: float = 5.0  # km/h
    direction_period: float = 3.0  # s
    tick: float = 1.0  # s
    join_window: float = 30.0  # s
    hysteresis: float = 5.0  # m
    # [key_timing]
    Tcp: float = 5000.0  # ms, collection period (mining interval)
    Tk: float = 2.0
    Tp: float = 1.0
    m_window: float = 10.0  # minutes
    Ncp: int = 1
    tcp_candidates: tuple[float, ...] = (1000.0, 2000.0, 5000.0, 10000.0)
    # [mining]
    pow_difficulty: int = 12
    delegate_count: int = 30
    c_tx: float = 0.01
    c_slot: float = 0.1
    hash_cost: float = 0.001
    miner_mu: float = 1500.0
    miner_var: float = 4.0
    # [links]
    mu_ap: float = 0.1
    ap_ctrl: float = 0.05
    ctrl_ctrl: float = 0.05
    ctrl_bc: float = 0.2
    ctrl_auth: float = 0.5
    verify: float = 0.05
    bc_service: float = 80.0  # ms per background request at the central server
    auth_service: float = 0.5  # ms per authentication at the central server
    # [attacks]
    malicious_mus: int = 0
    flood_rate: float = 50.0  # packets/s while flooding
    flood_dup: float = 10.0  # duplicates per original packet
    honest_rate: float = 5.0  # packets/s of honest data traffic
    dup_threshold: float = 0.5
    dup_window: float = 1.0  # s
    spoofed: int = 0
    replayed: int = 0
    blocked_rejoin: int = 0
    numb: int = 0
    linkability: int = 0
    compromised_aps: int = 0
    ap_fault: str = "drop"
    transfers: int = 0  # multipath transfers per run
    transfer_size: int = 4096  # bytes
    K: int = 3
    Ts: float = 50.0  # ms
    tr: float = 50.0  # ms
    fault_threshold: int = 3  # failed deliveries before an AP is flagged

    @property
    def aps_per_cell(self) -> int:
        return self.switches // self.cells

    def with_overrides(self, **kw) -> "Scenario":
        return validate(replace(self, **{k: coerce(k, v) for k, v in kw.items()}))


SECTIONS: dict[str, tuple[str, ...]] = {
    "run": ("seed", "duration", "model", "crypto", "requests", "transactions", "M", "N", "Pt", "Rx",
            "Pr", "Ctx", "Crx", "a1", "a2", "util_window", "sample_period"),
    "topology": ("cells", "cols", "controllers", "switches", "cell_radius", "ap_spacing", "ap_ring",
                 "link_bandwidth", "link_latency"),
    "mobility": ("users", "speed", "direction_period", "tick", "join_window", "hysteresis"),
    "key_timing": ("Tcp", "Tk", "Tp", "m_window", "Ncp", "tcp_candidates"),
    "mining": ("pow_difficulty", "delegate_count", "c_tx", "c_slot", "hash_cost", "miner_mu", "miner_var"),
    "links": ("mu_ap", "ap_ctrl", "ctrl_ctrl", "ctrl_bc", "ctrl_auth", "verify", "bc_service",
              "auth_service"),
    "attacks": ("malicious_mus", "flood_rate", "flood_dup", "honest_rate", "dup_threshold", "dup_window",
                "spoofed", "replayed", "blocked_rejoin", "numb", "linkability", "compromised_aps",
                "ap_fault", "transfers", "transfer_size", "K", "Ts", "tr", "fault_threshold"),
}
SECTION_OF = {k: s for s, keys in SECTIONS.items() for k in keys}
_TYPES = {f.name: f.type for f in fields(Scenario)}
assert set(SECTION_OF) == set(_TYPES), "every field needs a section"


def coerce(key: str, value):
    """Convert a raw (string or native) value to the field's type."""
    if key not in _TYPES:
        raise KeyError(key)
    t = _TYPES[key]
    if t == "Model":
        if isinstance(value, Model):
            return value
        try:
            return Model(str(value).strip())
        except ValueError:
            raise ValueError(f"model must be one of {[m.value for m in Model]}") from None
    if t == "int":
        f = float(value)
        if not f.is_integer():
            raise ValueError(f"{key} must be an integer")
        return int(f)
    if t == "float":
        return float(value)
    if t == "str":
        return str(value).strip()
    if t.startswith("tuple"):
        if isinstance(value, (tuple, list)):
            return tuple(float(v) for v in value)
        return tuple(float(v) for v in str(value).split(",") if v.strip())
    raise TypeError(t)


_POSITIVE = ("duration", "M", "N", "Pt", "Rx", "util_window", "sample_period", "cells", "cols",
             "controllers", "switches", "cell_radius", "ap_spacing", "link_bandwidth", "users", "speed",
             "direction_period", "tick", "join_window", "Tcp", "Ncp", "delegate_count", "miner_var",
             "bc_service", "auth_service", "flood_rate", "dup_window", "transfer_size", "K", "Ts", "tr",
             "fault_threshold")
_NON_NEGATIVE = ("seed", "requests", "transactions", "Pr", "Ctx", "Crx", "a1", "a2", "ap_ring",
                 "link_latency", "hysteresis", "Tk", "Tp", "m_window", "pow_difficulty", "c_tx", "c_slot",
                 "hash_cost", "mu_ap", "ap_ctrl", "ctrl_ctrl", "ctrl_bc", "ctrl_auth", "verify",
                 "malicious_mus", "flood_dup", "honest_rate", "spoofed", "replayed", "blocked_rejoin",
                 "numb", "linkability", "compromised_aps", "transfers", "fault_threshold")


def validate(s: Scenario) -> Scenario:
    for name in _POSITIVE:
        v = getattr(s, name)
        if not (v > 0 and math.isfinite(v)):
            raise ValidationError(name, f"must be positive, got {v}")
    for name in _NON_NEGATIVE:
        v = getattr(s, name)
        if not (v >= 0 and math.isfinite(v)):
            raise ValidationError(name, f"must be non-negative, got {v}")
    if s.controllers != s.cells:
        raise ValidationError("controllers", "one controller per cell is required")
    if s.switches % s.cells:
        raise ValidationError("switches", "must be a multiple of cells")
    if s.cols >= s.cells:
        raise ValidationError("cols", "need at least two rows of cells")
    if s.delegate_count > s.controllers:
        raise ValidationError("delegate_count", "cannot exceed controllers")
    if s.pow_difficulty > 40:
        raise ValidationError("pow_difficulty", "at most 40 bits")
    if s.dup_threshold <= 0 or s.dup_threshold >= 1:
        raise ValidationError("dup_threshold", "must lie in (0, 1)")
    if s.malicious_mus + s.numb + s.linkability + s.replayed > s.users:
        raise ValidationError("malicious_mus", "attackers cannot exceed users")
    if s.compromised_aps > s.switches:
        raise ValidationError("compromised_aps", "cannot exceed switches")
    if s.ap_fault not in ("drop", "duplicate", "corrupt"):
        raise ValidationError("ap_fault", "must be drop, duplicate or corrupt")
    if s.crypto not in ("real", "stub"):
        raise ValidationError("crypto", "must be real or stub")
    if not s.tcp_candidates or min(s.tcp_candidates) <= 0:
        raise ValidationError("tcp_candidates", "needs at least one positive value")
    if s.ap_ring >= s.ap_spacing / 2:
        raise ValidationError("ap_ring", "APs must stay inside their cell")
    return s


def parse_scenario(text: str, base: Scenario | None = None) -> Scenario:
    values: dict[str, object] = {}
    section = "run"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(lineno, f"malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ParseError(lineno, f"unknown section [{section}]")
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected key = value, got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SECTION_OF:
            raise ParseError(lineno, f"unknown key {key!r}")
        if SECTION_OF[key] != section:
            raise ParseError(lineno, f"key {key!r} belongs in [{SECTION_OF[key]}], not [{section}]")
        if key in values:
            raise ParseError(lineno, f"duplicate key {key!r}")
        try:
            values[key] = coerce(key, value)
        except ValueError as exc:
            raise ParseError(lineno, f"bad value for {key!r}: {exc}") from None
    return validate(replace(base or Scenario(), **values))


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text())


def dump_scenario(s: Scenario) -> str:
    """Render every field; parsing the output reproduces ``s``."""
    out = []
    for section, keys in SECTIONS.items():
        if section != "run":
            out.append(f"[{section}]")
        for k in keys:
            v = getattr(s, k)
            if isinstance(v, Model):
                v = v.value
            elif isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{k} = {v}")
    return "\n".join(out) + "\n"
