import itertools

import pytest
from hypothesis import given, settings, strategies as st

from bchandover.crypto import REAL, STUB, IntegrityError
from bchandover.privacy import (Infeasible, NoPath, NotAuthentic, PartLoss, Path, LinkTrace,
                                baseline_single_path_transfer, execute_transfer, plan_transfer, select_paths,
                                water_fill, wire_size)
from bchandover.topology import hex_grid

TOPO = hex_grid(30, 6, 100.0, 3, 50.0, spacing=200.0)
SENDER, RECEIVER = REAL.keypair(b"src"), REAL.keypair(b"dst")
SRC, DST = 7, 22


def completion(paths, W, parts):
    return max(p.cost + s / w for p, w, s in zip(paths, W, parts) if s > 0)


@settings(max_examples=60)
@given(costs=st.lists(st.floats(0.0, 5.0), min_size=1, max_size=3),
       rates=st.lists(st.floats(0.5, 4.0), min_size=3, max_size=3), size=st.integers(1, 14))
def test_water_fill_matches_brute_force(costs, rates, size):
    paths = [Path((f"l{i}",), (0, 1), r, c) for i, (c, r) in enumerate(zip(costs, rates))]
    W = [p.bandwidth for p in paths]
    parts = water_fill(paths, W, size)
    assert sum(parts) == size and min(parts) >= 0
    best = min(completion(paths, W, split)
               for split in itertools.product(range(size + 1), repeat=len(paths)) if sum(split) == size)
    assert completion(paths, W, parts) == pytest.approx(best)


def test_disjoint_least_cost_paths():
    ps = select_paths(TOPO, SRC, DST, 3)
    assert ps.K == 3 and not ps.short
    used = [l for p in ps.paths for l in p.links]
    assert len(used) == len(set(used))
    for p in ps.paths:
        assert p.nodes[0] == SRC and p.nodes[-1] == DST
    assert [p.cost for p in ps.paths] == sorted(p.cost for p in ps.paths)


def test_corner_cell_reports_short_path_set():
    ps = select_paths(TOPO, 0, DST, 5)
    assert ps.short and ps.K == len(TOPO.cells[0].neighbors)


def test_traffic_steers_first_path():
    quiet = select_paths(TOPO, SRC, DST, 1).paths[0]
    busy = {l: 1e6 for l in quiet.links}
    assert select_paths(TOPO, SRC, DST, 1, busy).paths[0].links != quiet.links


def test_selection_errors():
    with pytest.raises(NotAuthentic) as exc:
        select_paths(TOPO, SRC, DST, 2, authentic=False, sender="mu-9")
    assert exc.value.report.net_id == "mu-9"
    with pytest.raises(ValueError):
        select_paths(TOPO, SRC, SRC, 2)
    with pytest.raises(ValueError):
        select_paths(TOPO, SRC, DST, 0)


def test_no_path_on_disconnected_topology():
    t = hex_grid(2, 2, 100.0, 1, spacing=200.0)
    t.links.clear()
    t._adj = {c: [] for c in t.cells}
    with pytest.raises(NoPath):
        select_paths(t, 0, 1, 1)


def _transfer(payload, K=3, crypto=REAL, **kw):
    ps = select_paths(TOPO, SRC, DST, K)
    plan = plan_transfer(ps, wire_size(len(payload), crypto), Ts=1e4, tr=1e4)
    return plan, execute_transfer(plan, payload, SENDER, RECEIVER, crypto, b"e", **kw)


@settings(max_examples=15)
@given(st.binary(min_size=1, max_size=4000))
def test_round_trip(payload):
    plan, (out, report) = _transfer(payload)
    assert out == payload and report.verified
    assert sum(report.per_path_bytes) == wire_size(len(payload))


def test_marker_never_on_the_wire():
    trace = LinkTrace()
    payload = b"PLAINTEXT-MARKER" * 200
    _transfer(payload, trace=trace)
    assert trace.frames and not trace.contains(b"PLAINTEXT-MARKER")


def test_faults():
    payload = b"x" * 3000
    with pytest.raises(PartLoss) as exc:
        _transfer(payload, faults={1: "drop"})
    assert exc.value.missing == (1,)
    with pytest.raises(IntegrityError):
        _transfer(payload, faults={0: "corrupt"})
    out, report = _transfer(payload, faults={2: "duplicate"})[1]
    assert out == payload and report.duplicates == (2,)


def test_wrong_receiver_key_fails():
    with pytest.raises(Exception):
        _transfer(b"y" * 100, receiver_private=REAL.keypair(b"other").private)


def test_infeasible_plan_is_refused():
    ps = select_paths(TOPO, SRC, DST, 1)
    plan = plan_transfer(ps, wire_size(10**6, STUB), Ts=1.0, tr=1.0)
    assert not plan.feasible and plan.deadline == 1.0
    with pytest.raises(Infeasible):
        execute_transfer(plan, b"z" * 10**6, SENDER, RECEIVER, STUB)


def test_plan_validation():
    ps = select_paths(TOPO, SRC, DST, 2)
    with pytest.raises(ValueError):
        plan_transfer(ps, 0, 10.0, 10.0)
    with pytest.raises(ValueError):
        plan_transfer(ps, 100, 10.0, 10.0, allocation=[1.0])
    with pytest.raises(ValueError):
        plan_transfer(ps, 100, 10.0, 10.0, allocation=[1e9, 1.0])


def test_multipath_beats_single_path_under_backlog():
    traffic = {l: 5000.0 for l in TOPO.links}
    size = wire_size(20000)
    base = baseline_single_path_transfer(TOPO, SRC, DST, size, 1e4, traffic)
    plan = plan_transfer(select_paths(TOPO, SRC, DST, 3, traffic), size, 1e4, 1e4)
    assert plan.completion < base.delay
