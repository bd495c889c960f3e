import math
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bchandover.engine import build_topology
from bchandover.handover import HandoverEvent, Kind
from bchandover.metrics import (UTIL_BINS, BadVariance, EmptyLog, EnergyParams, MetricSeries, TimeOrder, ZeroSteps,
                                ZeroTime, atomic_write, consensus_times, csv_text, energy_network, energy_single,
                                fig08_rows, handover_delay_stats, linear_r2, miner_pdf, offered_service_rate,
                                privacy_cost_table, run_meta, service_rate_curve, signaling_overhead,
                                steps_per_user, table2_rows, transfer_rows)
from bchandover.scenario import Model, Scenario

finite = st.floats(0.0, 1e6)


@given(B=finite, M=finite, N=finite, t=st.floats(1e-3, 1e6))
def test_overhead_oracle(B, M, N, t):
    assert signaling_overhead(B, M, N, t) == pytest.approx((B * M + N) / t, rel=1e-9)


def test_overhead_hand_value_and_zero_time():
    assert signaling_overhead(2, 32, 16, 4.0) == 20.0
    with pytest.raises(ZeroTime):
        signaling_overhead(2, 32, 16, 0.0)


def test_energy_single_hand_value():
    p = EnergyParams(t1=2.0, t=10.0)
    assert energy_single(p) == pytest.approx(1726 * 2 + 1340 * 2 + 100 * 8)
    with pytest.raises(TimeOrder):
        energy_single(EnergyParams(t1=3.0, t=1.0))


def test_energy_network_hand_value():
    p = EnergyParams(t1=10.0, t=10.0)
    assert energy_network(p, sover=72.0, B=2.0) == pytest.approx(57_475_800.0, rel=1e-12)
    assert energy_network(EnergyParams(t1=1.0, t=3.0), 0.0, 1.0) == pytest.approx(900 * 1726 + 200)
    with pytest.raises(ZeroSteps):
        energy_network(p, 1.0, 0.0)


def test_miner_pdf_peak_and_errors():
    assert float(miner_pdf(1500.0, 1500.0, 4.0)) == pytest.approx(0.199471140, abs=1e-9)
    with pytest.raises(BadVariance):
        miner_pdf(0.0, 0.0, 0.0)


def simpson(f, a, b, n=20000):
    x = np.linspace(a, b, n + 1)
    y = f(x)
    h = (b - a) / n
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


@pytest.mark.parametrize("mu", [150.0, 1500.0])
def test_miner_pdf_integrates_to_one(mu):
    assert simpson(lambda x: miner_pdf(x, mu, 4.0), mu - 40, mu + 40) == pytest.approx(1.0, abs=1e-9)


def test_offered_rate_normalised_and_curve_bounds():
    r = offered_service_rate(30, 150.0, 4.0, 3)
    assert r[-1] == 1.0 and np.all(np.diff(r) > 0)
    mean, lo, hi = service_rate_curve(30, 150.0, 4.0, range(50))
    assert np.all(lo <= mean) and np.all(mean <= hi)
    with pytest.raises(BadVariance):
        offered_service_rate(3, 1.0, -1.0, 0)
    with pytest.raises(ValueError):
        offered_service_rate(0, 1.0, 1.0, 0)


def test_fig08_rows_cover_both_means():
    rows = fig08_rows(max_miners=5, seeds=range(10))
    assert len(rows) == 10 and {r["mu_t"] for r in rows} == {150.0, 1500.0}
    assert rows[0]["demand_mean"] == pytest.approx(150.0, rel=0.05)


def test_privacy_costs_hand_values():
    dacc, semr, ours = privacy_cost_table(2, 10, 3)
    assert (dacc.size, dacc.decrypt_Te, dacc.revocation, dacc.transfer_security) == (80, 2, 20, False)
    assert (semr.size, semr.revocation_unit) == (9 + 20 + 10, "Te")
    assert (ours.size, ours.decrypt_Te, ours.revocation, ours.revocation_unit) == (10, 1.0, 1.0, "Tc")
    assert len(table2_rows([(1, 2, 3), (4, 5, 6)])) == 6
    with pytest.raises(ValueError):
        privacy_cost_table(-1, 1, 1)


def test_linear_r2():
    x = np.arange(10.0)
    assert linear_r2(x, 3 * x + 1) == pytest.approx(1.0)
    assert linear_r2(x, (x - 4.5) ** 2) < 0.1


def _ev(delay, kind=Kind.INTER):
    return HandoverEvent("m", kind, 0, 1, 0.0, delay, 4, False, 0, 1)


def test_delay_stats_bins():
    log = [(_ev(1.0), 0.05), (_ev(3.0), 0.1), (_ev(9.0), 0.5), (_ev(7.0), 1.7), (_ev(100.0, Kind.INTRA), 0.1)]
    out = handover_delay_stats(log)
    assert [(b.lo, b.count) for b in out] == [(0.0, 2), (0.4, 1), (0.8, 1)]
    assert out[0].mean == 2.0 and out[0].p95 == pytest.approx(2.9)
    with pytest.raises(EmptyLog):
        handover_delay_stats([(_ev(1.0, Kind.INTRA), 0.0)])
    assert UTIL_BINS == (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def test_steps_per_user():
    assert steps_per_user(Model.PROPOSED, 500, 100) == 2
    assert steps_per_user(Model.POW_BASED, 500, 100) == 12
    assert steps_per_user(Model.NETWORK_BASED, 500, 100) == 18


def test_metric_series_ordering():
    s = MetricSeries("x", "Proposed", "B")
    s.add(1.0, 2.0)
    with pytest.raises(ValueError):
        s.add(0.5, 1.0)
    assert s.values.tolist() == [2.0]


def test_consensus_rows_small():
    rows = consensus_times([1, 50], difficulty=10, seeds=range(3))
    assert [r["txs"] for r in rows] == [1, 50]
    assert all(r["dpos_ms"] < r["pow_ms"] and r["dpos_key_ms"] < r["pow_key_ms"] for r in rows)


def test_transfer_rows_shape():
    topo = build_topology(Scenario())
    rows = transfer_rows(topo, 7, 22, [100, 5000], [2, 3], seed=0)
    assert len(rows) == 4 and all(r["multipath_ms"] <= r["baseline_ms"] for r in rows)


def test_csv_text_renders_numpy_scalars():
    text = csv_text([{"a": np.float64(0.1), "b": np.int64(3), "c": np.bool_(True)}])
    assert text == "a,b,c\n0.1,3,True\n"


def test_atomic_write_leaves_no_temporaries(tmp_path):
    atomic_write(tmp_path / "d" / "x.csv", "hello\n")
    assert os.listdir(tmp_path / "d") == ["x.csv"]
    assert (tmp_path / "d" / "x.csv").read_text() == "hello\n"


def test_run_meta_lists_unpublished_defaults():
    meta = run_meta(Scenario())
    for key in ("Pr_mW", "a1", "a2", "latency_ms", "service_ms", "timeout", "miner_distribution", "class1"):
        assert key in meta
    assert meta["miner_distribution"]["mu_t"] == 1500.0 and meta["miner_distribution"]["mu_t_alternative"] == 150.0
    assert math.isfinite(meta["util_window_s"])
