import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bchandover.attacks import (DeliveryMonitor, Detection, DetectionReport, DuplicateMonitor, attack_config,
                                fig13_scenario, inject_and_detect, make_plan)
from bchandover.engine import build_topology
from bchandover.scenario import Model, Scenario


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=20))
def test_duplicate_ratio_oracle(counts):
    mon = DuplicateMonitor(0.5, 2500.0)
    for k, (o, d) in enumerate(counts):
        flagged = mon.observe("x", k * 1000.0, o, d)
        window = counts[max(0, k - 2):k + 1]
        orig, dup = sum(c[0] for c in window), sum(c[1] for c in window)
        assert flagged == (orig + dup > 0 and dup / (orig + dup) > 0.5)


def test_forget_resets_history():
    mon = DuplicateMonitor()
    assert mon.observe("a", 0.0, 1, 10)
    mon.forget("a")
    assert not mon.observe("a", 10.0, 10, 1)


def test_delivery_monitor_needs_clean_record():
    mon = DeliveryMonitor(threshold=2)
    mon.record([1, 2, 3], False)
    mon.record([1, 4], False)
    mon.record([4], True)
    assert mon.flagged() == {1}


def test_detection_rates():
    dets = [Detection("a", "flood", 1, 0.0, 500.0), Detection("b", "flood", 1, 0.0, None),
            Detection("c", "spoofed", 2, 5.0, 5.0, True), Detection("d", "numb", 2, 0.0, 2000.0)]
    r = DetectionReport(0, dets, ["h"], {1, 2}, {2, 9})
    assert r.class1_rate == 0.5 and r.class1_latency == 500.0
    assert r.class2_rate == 1.0 and r.join_time_rate == 1.0
    assert r.false_positives == 1 and r.ap_detection_rate == 0.5 and r.ap_false_positives == 1
    assert math.isnan(DetectionReport(0, [], [], set(), set()).ap_detection_rate)


def test_plan_partitions_attackers():
    s = fig13_scenario(3)
    plan = make_plan(s, build_topology(s), np.random.default_rng(0))
    assert len(plan.flooders) == 50 and len(plan.numb) == 5 and len(plan.linkability) == 5
    assert not set(plan.flooders) & plan.numb and not plan.numb & set(plan.linkability)
    assert len(plan.compromised_aps) == 20 and len(plan.spoofed) == 10 and len(plan.replayed) == 5
    assert all(not plan.is_malicious(v) for _, v in plan.replayed)


def test_baselines_carry_no_attacks():
    s = fig13_scenario(0, model=Model.POW_BASED)
    plan = make_plan(s, build_topology(s), np.random.default_rng(0))
    assert plan.flooders == {} and plan.compromised_aps == set()


def test_empty_config_rejected():
    assert attack_config(Scenario()).empty
    with pytest.raises(ValueError):
        inject_and_detect(Scenario())


def test_detection_run_catches_everything():
    r = inject_and_detect(fig13_scenario(1))
    assert r.class1_rate == 1.0 and r.class2_rate == 1.0 and r.join_time_rate == 1.0
    assert r.false_positives == 0
    kinds = {d.kind for d in r.detections}
    assert kinds == {"flood", "spoofed", "replayed", "blocked", "numb", "linkability"}
    assert r.ap_detection_rate > 0


def test_short_run_keeps_replay_window_valid():
    s = fig13_scenario(0, duration=20.0)
    plan = make_plan(s, build_topology(s), np.random.default_rng(0))
    assert all(0.0 <= t <= 10_000.0 for t, _ in plan.replayed)
