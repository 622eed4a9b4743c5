import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _panels import random_panel
from policytrial.did import (
    CohortEventStudy,
    CohortPoint,
    EventStudyConfig,
    EventStudyEstimate,
    TrialWindow,
    aggregate_event_study,
    cohort_event_study,
    estimate_event_study,
    mean_outcome,
    overall_att,
    two_by_two,
)
from policytrial.errors import MissingReference, NoData
from policytrial.panel import ComparisonPolicy, PanelDataset, TreatmentSchedule, build_cohorts
from policytrial.sim import oracle_did

seeds = st.integers(0, 2**32 - 1)
policies = st.sampled_from(list(ComparisonPolicy))

HAND = {
    "A": [1, 2, 3, 5, 8, 9],
    "B": [3, 3, 4, 4, 6, 7],
    "C": [0, 1, 1, 2, 2, 3],
    "D": [2, 2, 3, 3, 4, 6],
}


@pytest.fixture
def hand_panel():
    panel = PanelDataset({(u, t): float(v) for u, vs in HAND.items() for t, v in enumerate(vs)})
    sched = TreatmentSchedule({"A": 3, "B": 3, "C": None, "D": None})
    return panel, sched


def test_hand_built_event_study(hand_panel):
    # treated means by t: 2, 2.5, 3.5, 4.5, 7, 8; comparison: 1, 1.5, 2, 2.5, 3, 4.5
    # reference t = 2, so DID_k = (T[3+k] - 3.5) - (C[3+k] - 2)
    expected = {-3: -0.5, -2: -0.5, -1: 0.0, 0: 0.5, 1: 2.5, 2: 2.0}
    panel, sched = hand_panel
    cs = build_cohorts(sched)
    study = cohort_event_study(panel, cs.cohorts[0], cs)
    assert {k: p.estimate for k, p in study.points.items()} == pytest.approx(expected, abs=1e-12)
    for k in expected:
        assert oracle_did(panel, ["A", "B"], 3, ["C", "D"], k) == pytest.approx(expected[k], abs=1e-12)


def test_k_range_truncation(hand_panel):
    panel, sched = hand_panel
    cs = build_cohorts(sched)
    study = cohort_event_study(panel, cs.cohorts[0], cs, k_range=(-2, 1))
    assert study.event_times == [-2, -1, 0, 1]


def test_mean_outcome_constant_and_empty():
    panel = PanelDataset({(u, t): 4.2 for u in "xyz" for t in range(5)})
    assert mean_outcome(panel, {"x", "y"}, (1, 3)) == (pytest.approx(4.2), 6)
    with pytest.raises(NoData):
        mean_outcome(panel, set(), (1, 3))


def test_mean_outcome_pools_observations():
    panel = PanelDataset({("a", 0): 1.0, ("a", 1): 1.0, ("a", 2): 1.0, ("b", 0): 5.0})
    # per-unit-then-average would be 3.0; pooled is 8 / 4
    assert mean_outcome(panel, {"a", "b"}, (0, 2)) == (2.0, 4)


def _table1_panel():
    vals = {}
    for t in range(10):
        vals[("treated", t)] = 0.31 if t < 5 else 0.09
        vals[("comparison", t)] = 0.24 if t < 5 else 0.10
    return PanelDataset(vals)


def test_two_by_two_table1_cells():
    tab = two_by_two(_table1_panel(), {"treated"}, {"comparison"}, TrialWindow(0, 4, 5, 9))
    assert tab.did == pytest.approx(-0.08, abs=1e-12)
    assert tab.counts == {"treated_pre": 5, "treated_post": 5, "comparison_pre": 5, "comparison_post": 5}


def test_two_by_two_identities():
    flat = PanelDataset({(u, t): 1.0 for u in "ab" for t in range(4)})
    assert two_by_two(flat, {"a"}, {"b"}, TrialWindow(0, 1, 2, 3)).did == 0.0
    shifted = flat.map_values(lambda u, t, v: v + 0.7 if (u == "a" and t >= 2) else v)
    assert two_by_two(shifted, {"a"}, {"b"}, TrialWindow(0, 1, 2, 3)).did == pytest.approx(0.7)


def test_two_by_two_empty_cell_named():
    panel = PanelDataset({("a", 0): 1.0, ("a", 3): 1.0, ("b", 0): 1.0})
    with pytest.raises(NoData) as exc:
        two_by_two(panel, {"a"}, {"b"}, TrialWindow(0, 1, 2, 3))
    assert exc.value.cell == "comparison_post"


def test_trial_window_validation():
    with pytest.raises(ValueError):
        TrialWindow(0, 5, 5, 9)
    with pytest.raises(ValueError):
        TrialWindow(0, 4, 5, 9, reference_offset=0)


def test_missing_reference_is_fatal_for_cohort(hand_panel):
    panel, sched = hand_panel
    panel = PanelDataset({k: v for k, v in panel.values.items() if not (k[0] in "AB" and k[1] == 2)})
    cs = build_cohorts(sched)
    with pytest.raises(MissingReference):
        cohort_event_study(panel, cs.cohorts[0], cs)


def test_min_cell_size_suppresses(hand_panel):
    panel, sched = hand_panel
    vals = dict(panel.values)
    del vals[("B", 5)]
    cs = build_cohorts(sched)
    study = cohort_event_study(PanelDataset(vals), cs.cohorts[0], cs, min_cell_size=2)
    assert 2 not in study.points
    assert (2, "cell smaller than 2") in study.omitted


def _study(adoption, size, ests):
    pts = {k: CohortPoint(v, size, 1, frozenset()) for k, v in ests.items()}
    return CohortEventStudy(adoption, tuple(f"g{adoption}_{i}" for i in range(size)), -1, pts)


def test_aggregation_hand_value():
    agg = aggregate_event_study([_study(1, 5, {0: 0.2}), _study(2, 3, {0: -0.2})])
    assert agg[0].estimate == pytest.approx(0.05, abs=1e-15)
    assert agg[0].n_treated == 8 and agg[0].n_cohorts == 2


def test_aggregation_single_cohort_identity():
    s = _study(1, 4, {-2: 0.3, -1: 0.0, 0: -1.25})
    agg = aggregate_event_study([s])
    assert [(e.event_time, e.estimate) for e in agg] == [(-2, 0.3), (-1, 0.0), (0, -1.25)]


def test_aggregation_renormalizes_over_observed_cohorts():
    agg = aggregate_event_study([_study(1, 5, {0: 1.0, 5: 2.0}), _study(2, 3, {0: 1.0})])
    late = [e for e in agg if e.event_time == 5][0]
    assert late.estimate == 2.0 and late.n_treated == 5 and late.weights == ((1, 1.0),)


def test_overall_att_hand_value():
    est = [EventStudyEstimate(-2, 9.0, None, 1, 2), EventStudyEstimate(0, 0.1, None, 1, 2),
           EventStudyEstimate(1, 0.3, None, 1, 2)]
    assert overall_att(est) == pytest.approx(0.2, abs=1e-15)
    assert overall_att(est[1:2]) == 0.1
    with pytest.raises(NoData):
        overall_att(est[:1])


# -- properties -----------------------------------------------------------------------

def _all_estimates(panel, sched, policy):
    try:
        return estimate_event_study(panel, sched, EventStudyConfig(policy=policy))
    except (NoData,):
        return None


@settings(max_examples=150)
@given(seeds, policies)
def test_reference_normalization_and_counts(seed, policy):
    panel, sched = random_panel(np.random.default_rng(seed))
    res = _all_estimates(panel, sched, policy)
    if res is None:
        return
    for s in res.studies:
        if -1 in s.points:
            assert s.points[-1].estimate == 0.0
        assert all(p.n_treated <= s.size for p in s.points.values())
    for e in res.estimates:
        assert e.placebo == (e.event_time < 0)
        contrib = [s for s in res.studies if e.event_time in s.points]
        assert e.n_treated == sum(s.size for s in contrib)


@settings(max_examples=150)
@given(seeds, policies)
def test_matches_brute_force_oracle(seed, policy):
    panel, sched = random_panel(np.random.default_rng(seed), missing=0.25)
    res = _all_estimates(panel, sched, policy)
    if res is None:
        return
    for s in res.studies:
        for k, p in s.points.items():
            ref = oracle_did(panel, s.units, s.adoption, p.comparison_units, k)
            assert p.estimate == pytest.approx(ref, abs=1e-12)


@settings(max_examples=100)
@given(seeds)
def test_convex_aggregation(seed):
    panel, sched = random_panel(np.random.default_rng(seed), max_units=8, max_periods=12)
    res = _all_estimates(panel, sched, ComparisonPolicy.NEVER_TREATED)
    if res is None:
        return
    for e in res.estimates:
        vals = [s.points[e.event_time].estimate for s in res.studies if e.event_time in s.points]
        assert min(vals) - 1e-12 <= e.estimate <= max(vals) + 1e-12
        assert math.fsum(w for _, w in e.weights) == pytest.approx(1.0, abs=1e-12)
        assert all(w > 0 for _, w in e.weights)


def _estimate_map(res):
    return {e.event_time: e.estimate for e in res.estimates}


@settings(max_examples=100)
@given(seeds, st.floats(-50, 50))
def test_shift_invariance(seed, c):
    panel, sched = random_panel(np.random.default_rng(seed))
    base = _all_estimates(panel, sched, ComparisonPolicy.NEVER_TREATED)
    if base is None:
        return
    moved = _all_estimates(panel.map_values(lambda u, t, v: v + c), sched, ComparisonPolicy.NEVER_TREATED)
    assert _estimate_map(moved) == pytest.approx(_estimate_map(base), abs=1e-12)


@settings(max_examples=100)
@given(seeds, policies)
def test_common_shock_and_unit_effect_invariance(seed, policy):
    rng = np.random.default_rng(seed)
    panel, sched = random_panel(rng, balanced=True)
    base = _all_estimates(panel, sched, policy)
    if base is None:
        return
    shock = {t: float(x) for t, x in enumerate(rng.normal(0, 5, 20))}
    unit = {u: float(x) for u, x in zip(panel.units, rng.normal(0, 5, len(panel.units)))}
    shocked = _all_estimates(panel.map_values(lambda u, t, v: v + shock[t]), sched, policy)
    assert _estimate_map(shocked) == pytest.approx(_estimate_map(base), abs=1e-9)
    fixed = _all_estimates(panel.map_values(lambda u, t, v: v + unit[u]), sched, policy)
    assert _estimate_map(fixed) == pytest.approx(_estimate_map(base), abs=1e-9)


@settings(max_examples=50)
@given(seeds, st.floats(-1, 1))
def test_linear_differential_trend(seed, b):
    rng = np.random.default_rng(seed)
    panel, sched = random_panel(rng, balanced=True, min_periods=4)
    trended = panel.map_values(lambda u, t, v: b * t if sched.adoption[u] is not None else 0.0)
    res = _all_estimates(trended, sched, ComparisonPolicy.NEVER_TREATED)
    for e in res.estimates:
        assert e.estimate == pytest.approx(b * (e.event_time + 1), abs=1e-9)
