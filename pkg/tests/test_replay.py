import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benchcert.errors import ValidationError
from benchcert.fibers import CONTINUOUS, DISCRETE, CandidateTable, ErrorWindow, ExactPattern, NearestNeighbour, Quantile
from benchcert.replay import (
    DEFER,
    DEFAULT_RATIO_GRID,
    CalibrationRule,
    CostModel,
    ExactOracle,
    NoisyOracle,
    aggregate_counts,
    asymmetric_sweep,
    break_even,
    calibrate,
    clopper_pearson_upper,
    clopper_pearson_zero,
    plan_decisions,
    random_splits,
    replay_split,
    run_replay,
    summarize,
)
from benchcert.synth import planted_fiber_table

import oracles


def table(tokens, labels, prefix="c"):
    return CandidateTable(
        ids=tuple(f"{prefix}{i}" for i in range(len(tokens))),
        evidence=tuple((t,) for t in tokens),
        kinds=(DISCRETE,),
        labels=tuple(labels),
    )


# ---------------------------------------------------------------------------
# Clopper-Pearson
# ---------------------------------------------------------------------------


def test_zero_disagreement_bound_values():
    assert clopper_pearson_zero(50, 0.05) == pytest.approx(0.058155079116972264, abs=1e-12)
    assert clopper_pearson_zero(1, 0.05) == pytest.approx(0.95, abs=1e-15)
    big = clopper_pearson_zero(1000, 0.05)
    assert big == pytest.approx(0.0029912495450953314, abs=1e-12)
    assert big == pytest.approx(np.log(20) / 1000, rel=2e-3)


def test_zero_bound_monotone():
    ns = [1, 2, 5, 10, 50, 100, 1000]
    deltas = [0.001, 0.01, 0.05, 0.1, 0.5]
    for d in deltas:
        vals = [clopper_pearson_zero(n, d) for n in ns]
        assert all(a > b for a, b in zip(vals, vals[1:]))
    for n in ns:
        vals = [clopper_pearson_zero(n, d) for d in deltas]
        assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("k, n", [(0, 10), (1, 10), (3, 50), (10, 40), (0, 200)])
def test_general_bound_matches_bisection(k, n):
    assert clopper_pearson_upper(k, n, 0.05) == pytest.approx(oracles.clopper_pearson_upper_bisect(k, n, 0.05), abs=1e-9)


def test_bound_input_checks():
    with pytest.raises(ValidationError):
        clopper_pearson_zero(0, 0.05)
    with pytest.raises(ValidationError):
        clopper_pearson_zero(5, 1.0)


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


def test_unanimity_support_threshold():
    cal = table(["a"] * 50 + ["b"] * 49, [1] * 50 + [0] * 49)
    cmap = calibrate(cal, ExactPattern(), CalibrationRule(min_support=50))
    assert cmap.fibers[("a",)].action == 1
    assert cmap.fibers[("b",)].action is None
    assert cmap.certified_count == 1


def test_unanimity_needs_agreement():
    cal = table(["a"] * 60, [1] * 59 + [0])
    assert calibrate(cal, ExactPattern(), CalibrationRule(min_support=50)).certified_count == 0


def test_clopper_pearson_both_ways():
    cal = table(["a"] * 50, [1] * 50)
    strict = CalibrationRule(50, "clopper-pearson", tau_bound=0.05, delta=0.05)
    loose = CalibrationRule(50, "clopper-pearson", tau_bound=0.06, delta=0.05)
    assert calibrate(cal, ExactPattern(), strict).certified_count == 0
    assert calibrate(cal, ExactPattern(), loose).certified_count == 1
    split = CalibrationRule(50, "clopper-pearson", tau_bound=0.06, delta=0.05, multiplicity=2)
    assert calibrate(cal, ExactPattern(), split).certified_count == 0


def test_calibration_rule_validation():
    for kwargs in ({"min_support": 0}, {"mode": "vote"}, {"mode": "clopper-pearson", "tau_bound": 1.0},
                   {"mode": "clopper-pearson", "multiplicity": 0}):
        with pytest.raises(ValidationError):
            CalibrationRule(**kwargs)


def test_calibration_needs_labels():
    unlabelled = CandidateTable(ids=("a",), evidence=(("x",),), kinds=(DISCRETE,))
    with pytest.raises(ValidationError):
        calibrate(unlabelled, ExactPattern(), CalibrationRule())


def test_neighbour_rule_not_supported():
    cal = CandidateTable(ids=("a", "b"), evidence=((0.0,), (1.0,)), kinds=(CONTINUOUS,), labels=(0, 1))
    with pytest.raises(ValidationError):
        calibrate(cal, NearestNeighbour(1), CalibrationRule(1))


def test_majority_tie_rule():
    # global majority is 0 (3 vs 2); fiber "t" ties 1:1 and falls back to it
    cal = table(["t", "t", "u", "u", "u"], [1, 0, 0, 0, 1])
    cmap = calibrate(cal, ExactPattern(), CalibrationRule(1))
    assert cmap.global_majority == 0
    assert cmap.fibers[("t",)].majority == 0
    balanced = calibrate(table(["t", "t"], [1, 0]), ExactPattern(), CalibrationRule(1))
    assert balanced.global_majority == 0


def test_quantile_edges_fit_on_calibration():
    cal = CandidateTable(ids=tuple("abcd"), evidence=((0.0,), (1.0,), (2.0,), (3.0,)), kinds=(CONTINUOUS,),
                         labels=(0, 0, 1, 1))
    cmap = calibrate(cal, Quantile(2), CalibrationRule(2))
    ho = CandidateTable(ids=("x", "y"), evidence=((-5.0,), (10.0,)), kinds=(CONTINUOUS,), labels=(0, 1))
    assert [c.action for c in cmap.lookup(ho)] == [0, 1]


def test_window_certificates_centre_on_prediction():
    cal = CandidateTable(ids=tuple("abcde"), evidence=((0.0,), (0.1,), (0.2,), (1.0,), (1.1,)),
                         kinds=(CONTINUOUS,), labels=(1, 1, 1, 0, 1))
    cmap = calibrate(cal, ErrorWindow(0.15), CalibrationRule(2))
    ho = CandidateTable(ids=("x", "y", "z"), evidence=((0.1,), (1.05,), (5.0,)), kinds=(CONTINUOUS,), labels=(1, 0, 0))
    certs = cmap.lookup(ho)
    assert certs[0].action == 1 and certs[0].support == 3
    assert certs[1].action is None and certs[1].disagreements == 1
    assert certs[2] is None


def test_monotone_support():
    t = planted_fiber_table(600, 12, seed=4)
    counts = [calibrate(t, ExactPattern(), CalibrationRule(s)).certified_count for s in (1, 10, 30, 50, 80)]
    assert counts == sorted(counts, reverse=True)


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------


def test_pure_certified_fibers_have_no_false_decisions():
    cal = table(["a"] * 5 + ["b"] * 5, [1] * 5 + [0] * 5)
    ho = table(["a", "b", "b"], [1, 0, 0], prefix="h")
    out = replay_split(ho, calibrate(cal, ExactPattern(), CalibrationRule(5)))
    assert (out.decided_immediately, out.deferred, out.false_after, out.false_before) == (3, 0, 0, 0)


def test_unseen_and_deferred_fibers_are_acquired():
    cal = table(["a"] * 5 + ["m"] * 6, [1] * 5 + [1, 1, 1, 1, 0, 0])
    ho = table(["a", "m", "m", "new"], [1, 0, 1, 0], prefix="h")
    cmap = calibrate(cal, ExactPattern(), CalibrationRule(5))
    plan = plan_decisions(cmap, ho)
    assert plan.decisions() == {"h0": 1, "h1": DEFER, "h2": DEFER, "h3": DEFER}
    out = replay_split(ho, cmap, ExactOracle(), plan=plan)
    # benchmark majority says 1 for m and for the unseen fiber
    assert (out.false_before, out.fp_before, out.false_after, out.acquired) == (2, 2, 0, 3)
    assert out.decided_immediately + out.deferred == out.n


def test_noisy_oracle_introduces_errors_only_on_acquisitions():
    cal = table(["m"] * 10, [1, 0] * 5)
    ho = table(["m"] * 200, [1] * 200, prefix="h")
    cmap = calibrate(cal, ExactPattern(), CalibrationRule(5))
    out = replay_split(ho, cmap, NoisyOracle(1.0, seed=0))
    assert out.false_after == out.acquired == 200
    assert out.false_after_immediate == 0
    with pytest.raises(ValidationError):
        NoisyOracle(1.5, 0)


def test_planted_population_halves_minority_mass():
    t = planted_fiber_table(20000, 10, mixed_share=0.2, minority_rate=0.25, seed=9)
    outs = run_replay(t, ExactPattern(), CalibrationRule(50), n_splits=3, frac=0.5, seed=0)
    for o in outs:
        # two of ten fibers mixed, each with a quarter minority: 5% of candidates
        assert o.false_rate_before == pytest.approx(0.05, abs=0.01)
        assert o.false_after == 0


def test_random_splits_are_seeded():
    a = random_splits(10, 3, 0.5, seed=4)
    b = random_splits(10, 3, 0.5, seed=4)
    assert all((x[0] == y[0]).all() for x, y in zip(a, b))
    assert not (a[0][0] == a[1][0]).all()
    assert sorted(np.concatenate(a[0]).tolist()) == list(range(10))
    with pytest.raises(ValidationError):
        random_splits(10, 1, 1.0, 0)


def test_replay_is_deterministic():
    t = planted_fiber_table(1000, 10, seed=2)
    a = [o.row() for o in run_replay(t, ExactPattern(), CalibrationRule(20), 5, 0.5, 3, flip_rate=0.1)]
    b = [o.row() for o in run_replay(t, ExactPattern(), CalibrationRule(20), 5, 0.5, 3, flip_rate=0.1)]
    assert a == b


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_unanimity_false_decisions_only_from_certified_fibers(seed, share, rate):
    t = planted_fiber_table(400, 8, mixed_share=share, minority_rate=rate, seed=seed)
    for o in run_replay(t, ExactPattern(), CalibrationRule(10), 2, 0.5, seed):
        assert o.false_after == o.false_after_immediate
        assert o.decided_immediately + o.deferred == o.n
        assert o.false_before <= o.n


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------


def test_break_even_examples():
    assert break_even(20, 2, 90) == pytest.approx(0.2)
    assert break_even(7, 7, 10) == 0.0
    assert break_even(5, 0, 0) is None


def test_asymmetric_sweep_examples():
    rows = asymmetric_sweep(3, 20, 3, 2, 90)
    assert [r["c_fp_over_c_fn"] for r in rows] == list(DEFAULT_RATIO_GRID)
    assert all(r["break_even_c_acq"] == pytest.approx(0.2) for r in rows)
    sym = [r for r in asymmetric_sweep(10, 12, 1, 3, 40) if r["c_fp_over_c_fn"] == 1.0][0]
    assert sym["break_even_c_acq"] == break_even(22, 4, 40)
    worse = asymmetric_sweep(0, 0, 1, 1, 10)
    assert not any(r["cost_effective"] for r in worse)
    increasing = [r["break_even_c_acq"] for r in asymmetric_sweep(10, 0, 0, 0, 5)]
    assert increasing == sorted(increasing)
    with pytest.raises(ValidationError):
        asymmetric_sweep(1, 1, 0, 0, 0)


def test_cost_identity_at_break_even():
    t = planted_fiber_table(2000, 10, seed=5)
    for o in run_replay(t, ExactPattern(), CalibrationRule(30), 10, 0.5, seed=1):
        be = break_even(o.false_before, o.false_after, o.acquired)
        if be is None:
            continue
        model = CostModel(1.0, 1.0, be)
        assert model.bench_cost(o) - model.completion_cost(o) == pytest.approx(0.0, abs=1e-9)


def test_summary_and_counts():
    t = planted_fiber_table(1000, 10, seed=3)
    outs = run_replay(t, ExactPattern(), CalibrationRule(20), 4, 0.5, seed=0)
    s = summarize(outs)
    assert s["splits"] == 4
    assert s["false_rate_before"]["p10"] <= s["false_rate_before"]["mean"] <= s["false_rate_before"]["p90"]
    c = aggregate_counts(outs)
    assert c["fp_bench"] + c["fn_bench"] == pytest.approx(np.mean([o.false_before for o in outs]))
    with pytest.raises(ValidationError):
        CostModel(-1.0)
