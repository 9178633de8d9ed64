import math
import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from envadapt.experiment import (
    FORCE_SAMPLES,
    MATERIAL_STIFFNESS,
    PATTERNS,
    POSITION_SAMPLES,
    Method,
    RecordingCache,
    TrialResult,
    build_catalog,
    command_table,
    force_command,
    position_command,
    rmse,
    run_mrs,
    run_pattern_comparison,
    run_proposed,
    run_recording,
    significance_stars,
    summary_text,
    trials_csv,
    welch_t_test,
)
from envadapt.settings import LoopConfig
from envadapt.signals import RecordMode, SamplingConfig

POS, FOR = RecordMode.POSITION_CONTROL, RecordMode.FORCE_CONTROL
X_AMP = 4 * math.pi / 9
TAIL = slice(100000, None)  # terminal 10 s cycle


def test_catalog_matches_sample_table():
    assert list(MATERIAL_STIFFNESS.values()) == [1.35, 1.71, 2.05, 3.12, 3.86, 4.88, 6.92, 13.68]
    cat = build_catalog()
    assert [e.imp.K for e in cat.position] == [1.35, 1.71, 2.05, 3.12, 3.86, 4.88]
    assert [e.imp.K for e in cat.force] == [1.35, 2.05, 3.12, 4.88, 6.92, 13.68]
    assert [e.name for e in cat.force] == list(FORCE_SAMPLES)
    assert [e.name for e in cat.position] == list(POSITION_SAMPLES)
    assert [e.id for e in cat.force] == [1, 2, 3, 4, 5, 6]
    with pytest.raises(KeyError):
        cat.entry(POS, 7)
    with pytest.raises(ValueError):
        build_catalog({"puffs": {"K": 1.0}})
    assert build_catalog({"erasers": {"D": 0.08}}).entry(FOR, 5).imp.D == 0.08


def test_patterns():
    assert [(p.id, p.pair) for p in PATTERNS] == [(1, (1, 6)), (2, (3, 4)), (3, (1, 2)), (4, (5, 6))]
    assert PATTERNS[1].held_out == (1, 2, 5, 6)


def test_command_values():
    x, _ = position_command(np.array([0.0, 5.0, 2.5]))
    np.testing.assert_allclose(x, [0.0, X_AMP, 2 * math.pi / 9], atol=1e-15)
    np.testing.assert_allclose(force_command(np.array([0.0, 5.0, 2.5])), [0.0, 0.8, 0.4], atol=1e-15)
    assert X_AMP == pytest.approx(1.3963, abs=1e-4)


@given(st.floats(0, 100))
def test_commands_periodic_and_bounded(t):
    x, xd = position_command(t)
    x10, _ = position_command(t + 10)
    assert x10 == pytest.approx(x, abs=1e-9)
    assert -1e-12 <= x <= X_AMP + 1e-12
    assert -1e-12 <= force_command(t) <= 0.8 + 1e-12
    h = 1e-6
    assert xd == pytest.approx((position_command(t + h)[0] - position_command(t - h)[0]) / (2 * h), abs=1e-5)


def test_command_table_shape():
    tab = command_table(SamplingConfig(duration=1.0))
    assert tab.shape == (10001, 3)


def test_rmse_examples():
    assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert rmse([1.5, 2.5], [1, 2]) == pytest.approx(0.5)
    assert rmse([0, 1], [1, 1]) == pytest.approx(math.sqrt(0.5))
    with pytest.raises(ValueError):
        rmse([1], [1, 2])


def test_welch_reference_values():
    r = welch_t_test([1, 2, 3, 4], [5, 6, 7, 8])
    assert r.t == pytest.approx(-4.3818, abs=1e-4)
    assert r.p == pytest.approx(0.00466, abs=1e-5)
    assert r.df == pytest.approx(6.0)
    same = welch_t_test([1, 2, 3], [1, 2, 3])
    assert (same.t, same.p) == (0.0, 1.0)
    with pytest.raises(ValueError):
        welch_t_test([1.0], [2.0, 3.0])


group = st.lists(st.floats(0.0, 10.0), min_size=2, max_size=12).filter(lambda g: np.var(g) > 1e-6)


@given(group, group)
def test_welch_against_scipy(a, b):
    r = welch_t_test(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert r.t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)
    assert r.p == pytest.approx(ref.pvalue, rel=1e-7, abs=1e-12)
    swapped = welch_t_test(b, a)
    assert swapped.t == pytest.approx(-r.t) and swapped.p == pytest.approx(r.p)


def test_stars():
    assert [significance_stars(p) for p in (0.0005, 0.005, 0.03, 0.2)] == ["***", "**", "*", "n.s."]


def test_trial_result_invariants():
    with pytest.raises(ValueError):
        TrialResult(Method.MRS_A, 1, 0.1, diverged=True)
    with pytest.raises(ValueError):
        TrialResult(Method.MRS_A, 1, -0.1)


@pytest.fixture(scope="module")
def records():
    cat = build_catalog()
    return cat, RecordingCache(cat, SamplingConfig(), LoopConfig())


def test_recording_tracking(records):
    cat, cache = records
    t = SamplingConfig().times()
    rec3 = cache.get(POS, 3)
    assert len(rec3) == 200001
    assert rmse(rec3.x[TAIL], position_command(t)[0][TAIL]) <= 0.02 * X_AMP
    rec6 = cache.get(FOR, 6)
    assert rmse(rec6.f[TAIL], force_command(t)[TAIL]) <= 0.05 * 0.8


def test_recording_deterministic(records):
    cat, cache = records
    again = run_recording(cat.entry(POS, 3), POS)
    assert again == cache.get(POS, 3)


def test_self_replay_position(records):
    cat, cache = records
    rec = cache.get(POS, 3)
    own = rmse(rec.x, position_command(SamplingConfig().times())[0])
    trial = run_mrs(rec, cat.entry(POS, 3))
    assert trial.rmse <= 1.5 * own
    assert trial.rmse <= 0.05 * X_AMP


def test_self_replay_force_small(records):
    cat, cache = records
    trial = run_mrs(cache.get(FOR, 6), cat.entry(FOR, 6))
    assert trial.rmse <= 0.05 * 0.8


@pytest.mark.xfail(strict=True, reason="the hybrid law halves the force gain, so replay lags the force-only "
                   "recording by more than 1.5x on soft samples even without excitation")
def test_self_replay_force_within_recording_error(records):
    cat, cache = records
    rec = cache.get(FOR, 1)
    own = rmse(rec.f, force_command(SamplingConfig().times()))
    assert run_mrs(rec, cat.entry(FOR, 1)).rmse <= 1.5 * own


def test_soft_record_on_stiff_sample_is_worse(records):
    cat, cache = records
    rec = cache.get(POS, 1)
    own = run_mrs(rec, cat.entry(POS, 1)).rmse
    assert run_mrs(rec, cat.entry(POS, 6)).rmse > own


def test_proposed_rejects_mixed_modes(records):
    cat, cache = records
    with pytest.raises(ValueError):
        run_proposed(cache.get(POS, 1), cache.get(FOR, 1), cat.entry(POS, 2))


def test_identical_records_score_as_replay(records):
    cat, cache = records
    rec = cache.get(POS, 1)
    assert run_proposed(rec, rec, cat.entry(POS, 4)).rmse == run_mrs(rec, cat.entry(POS, 4)).rmse


def test_extrapolation_pattern(summary):
    rep = next(r for r in summary.for_mode(POS) if r.pattern == 2)
    by = {(t.method, t.sample): t.rmse for t in rep.trials}
    for sid in (1, 6):
        assert by[(Method.PROPOSED, sid)] < min(by[(Method.MRS_A, sid)], by[(Method.MRS_B, sid)])


def test_report_shape(summary):
    assert len(summary.reports) == 8
    for r in summary.reports:
        assert len(r.mrs_rmses) == 8 and len(r.proposed_rmses) == 4
        assert r.diverged == 0


def test_every_block_favours_proposed(summary):
    for r in summary.reports:
        mrs, prop = r.means()
        assert prop < mrs
    assert summary.ratio(POS) <= 0.5


@pytest.mark.xfail(strict=True, reason="replaying stiff-sample recordings on soft samples overshoots most, "
                   "so Pattern 4 has the widest MRS spread in simulation")
def test_pattern1_mrs_spread_is_largest(summary):
    sd = {r.pattern: np.std(r.mrs_rmses, ddof=1) for r in summary.for_mode(POS)}
    assert all(sd[1] > sd[p] for p in (2, 3, 4))


def test_parallel_matches_serial():
    samp = SamplingConfig(duration=0.3)
    serial = run_pattern_comparison(PATTERNS[0], FOR, samp)
    parallel = run_pattern_comparison(PATTERNS[0], FOR, samp, jobs=2)
    assert serial.trials == parallel.trials


def test_outputs_format(summary):
    text = summary_text(summary, seed=7)
    assert text.startswith("seed 7\n")
    assert len(re.findall(r"^\[pattern \d (PositionControl|ForceControl)\]", text, re.M)) == 8
    assert len(re.findall(r"^\[all patterns \w+\] .* ratio ", text, re.M)) == 2
    lines = trials_csv(summary).splitlines()
    assert lines[0] == "pattern,mode,method,sample,rmse,diverged"
    assert len(lines) == 1 + 96
