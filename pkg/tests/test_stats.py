import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from noisyamt.augmentation import SnrGrid
from noisyamt.errors import DegenerateSampleError
from noisyamt.stats import (
    ScoreSample,
    SignificanceRange,
    SignificanceTable,
    TTestResult,
    regularized_incomplete_beta,
    significant_ranges,
    student_t_sf,
    t_test,
    t_test_values,
)

pytest.importorskip("scipy.integrate")

from oracles import paired_oracle, sf_oracle, welch_oracle


class TestStudentT:
    @pytest.mark.parametrize("df", [0.5, 1, 3, 176, 1e4])
    def test_zero(self, df):
        assert student_t_sf(0.0, df) == 0.5

    def test_cauchy(self):
        assert student_t_sf(1.0, 1) == pytest.approx(0.25, abs=1e-14)
        for t in (-3.0, 0.3, 7.0):
            assert student_t_sf(t, 1) == pytest.approx(0.5 - math.atan(t) / math.pi, abs=1e-13)

    def test_quadrature_t2_df10(self):
        assert abs(student_t_sf(2.0, 10) - sf_oracle(2.0, 10)) <= 1e-10

    @pytest.mark.parametrize("df", [1, 2, 5, 10, 30, 176, 1000, 10_000])
    def test_quadrature_grid(self, df):
        for i in range(-16, 17):
            t = i * 0.5
            assert abs(student_t_sf(t, df) - sf_oracle(t, df)) <= 1e-10

    def test_normal_limit(self):
        assert student_t_sf(1.96, 1e5) == pytest.approx(0.0250, abs=2e-4)

    @given(st.floats(-50, 50), st.floats(0.2, 5000))
    def test_complement(self, t, df):
        assert student_t_sf(t, df) + student_t_sf(-t, df) == pytest.approx(1.0, abs=1e-12)

    @given(st.floats(0, 20), st.floats(0, 20), st.floats(0.5, 500))
    def test_p_monotone_in_abs_t(self, t1, t2, df):
        lo, hi = sorted((t1, t2))
        assert student_t_sf(hi, df) <= student_t_sf(lo, df) + 1e-15

    def test_incomplete_beta_endpoints_and_symmetry(self):
        assert regularized_incomplete_beta(2, 3, 0.0) == 0.0
        assert regularized_incomplete_beta(2, 3, 1.0) == 1.0
        # I_x(a, b) = 1 - I_{1-x}(b, a)
        assert regularized_incomplete_beta(2.5, 0.5, 0.3) == pytest.approx(
            1 - regularized_incomplete_beta(0.5, 2.5, 0.7), abs=1e-14)
        # I_x(1, 1) = x
        assert regularized_incomplete_beta(1, 1, 0.37) == pytest.approx(0.37, abs=1e-15)

    def test_rejects_bad_df(self):
        with pytest.raises(ValueError):
            student_t_sf(1.0, 0)


def sample(values, system="s", snr=0.0, metric="f1"):
    return ScoreSample(system, snr, metric, values)


class TestTTest:
    def test_identical_paired_is_degenerate(self):
        v = [0.5, 0.6, 0.7]
        with pytest.raises(DegenerateSampleError):
            t_test(sample(v), sample(v), "paired")

    def test_constant_welch_is_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            t_test(sample([0.5, 0.5]), sample([0.5, 0.5]), "welch")

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            t_test(sample([0.1, 0.2]), sample([0.1, 0.2, 0.3]), "paired")

    def test_metric_and_snr_mismatch(self):
        with pytest.raises(ValueError):
            t_test(sample([0.1, 0.2]), sample([0.1, 0.3], metric="recall"))
        with pytest.raises(ValueError):
            t_test(sample([0.1, 0.2]), sample([0.1, 0.3], snr=3.0))

    def test_limit_towards_constant_difference(self):
        base = [0.5, 0.6, 0.7, 0.8]
        prev = 0.0
        for eps in (1e-2, 1e-4, 1e-6):
            variant = [b + 0.1 for b in base[:-1]] + [base[-1] + 0.1 - eps]
            r = t_test(sample(base), sample(variant))
            assert r.t_statistic < prev
            prev = r.t_statistic
        assert r.t_statistic < -1e4 and r.p_value < 1e-10

    def test_jittered_fixture_vs_oracle(self):
        base = [0.5, 0.6, 0.7, 0.8]
        variant = [0.61, 0.69, 0.805, 0.897]
        r = t_test(sample(base), sample(variant))
        t, df, p = paired_oracle(base, variant)
        assert r.t_statistic == pytest.approx(t, abs=1e-9)
        assert r.degrees_of_freedom == df
        assert abs(r.p_value - p) <= 1e-6
        assert r.t_statistic < 0

    def test_random_paired_vs_oracle(self):
        rng = random.Random(42)
        for _ in range(50):
            n = rng.randint(2, 40)
            a = [rng.random() for _ in range(n)]
            b = [min(1, max(0, x + rng.gauss(0.02, 0.05))) for x in a]
            r = t_test_values(a, b, "paired")
            t, df, p = paired_oracle(a, b)
            assert abs(r.t_statistic - t) <= 1e-9
            assert abs(r.p_value - p) <= 1e-6

    def test_random_welch_vs_oracle(self):
        rng = random.Random(7)
        for _ in range(50):
            a = [rng.random() for _ in range(rng.randint(2, 30))]
            b = [rng.random() * 0.8 for _ in range(rng.randint(2, 30))]
            r = t_test_values(a, b, "welch")
            t, df, p = welch_oracle(a, b)
            assert abs(r.t_statistic - t) <= 1e-9
            assert r.degrees_of_freedom == pytest.approx(df, rel=1e-12)
            assert abs(r.p_value - p) <= 1e-6

    def test_agrees_with_scipy(self):
        stats = pytest.importorskip("scipy.stats")
        a = [0.81, 0.77, 0.93, 0.65, 0.7]
        b = [0.85, 0.8, 0.9, 0.75, 0.79]
        ours = t_test_values(a, b, "paired")
        ref = stats.ttest_rel(a, b)
        assert ours.t_statistic == pytest.approx(ref.statistic, rel=1e-12)
        assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-10)

    @pytest.mark.parametrize("kind", ["paired", "welch"])
    def test_swap_negates_t_preserves_p(self, kind):
        rng = random.Random(3)
        a = [rng.random() for _ in range(12)]
        b = [rng.random() for _ in range(12)]
        r1, r2 = t_test_values(a, b, kind), t_test_values(b, a, kind)
        assert r1.t_statistic == -r2.t_statistic
        assert r1.p_value == r2.p_value

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            t_test_values([0.1, 0.2], [0.3, 0.5], "wilcoxon")


def _tests_at(levels, significant):
    return {lv: TTestResult(-5.0 if lv in significant else 1.0, 10, 0.001 if lv in significant else 0.4, "paired")
            for lv in levels}


class TestSignificantRanges:
    grid = SnrGrid()
    levels = [-6 + 3 * i for i in range(18)]

    def test_table_row_shape(self):
        tests = _tests_at(self.levels, {-6, -3, 0, 3, 6, 9, 12})
        assert significant_ranges(tests, 0.05, self.grid) == [SignificanceRange("f1", -6, 12)]

    def test_none(self):
        assert significant_ranges(_tests_at(self.levels, set()), 0.05, self.grid) == []

    def test_run_splitting(self):
        got = significant_ranges(_tests_at(self.levels, {-6, 0}), 0.05, self.grid)
        assert got == [SignificanceRange("f1", -6, -6), SignificanceRange("f1", 0, 0)]

    def test_positive_t_not_significant(self):
        tests = {0.0: TTestResult(4.0, 10, 0.001, "paired")}
        assert significant_ranges(tests, 0.05, SnrGrid(0, 0, 1)) == []

    def test_missing_and_untestable_levels_break_runs(self):
        tests = _tests_at(self.levels, set(self.levels))
        tests[9] = None
        del tests[21]
        got = significant_ranges(tests, 0.05, self.grid)
        assert [(r.lo_db, r.hi_db) for r in got] == [(-6, 6), (12, 18), (24, 45)]

    def test_alpha_threshold_strict(self):
        tests = {0.0: TTestResult(-3.0, 10, 0.05, "paired")}
        assert significant_ranges(tests, 0.05) == []

    @given(st.sets(st.sampled_from([-6 + 3 * i for i in range(18)])))
    def test_ranges_cover_exactly_the_significant_levels(self, sig):
        got = significant_ranges(_tests_at(self.levels, sig), 0.05, self.grid)
        covered = {lv for r in got for lv in self.levels if r.lo_db <= lv <= r.hi_db}
        assert covered == sig
        assert all(a.hi_db + 3 < b.lo_db for a, b in zip(got, got[1:]))


def test_table_markdown_layout():
    table = SignificanceTable("inf", 0.05, "paired")
    table.rows["0"] = {"precision": [SignificanceRange("precision", -6, 30)],
                       "recall": [SignificanceRange("recall", -6, 9)],
                       "f1": [SignificanceRange("f1", -6, 12)]}
    md = table.to_markdown()
    assert md.splitlines()[0] == "| CNR | Precision (SNR) | Recall (SNR) | F1 Score (SNR) |"
    assert "| 0 | [-6, 30] | [-6, 9] | [-6, 12] |" in md
    assert table.to_dict()["rows"]["0"]["f1"] == [[-6, 12]]
