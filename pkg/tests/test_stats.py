"""Statistics: filtering, tests, summaries, session composition.

The Welch reference values come from an independent high-precision
implementation (mpmath incomplete beta), not from scipy, so the two
can disagree and the test would notice.
"""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenbench.model import SESSION_RECIPE, ConditionSpec, FunctionalUnitResult
from greenbench.stats import (
    DEFAULT_ALPHA,
    FILTER_METRIC,
    SUMMABLE_METRICS,
    InsufficientDataError,
    Summary,
    build_series,
    compare_series,
    compose_session,
    iqr_bounds,
    iqr_filter,
    normality_check,
    summarize,
    summarize_values,
    welch_t_test,
)

value_lists = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False),
    min_size=4,
    max_size=60,
)


def make_run(unit, i, machine_j, error=None, duration_s=2.0, bytes_=1000):
    start = 1_000_000_000 + i * 10_000_000_000
    return FunctionalUnitResult(
        unit=unit,
        run_id=f"svc-baseline-{unit}-{i:04d}",
        started_ns=start,
        ended_ns=start + int(duration_s * 1e9),
        energy_j={"cpu": machine_j * 0.5, "memory": machine_j * 0.1, "machine": machine_j},
        network_bytes=bytes_,
        error=error,
    )


class TestIqr:
    def test_textbook_outlier(self):
        lo, hi = iqr_bounds([1.0, 2.0, 3.0, 4.0, 100.0])
        assert (lo, hi) == (-1.0, 7.0)
        result = iqr_filter([1.0, 2.0, 3.0, 4.0, 100.0])
        assert result.retained == (1.0, 2.0, 3.0, 4.0)
        assert result.dropped == (100.0,)

    def test_constant_sample_keeps_everything(self):
        result = iqr_filter([5.0] * 5)
        assert result.retained == (5.0,) * 5
        assert result.dropped == ()

    def test_needs_four_values(self):
        with pytest.raises(InsufficientDataError):
            iqr_bounds([1.0, 2.0, 3.0])

    def test_preserves_order(self):
        result = iqr_filter([3.0, 100.0, 1.0, 2.0, 4.0])
        assert result.retained == (3.0, 1.0, 2.0, 4.0)

    @given(value_lists)
    def test_idempotent(self, values):
        once = iqr_filter(values)
        if len(once.retained) < 4:
            return  # fences undefined on the output, nothing to re-check
        twice = iqr_filter(once.retained)
        assert twice.retained == once.retained
        assert twice.dropped == ()

    @given(value_lists)
    def test_never_inflates_variance(self, values):
        result = iqr_filter(values)
        if len(result.retained) < 2 or not result.dropped:
            return
        raw_var = float(np.var(values, ddof=1))
        kept_var = float(np.var(result.retained, ddof=1))
        assert kept_var <= raw_var * (1 + 1e-9) + 1e-12

    @given(value_lists)
    def test_partition_is_complete(self, values):
        result = iqr_filter(values)
        assert sorted(result.retained + result.dropped) == sorted(values)


def welch_reference(a, b):
    """Welch statistic and two-sided p via the regularized incomplete beta."""
    mp.mp.dps = 50
    na, nb = len(a), len(b)
    mean_a = mp.fsum(a) / na
    mean_b = mp.fsum(b) / nb
    var_a = mp.fsum((mp.mpf(x) - mean_a) ** 2 for x in a) / (na - 1)
    var_b = mp.fsum((mp.mpf(x) - mean_b) ** 2 for x in b) / (nb - 1)
    se2 = var_a / na + var_b / nb
    t = (mean_a - mean_b) / mp.sqrt(se2)
    df = se2**2 / ((var_a / na) ** 2 / (na - 1) + (var_b / nb) ** 2 / (nb - 1))
    x = df / (df + t**2)
    p = mp.betainc(df / 2, mp.mpf(1) / 2, 0, x, regularized=True)
    return float(t), float(p)


class TestWelch:
    def test_identical_samples(self):
        verdict = welch_t_test([3.0, 4.0, 5.0], [3.0, 4.0, 5.0])
        assert verdict.p_value == pytest.approx(1.0)
        assert not verdict.significant

    def test_swapping_sides_negates_statistic(self):
        a = [10.1, 10.4, 9.8, 10.0]
        b = [12.0, 11.7, 12.2, 11.9]
        fwd = welch_t_test(a, b)
        rev = welch_t_test(b, a)
        assert fwd.statistic == pytest.approx(-rev.statistic, rel=1e-12)
        assert fwd.p_value == pytest.approx(rev.p_value, rel=1e-12)

    def test_clear_separation_is_significant(self):
        rng = np.random.default_rng(7)
        a = rng.normal(10.0, 1.0, 100)
        b = rng.normal(12.0, 1.0, 100)
        verdict = welch_t_test(a, b)
        assert verdict.significant
        assert verdict.p_value < 1e-6

    def test_degenerate_equal_constants(self):
        verdict = welch_t_test([2.0, 2.0], [2.0, 2.0])
        assert verdict.degenerate
        assert verdict.p_value == 1.0
        assert not verdict.significant

    def test_degenerate_distinct_constants(self):
        verdict = welch_t_test([2.0, 2.0], [3.0, 3.0])
        assert verdict.degenerate
        assert verdict.p_value == 0.0
        assert verdict.significant
        assert verdict.statistic == -math.inf

    def test_needs_two_per_side(self):
        with pytest.raises(InsufficientDataError):
            welch_t_test([1.0], [2.0, 3.0])

    def test_matches_independent_reference(self):
        # Ten seeded datasets of varying size, scale and overlap.
        for k in range(10):
            rng = np.random.default_rng(1000 + k)
            a = rng.normal(10.0, 1.0 + 0.1 * k, 40 + k).tolist()
            b = rng.normal(10.5, 2.0, 35 + k).tolist()
            got = welch_t_test(a, b)
            want_t, want_p = welch_reference(a, b)
            assert abs(got.statistic - want_t) <= 1e-6, f"dataset {k}"
            assert abs(got.p_value - want_p) <= 1e-6, f"dataset {k}"


class TestNormality:
    def test_uniform_ramp_rejected(self):
        ramp = np.linspace(0.0, 1.0, 500)
        verdict = normality_check(ramp)
        assert verdict.significant  # significant means non-normal

    def test_gaussian_accepted(self):
        sample = np.random.default_rng(42).normal(0.0, 1.0, 500)
        verdict = normality_check(sample)
        assert not verdict.significant

    def test_constant_is_degenerate(self):
        verdict = normality_check([3.0] * 20)
        assert verdict.degenerate
        assert not verdict.significant

    def test_needs_eight_values(self):
        with pytest.raises(InsufficientDataError):
            normality_check([1.0] * 7)


class TestSummaries:
    def test_constant_values(self):
        s = summarize_values([2.0, 2.0, 2.0])
        assert s.mean == 2.0
        assert s.sd == 0.0
        assert s.ci95 == (2.0, 2.0)

    def test_simple_spread(self):
        s = summarize_values([1.0, 2.0, 3.0])
        assert s.mean == pytest.approx(2.0)
        assert s.sd == pytest.approx(1.0)
        half = 1.96 / math.sqrt(3)
        assert s.ci95[0] == pytest.approx(2.0 - half)
        assert s.ci95[1] == pytest.approx(2.0 + half)

    def test_needs_two_values(self):
        with pytest.raises(InsufficientDataError):
            summarize_values([1.0])

    def test_summarize_reads_series_metric(self):
        runs = [make_run("Login", i, 10.0 + i) for i in range(5)]
        series = build_series("svc", ConditionSpec(), "Login", runs)
        assert summarize(series, "energy.machine").mean == pytest.approx(12.0)


class TestBuildSeries:
    def test_errors_dropped_before_iqr(self):
        runs = [make_run("Login", i, 10.0) for i in range(6)]
        runs[2] = make_run("Login", 2, 10.0, error="timeout")
        series = build_series("svc", ConditionSpec(), "Login", runs)
        assert series.raw_count == 6
        assert series.valid_count == 5
        assert series.retained_count == 5
        reasons = [e.reason for e in series.filter_log]
        assert reasons == ["error"]

    def test_outlier_dropped_with_whole_run(self):
        runs = [make_run("Login", i, v) for i, v in enumerate([10.0, 11.0, 10.5, 10.2, 40.0])]
        series = build_series("svc", ConditionSpec(), "Login", runs)
        assert series.retained_count == 4
        dropped = [e for e in series.filter_log if e.reason == "iqr"]
        assert len(dropped) == 1
        assert dropped[0].run_id == "svc-baseline-Login-0004"
        assert FILTER_METRIC in dropped[0].detail
        # The dropped run's other metrics vanish with it.
        assert len(series.metric_values("network_bytes")) == 4

    def test_too_few_for_iqr_keeps_all(self):
        runs = [make_run("Login", i, v) for i, v in enumerate([10.0, 10.0, 500.0])]
        series = build_series("svc", ConditionSpec(), "Login", runs)
        assert series.retained_count == 3
        assert series.filter_log == ()

    def test_unit_mismatch_rejected(self):
        runs = [make_run("Login", 0, 10.0), make_run("Read", 1, 10.0)]
        with pytest.raises(ValueError, match="Read"):
            build_series("svc", ConditionSpec(), "Login", runs)


class TestCompareSeries:
    def _pair(self, values_a, values_b, unit="Login"):
        runs_a = [make_run(unit, i, v) for i, v in enumerate(values_a)]
        runs_b = [make_run(unit, i, v) for i, v in enumerate(values_b)]
        a = build_series("svc_a", ConditionSpec(), unit, runs_a)
        b = build_series("svc_b", ConditionSpec(), unit, runs_b)
        return a, b

    def test_identical_series_zero_delta(self):
        a, b = self._pair([10.0, 11.0, 10.5] * 4, [10.0, 11.0, 10.5] * 4)
        delta = compare_series(a, b, "energy.machine")
        assert delta.delta == 0.0
        assert delta.delta_pct == 0.0
        assert not delta.significant

    def test_antisymmetry_is_exact(self):
        a, b = self._pair([10.0, 11.0, 10.5, 9.7], [12.1, 11.8, 12.4, 12.0])
        fwd = compare_series(a, b, "energy.machine")
        rev = compare_series(b, a, "energy.machine")
        assert rev.delta == -fwd.delta
        assert rev.p_value == fwd.p_value

    def test_direction_of_delta(self):
        # A uses more than B, so delta is positive: B saves.
        a, b = self._pair([20.0, 21.0, 19.5, 20.2], [10.0, 10.5, 9.9, 10.1])
        delta = compare_series(a, b, "energy.machine")
        assert delta.delta > 0
        assert delta.delta_pct == pytest.approx(50.0, abs=3.0)
        assert delta.significant

    def test_small_series_skip_normality(self):
        a, b = self._pair([10.0, 11.0, 10.5, 9.7], [12.1, 11.8, 12.4, 12.0])
        delta = compare_series(a, b, "energy.machine")
        assert delta.normality_a is None
        assert delta.normality_b is None
        big_a, big_b = self._pair(
            [10.0 + 0.1 * i for i in range(12)], [11.0 + 0.1 * i for i in range(12)]
        )
        delta = compare_series(big_a, big_b, "energy.machine")
        assert delta.normality_a is not None

    def test_unit_mismatch_rejected(self):
        a, _ = self._pair([10.0, 11.0, 10.5, 9.7], [1.0, 1.0, 1.0, 1.0])
        _, b = self._pair([1.0, 1.0, 1.0, 1.0], [12.1, 11.8, 12.4, 12.0], unit="Read")
        with pytest.raises(ValueError, match="unit mismatch"):
            compare_series(a, b, "energy.machine")


class TestComposeSession:
    def _summaries(self, mean=1.0, sd=0.1, n=100):
        per_metric = {m: Summary(mean, sd, n, (mean - 0.02, mean + 0.02)) for m in SUMMABLE_METRICS}
        return {unit: per_metric for unit in set(SESSION_RECIPE)}

    def test_recipe_counts_repeated_units(self):
        # Seven distinct units, one visited twice: eight contributions.
        composed = compose_session(self._summaries(mean=1.0))
        assert composed.metrics["energy.machine"].mean == pytest.approx(8.0)

    def test_variances_add(self):
        composed = compose_session(self._summaries(mean=1.0, sd=0.3))
        expected_sd = math.sqrt(8 * 0.3**2)
        assert composed.metrics["energy.machine"].sd == pytest.approx(expected_sd)

    def test_missing_constituent_named(self):
        summaries = self._summaries()
        del summaries["Reply"]
        with pytest.raises(ValueError, match="Reply"):
            compose_session(summaries)

    def test_n_is_the_weakest_unit(self):
        summaries = {
            unit: {m: Summary(1.0, 0.1, 100, (0.98, 1.02)) for m in SUMMABLE_METRICS}
            for unit in set(SESSION_RECIPE)
        }
        summaries["Delete"] = {
            m: Summary(1.0, 0.1, 41, (0.98, 1.02)) for m in SUMMABLE_METRICS
        }
        composed = compose_session(summaries)
        assert composed.metrics["duration"].n == 41

    def test_mean_power_not_summable(self):
        assert "mean_power.machine" not in SUMMABLE_METRICS


class TestFixtureSeries:
    def test_bundled_baseline_reaches_quota(self, fixture_store):
        series = fixture_store[("gmail", "baseline")]
        for unit, s in series.items():
            assert s.retained_count == 100, unit
            assert s.acceptance_grade

    def test_bundled_session_means_are_exact(self, fixture_store):
        # Fixture jitter is zero-sum, so retained means hit design values.
        session = fixture_store[("gmail", "baseline")]["Session"]
        assert np.mean(session.metric_values("energy.machine")) == pytest.approx(
            6281.0, rel=1e-9
        )
        assert np.mean(session.metric_values("duration")) == pytest.approx(
            265.0, rel=1e-9
        )

    def test_bundled_outliers_filtered(self, fixture_store):
        series = fixture_store[("outlook", "baseline")]["Session"]
        assert series.raw_count == 108
        assert series.valid_count == 104
        assert series.retained_count == 100
        reasons = [e.reason for e in series.filter_log]
        assert reasons.count("error") == 4
        assert reasons.count("iqr") == 4
