"""Detectors and event coalescing, checked against a direct Poisson CDF oracle."""

from __future__ import annotations

import math
from datetime import date, timedelta

import pytest
from hypothesis import given, settings, strategies as st

from throttlescope.aggregate import (
    AggregateSeries,
    Cadence,
    SeriesPoint,
    VariancePoint,
    VarianceScope,
    VarianceSeries,
)
from throttlescope.detect import (
    BreachFlag,
    DetectorConfig,
    FlagDirection,
    coalesce,
    event_context,
    poisson_bounds,
    threshold_detect,
    variance_detect,
)


def poisson_quantile_oracle(q: float, lam: float) -> int:
    """Smallest k with CDF(k) >= q, by direct probability summation."""
    if lam == 0.0:
        return 0
    k = 0
    pmf = math.exp(-lam)
    cdf = pmf
    while cdf < q:
        k += 1
        pmf *= lam / k
        cdf += pmf
    return k


def throughput_series(values, start=date(2012, 1, 1), key="country:IR"):
    points = tuple(
        SeriesPoint(
            date=start + timedelta(days=i),
            median_throughput=float(v),
            median_avg_rtt=None,
            median_min_rtt=None,
            median_loss=None,
            median_net_limited=None,
            client_count=10,
        )
        for i, v in enumerate(values)
    )
    return AggregateSeries(key=key, cadence=Cadence.DAILY, points=points)


def variance_series(values, start=date(2012, 1, 2)):
    points = tuple(
        VariancePoint(
            period_start=start + timedelta(weeks=i),
            variance=float(v),
            relative_variance=0.1,
            n=6,
        )
        for i, v in enumerate(values)
    )
    return VarianceSeries(
        scope=VarianceScope.ACROSS_GROUPS, cadence=Cadence.WEEKLY, points=points
    )


class TestPoissonBounds:
    @pytest.mark.parametrize("lam", [0.5, 3.0, 41.0, 180.0, 650.0])
    @pytest.mark.parametrize("confidence", [0.95, 0.99, 0.999])
    def test_matches_direct_cdf_summation(self, lam, confidence):
        alpha = 1.0 - confidence
        lower, upper = poisson_bounds(lam, confidence)
        assert lower == poisson_quantile_oracle(alpha / 2.0, lam)
        assert upper == poisson_quantile_oracle(1.0 - alpha / 2.0, lam)

    def test_degenerate_rate(self):
        assert poisson_bounds(0.0, 0.999) == (0, 0)

    @given(lam=st.floats(0.1, 400.0))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_confidence(self, lam):
        lo1, hi1 = poisson_bounds(lam, 0.99)
        lo2, hi2 = poisson_bounds(lam, 0.999)
        assert lo2 <= lo1 and hi2 >= hi1


class TestThresholdDetect:
    def test_flat_series_then_one_drop_day(self):
        # 1.8 Mbit/s quantizes to 180 units; a 0.4 Mbit/s day breaches the
        # lower Poisson bound (oracle: 138 at 99.9% confidence).
        values = [1_800_000.0] * 28 + [400_000.0]
        cfg = DetectorConfig()
        flags = threshold_detect(throughput_series(values), cfg)
        assert len(flags) == 1
        flag = flags[0]
        assert flag.direction is FlagDirection.DROP
        assert flag.value == 40
        assert flag.lower == poisson_quantile_oracle(0.0005, 180.0)

    def test_constant_series_has_no_flags(self):
        values = [1_800_000.0] * 60
        assert threshold_detect(throughput_series(values), DetectorConfig()) == []

    def test_warm_up_emits_nothing(self):
        values = [1_800_000.0] * 20
        assert threshold_detect(throughput_series(values), DetectorConfig()) == []

    def test_spike_flagged_symmetrically(self):
        values = [1_800_000.0] * 28 + [4_000_000.0]
        flags = threshold_detect(throughput_series(values), DetectorConfig())
        assert [f.direction for f in flags] == [FlagDirection.SPIKE]

    def test_evaluated_day_excluded_from_window(self):
        # A collapsed day must not drag its own rolling mean down.
        values = [1_800_000.0] * 28 + [100_000.0, 100_000.0]
        flags = threshold_detect(throughput_series(values), DetectorConfig())
        assert len(flags) == 2

    def test_rescaling_metric_and_unit_together_is_invariant(self):
        values = [1_800_000.0] * 28 + [400_000.0, 2_600_000.0]
        cfg = DetectorConfig(quantization_unit=10.0)
        cfg_scaled = DetectorConfig(quantization_unit=50.0)
        base = threshold_detect(throughput_series(values), cfg)
        scaled = threshold_detect(
            throughput_series([v * 5.0 for v in values]), cfg_scaled
        )
        assert [(f.date, f.direction, f.value) for f in base] == [
            (f.date, f.direction, f.value) for f in scaled
        ]

    def test_higher_confidence_never_flags_more(self):
        values = [1_800_000.0] * 28 + [1_500_000.0, 2_100_000.0, 400_000.0]
        loose = threshold_detect(throughput_series(values), DetectorConfig(confidence=0.9))
        tight = threshold_detect(
            throughput_series(values), DetectorConfig(confidence=0.999)
        )
        assert len(tight) <= len(loose)
        assert {f.date for f in tight} <= {f.date for f in loose}


class TestVarianceDetect:
    def test_collapse_flags_sustained(self):
        values = [2.0e12] * 6 + [0.04e12] * 4  # a 98% collapse, holding
        flags = variance_detect(variance_series(values), DetectorConfig())
        drops = [f for f in flags if f.direction is FlagDirection.DROP]
        assert len(drops) >= 3
        assert drops[0].date == variance_series(values).points[6].period_start

    def test_constant_variance_silent(self):
        assert variance_detect(variance_series([1e12] * 10), DetectorConfig()) == []

    def test_spike_flagged(self):
        values = [1e12] * 6 + [5e12]
        flags = variance_detect(variance_series(values), DetectorConfig())
        assert [f.direction for f in flags] == [FlagDirection.SPIKE]

    def test_insufficient_history_silent(self):
        assert variance_detect(variance_series([1e12] * 4), DetectorConfig()) == []


class TestCoalesce:
    def make_flags(self, days, direction=FlagDirection.DROP, start=date(2012, 2, 1)):
        return [
            BreachFlag(start + timedelta(days=d - 1), direction, 40.0, 140.0, 220.0)
            for d in days
        ]

    def series_for(self, start=date(2012, 1, 1), n=60):
        return throughput_series([1_800_000.0] * n, start=start)

    def test_merge_rule_spans_small_gaps(self):
        flags = self.make_flags(list(range(1, 6)) + list(range(8, 21)))
        events = coalesce(flags, self.series_for(), DetectorConfig())
        assert len(events) == 1
        assert events[0].start == date(2012, 2, 1)
        assert events[0].end == date(2012, 2, 20)

    def test_large_gap_splits(self):
        flags = self.make_flags([1, 2, 3, 9, 10])
        events = coalesce(flags, self.series_for(), DetectorConfig())
        assert len(events) == 2

    def test_direction_change_splits(self):
        flags = self.make_flags([1, 2]) + self.make_flags(
            [3, 4], direction=FlagDirection.SPIKE
        )
        events = coalesce(flags, self.series_for(), DetectorConfig())
        assert [e.direction for e in events] == [FlagDirection.DROP, FlagDirection.SPIKE]

    def test_single_day_flag_is_short_term(self):
        events = coalesce(self.make_flags([5]), self.series_for(), DetectorConfig())
        assert len(events) == 1 and events[0].short_term

    def test_magnitude_against_pre_event_mean(self):
        values = [2_000_000.0] * 40 + [600_000.0] * 10
        series = throughput_series(values)
        flags = [
            BreachFlag(date(2012, 1, 1) + timedelta(days=i), FlagDirection.DROP, 60, 150, 250)
            for i in range(40, 50)
        ]
        (event,) = coalesce(flags, series, DetectorConfig())
        assert event.baseline == pytest.approx(2_000_000.0)
        assert event.magnitude_pct == pytest.approx(-70.0)

    def test_idempotent_on_own_output(self):
        flags = self.make_flags(list(range(1, 6)) + list(range(8, 21)) + [40])
        cfg = DetectorConfig()
        series = self.series_for()
        events = coalesce(flags, series, cfg)
        replay = [f for e in events for f in e.flags]
        assert coalesce(replay, series, cfg) == events


class TestEventContext:
    def build_series(self):
        # 121 days centered on the labeled date, flat at 0.16 except a dip.
        start = date(2012, 9, 3)
        values = [160_000.0] * 121
        values[30] = 250_000.0  # labeled day
        values[31] = 90_000.0  # next-day minimum
        return throughput_series(values, start=start), start + timedelta(days=30)

    def test_row_columns(self):
        series, labeled = self.build_series()
        (row,) = event_context(series, [labeled])
        assert row.status == "OK"
        assert row.day_of == 250_000.0
        assert row.week_min == 90_000.0
        assert row.week_min_date == labeled + timedelta(days=1)
        assert row.week_mean == pytest.approx(
            (160_000.0 * 5 + 250_000.0 + 90_000.0) / 7
        )
        # deviation follows (min - two_month_mean) / two_month_mean
        assert row.week_min_deviation_pct == pytest.approx(
            (90_000.0 - row.two_month_mean) / row.two_month_mean * 100.0
        )

    def test_outside_series_is_no_data(self):
        series, _ = self.build_series()
        (row,) = event_context(series, [date(2020, 1, 1)])
        assert row.status == "NO_DATA"

    def test_gap_week_is_no_data(self):
        series = throughput_series([1e5] * 30)
        # carve a hole: keep only points far from the labeled date
        labeled = date(2012, 1, 15)
        holed = AggregateSeries(
            key=series.key,
            cadence=series.cadence,
            points=tuple(
                p for p in series.points if abs((p.date - labeled).days) > 3
            ),
        )
        (row,) = event_context(holed, [labeled])
        assert row.status == "NO_DATA"

    def test_flat_series_deviation_near_zero(self):
        series = throughput_series([200_000.0] * 90)
        (row,) = event_context(series, [date(2012, 2, 15)])
        assert row.week_min_deviation_pct == pytest.approx(0.0, abs=1e-9)

    def test_weekly_series_rejected(self):
        weekly = AggregateSeries(key="k", cadence=Cadence.WEEKLY, points=())
        with pytest.raises(ValueError):
            event_context(weekly, [date(2012, 1, 1)])


class TestDetectorConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"window_days": 3},
            {"confidence": 0.4},
            {"confidence": 1.0},
            {"quantization_unit": 0.0},
            {"variance_drop_threshold": 0.0},
            {"min_event_days": 0},
        ],
    )
    def test_invariants_enforced(self, kwargs):
        with pytest.raises(ValueError):
            DetectorConfig(**kwargs)
