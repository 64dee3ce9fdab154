"""Metric formulas against hand-computed values and invariants."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from throttlescope.metrics import (
    UndefinedMetricError,
    avg_rtt,
    derive,
    loss_ratios,
    net_limited_ratio,
    throughput,
)

from conftest import make_record


class TestAvgRtt:
    def test_hand_example(self):
        assert avg_rtt(make_record(sum_rtt=5000, count_rtt=50)) == 100.0

    def test_zero_sum(self):
        assert avg_rtt(make_record(sum_rtt=0, count_rtt=10, min_rtt=0, max_rtt=0)) == 0.0

    def test_no_samples_is_undefined(self):
        with pytest.raises(UndefinedMetricError):
            avg_rtt(make_record(count_rtt=0))


class TestLossRatios:
    def test_hand_example(self):
        got = loss_ratios(make_record(cong_signals=30, segs_out=100, segs_retrans=0))
        assert got.loss_congestion == pytest.approx(0.30)
        assert not got.clamped

    def test_zero_retransmissions(self):
        got = loss_ratios(make_record(segs_retrans=0, data_segs_out=500))
        assert got.loss_retrans == 0.0

    def test_zero_denominator_is_undefined(self):
        with pytest.raises(UndefinedMetricError):
            loss_ratios(make_record(cong_signals=5, segs_out=0, segs_retrans=0))

    def test_counter_quirk_clamps_with_flag(self):
        got = loss_ratios(make_record(cong_signals=2000, segs_out=100))
        assert got.loss_congestion == 1.0 and got.clamped


class TestNetLimitedRatio:
    def test_hand_example(self):
        record = make_record(
            snd_lim_time_cwnd=5_000_000,
            snd_lim_time_rwin=3_000_000,
            snd_lim_time_snd=2_000_000,
        )
        assert net_limited_ratio(record) == 0.5

    def test_never_congestion_limited(self):
        record = make_record(
            snd_lim_time_cwnd=0, snd_lim_time_rwin=10_000_000, snd_lim_time_snd=0
        )
        assert net_limited_ratio(record) == 0.0

    def test_zero_time_is_undefined(self):
        record = make_record(
            snd_lim_time_cwnd=0, snd_lim_time_rwin=0, snd_lim_time_snd=0
        )
        with pytest.raises(UndefinedMetricError):
            net_limited_ratio(record)

    def test_shares_sum_to_one(self):
        record = make_record(
            snd_lim_time_rwin=3_141_592,
            snd_lim_time_cwnd=2_718_281,
            snd_lim_time_snd=4_669_201,
        )
        total = record.duration_us
        shares = (
            net_limited_ratio(record)
            + record.snd_lim_time_rwin / total
            + record.snd_lim_time_snd / total
        )
        assert shares == pytest.approx(1.0, abs=1e-9)


class TestThroughput:
    def test_hand_example_one_mbit(self):
        assert throughput(make_record()) == pytest.approx(1_000_000.0)

    def test_zero_octets(self):
        assert throughput(make_record(hc_thru_octets_acked=0)) == 0.0

    def test_slow_national_rate(self):
        # 225,000 octets over 10 s is 0.18 Mbit/s.
        record = make_record(hc_thru_octets_acked=225_000)
        assert throughput(record) == pytest.approx(180_000.0)

    @given(factor=st.integers(2, 50))
    def test_scaling_octets_scales_throughput(self, factor):
        base = make_record()
        scaled = make_record(hc_thru_octets_acked=base.hc_thru_octets_acked * factor)
        assert throughput(scaled) == pytest.approx(factor * throughput(base))

    def test_doubling_octets_exactly_doubles(self):
        base = make_record()
        doubled = make_record(hc_thru_octets_acked=2 * base.hc_thru_octets_acked)
        assert throughput(doubled) == 2 * throughput(base)


class TestDerive:
    def test_fully_populated(self):
        derived = derive(make_record())
        assert derived.throughput == pytest.approx(1_000_000.0)
        assert derived.avg_rtt == 100.0
        assert derived.min_rtt == 60.0 and derived.max_rtt == 300.0
        assert derived.loss_congestion == pytest.approx(10 / 900)
        assert derived.loss_retrans == pytest.approx(5 / 880)
        assert derived.net_limited_ratio == 0.5
        assert derived.duration == pytest.approx(10.0)
        assert derived.min_rtt <= derived.avg_rtt <= derived.max_rtt

    def test_absent_rtt_does_not_zero_out(self):
        derived = derive(make_record(count_rtt=0))
        assert derived.throughput is not None
        assert derived.avg_rtt is None
        assert derived.min_rtt is None and derived.max_rtt is None

    def test_purity(self):
        record = make_record()
        assert derive(record) == derive(record)
