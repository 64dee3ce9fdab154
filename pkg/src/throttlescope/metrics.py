"""Per-test derived metrics: throughput, RTT, loss ratios, network-limited time.

All functions are pure. A metric whose denominator is zero is *absent*, never
zero: zero throughput is a real observation, a missing RTT sample count is
not. ``derive`` maps absent components to None so aggregation can skip them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .ingest import MeasurementRecord

MICROS_PER_SECOND = 1_000_000.0


class UndefinedMetricError(ValueError):
    """Raised when a metric's denominator is zero."""


class LossRatios(NamedTuple):
    loss_congestion: float
    loss_retrans: float
    clamped: bool


@dataclass(frozen=True, slots=True)
class DerivedMetrics:
    """Computed values for one test; None marks an undefined component.

    throughput is bits/second, RTT fields are milliseconds, duration is
    seconds, the remaining fields are dimensionless fractions in [0, 1].
    """

    throughput: float | None
    avg_rtt: float | None
    min_rtt: float | None
    max_rtt: float | None
    loss_congestion: float | None
    loss_retrans: float | None
    net_limited_ratio: float | None
    duration: float | None


def duration_seconds(record: MeasurementRecord) -> float:
    """Test duration: the summed send-limited time counters, in seconds."""
    total = record.duration_us
    if total <= 0:
        raise UndefinedMetricError("send-limited time counters sum to zero")
    return total / MICROS_PER_SECOND


def avg_rtt(record: MeasurementRecord) -> float:
    """Mean round-trip time in milliseconds: sum of RTTs over trip count."""
    if record.count_rtt <= 0:
        raise UndefinedMetricError("no RTT samples (CountRTT = 0)")
    return record.sum_rtt / record.count_rtt


def loss_ratios(record: MeasurementRecord) -> LossRatios:
    """Loss as probabilities: congestion signals per segment sent and
    retransmitted segments per data segment sent.

    Counter quirks can push a ratio above 1; such values are clamped to 1
    and flagged rather than rejected.
    """
    if record.segs_out <= 0:
        raise UndefinedMetricError("no segments sent (SegsOut = 0)")
    if record.data_segs_out <= 0:
        raise UndefinedMetricError("no data segments sent (DataSegsOut = 0)")
    congestion = record.cong_signals / record.segs_out
    retrans = record.segs_retrans / record.data_segs_out
    clamped = congestion > 1.0 or retrans > 1.0
    return LossRatios(min(congestion, 1.0), min(retrans, 1.0), clamped)


def net_limited_ratio(record: MeasurementRecord) -> float:
    """Fraction of the test spent congestion-window limited."""
    total = record.duration_us
    if total <= 0:
        raise UndefinedMetricError("send-limited time counters sum to zero")
    return record.snd_lim_time_cwnd / total


def throughput(record: MeasurementRecord) -> float:
    """Download throughput in bits/second: acknowledged octets over duration."""
    total = record.duration_us
    if total <= 0:
        raise UndefinedMetricError("send-limited time counters sum to zero")
    return record.hc_thru_octets_acked * 8.0 / (total / MICROS_PER_SECOND)


def derive(record: MeasurementRecord) -> DerivedMetrics:
    """Compute every metric family; undefined components become None."""
    thr: float | None
    dur: float | None
    try:
        thr = throughput(record)
        ratio = net_limited_ratio(record)
        dur = duration_seconds(record)
    except UndefinedMetricError:
        thr, ratio, dur = None, None, None

    rtt_avg: float | None
    rtt_min: float | None
    rtt_max: float | None
    try:
        rtt_avg = avg_rtt(record)
        rtt_min = record.min_rtt
        rtt_max = record.max_rtt
    except UndefinedMetricError:
        rtt_avg, rtt_min, rtt_max = None, None, None

    loss_c: float | None = None
    loss_r: float | None = None
    if record.segs_out > 0:
        loss_c = min(record.cong_signals / record.segs_out, 1.0)
    if record.data_segs_out > 0:
        loss_r = min(record.segs_retrans / record.data_segs_out, 1.0)

    return DerivedMetrics(
        throughput=thr,
        avg_rtt=rtt_avg,
        min_rtt=rtt_min,
        max_rtt=rtt_max,
        loss_congestion=loss_c,
        loss_retrans=loss_r,
        net_limited_ratio=ratio,
        duration=dur,
    )

