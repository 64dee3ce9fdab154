"""Turn per-test metrics into comparative series.

The pipeline is: keep each client's most performant test per UTC day (bias
against false alarms), then aggregate daily medians per grouping key
(country, ASN, or prefix), roll up to ISO weeks, and compute variance across
groups or across days. Diurnal profiles are the exception: they are per-test,
bucketed by local hour.
"""

from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from typing import Iterable

from .attribution import Attribution
from .ingest import MeasurementRecord
from .metrics import DerivedMetrics

UTC_OFFSET_MIN = -720
UTC_OFFSET_MAX = 840


class Cadence(str, Enum):
    DAILY = "DAILY"
    WEEKLY = "WEEKLY"


class GroupBy(str, Enum):
    COUNTRY = "country"
    ASN = "asn"
    PREFIX = "prefix"


class VarianceScope(str, Enum):
    ACROSS_GROUPS = "ACROSS_GROUPS"
    WITHIN_GROUP = "WITHIN_GROUP"


def group_key(attribution: Attribution, by: GroupBy) -> str:
    if by is GroupBy.COUNTRY:
        return f"country:{attribution.country}"
    if by is GroupBy.ASN:
        return f"asn:{attribution.asn}"
    return f"prefix:{attribution.prefix}"


@dataclass(frozen=True, slots=True)
class ClientDay:
    """The single most performant valid test of one client on one UTC day."""

    client_addr: str
    date: date
    chosen: DerivedMetrics
    attribution: Attribution
    n_tests: int


@dataclass(frozen=True, slots=True)
class SeriesPoint:
    date: date
    median_throughput: float
    median_avg_rtt: float | None
    median_min_rtt: float | None
    median_loss: float | None
    median_net_limited: float | None
    client_count: int
    # Weekly-only extras, kept for the event-context analysis.
    min_throughput: float | None = None
    mean_throughput: float | None = None
    min_date: date | None = None


@dataclass(frozen=True, slots=True)
class AggregateSeries:
    key: str
    cadence: Cadence
    points: tuple[SeriesPoint, ...]

    def value_by_date(self) -> dict[date, float]:
        return {p.date: p.median_throughput for p in self.points}


@dataclass(frozen=True, slots=True)
class VariancePoint:
    period_start: date
    variance: float
    relative_variance: float
    n: int


@dataclass(frozen=True, slots=True)
class VarianceSeries:
    scope: VarianceScope
    cadence: Cadence
    points: tuple[VariancePoint, ...]

    def value_by_date(self) -> dict[date, float]:
        return {p.period_start: p.variance for p in self.points}


@dataclass(frozen=True, slots=True)
class HourBucket:
    hour: int
    median_throughput: float | None
    test_count: int


AttributedTest = tuple[MeasurementRecord, DerivedMetrics, Attribution]


def best_per_client_day(rows: Iterable[AttributedTest]) -> list[ClientDay]:
    """Collapse tests to one ClientDay per (client, UTC date).

    The chosen test maximizes throughput; ties go to the earliest timestamp,
    then the lowest average RTT. Tests without a defined throughput cannot
    be chosen. Output is sorted by (date, client) and does not depend on
    input order.
    """
    cells: dict[tuple[str, date], list[AttributedTest]] = defaultdict(list)
    for row in rows:
        record = row[0]
        cells[(record.client_addr, record.timestamp.date())].append(row)

    out: list[ClientDay] = []
    for (addr, day), tests in cells.items():
        best: AttributedTest | None = None
        for row in tests:
            _, derived, _ = row
            if derived.throughput is None:
                continue
            if best is None or _preference(row) < _preference(best):
                best = row
        if best is None:
            continue
        record, derived, attribution = best
        out.append(
            ClientDay(
                client_addr=addr,
                date=day,
                chosen=derived,
                attribution=attribution,
                n_tests=len(tests),
            )
        )
    out.sort(key=lambda cd: (cd.date, cd.client_addr))
    return out


def _preference(row: AttributedTest) -> tuple[float, object, float]:
    record, derived, _ = row
    assert derived.throughput is not None
    tie_rtt = derived.avg_rtt if derived.avg_rtt is not None else float("inf")
    return (-derived.throughput, record.timestamp, tie_rtt)


def group_client_days(
    days: Iterable[ClientDay], by: GroupBy
) -> dict[str, list[ClientDay]]:
    grouped: dict[str, list[ClientDay]] = defaultdict(list)
    for cd in days:
        grouped[group_key(cd.attribution, by)].append(cd)
    return dict(grouped)


def _median_or_none(values: list[float]) -> float | None:
    return statistics.median(values) if values else None


def daily_median(days: Iterable[ClientDay], key: str) -> AggregateSeries:
    """Daily per-metric medians over clients for one grouping key.

    Each metric's median skips clients where that metric is absent; even
    counts take the mean of the two central values. Days with no clients are
    gaps, never zeros.
    """
    by_date: dict[date, list[ClientDay]] = defaultdict(list)
    for cd in days:
        by_date[cd.date].append(cd)

    points = []
    for day in sorted(by_date):
        cohort = by_date[day]
        throughputs = [cd.chosen.throughput for cd in cohort if cd.chosen.throughput is not None]
        if not throughputs:
            continue
        points.append(
            SeriesPoint(
                date=day,
                median_throughput=statistics.median(throughputs),
                median_avg_rtt=_median_or_none(
                    [cd.chosen.avg_rtt for cd in cohort if cd.chosen.avg_rtt is not None]
                ),
                median_min_rtt=_median_or_none(
                    [cd.chosen.min_rtt for cd in cohort if cd.chosen.min_rtt is not None]
                ),
                median_loss=_median_or_none(
                    [
                        cd.chosen.loss_congestion
                        for cd in cohort
                        if cd.chosen.loss_congestion is not None
                    ]
                ),
                median_net_limited=_median_or_none(
                    [
                        cd.chosen.net_limited_ratio
                        for cd in cohort
                        if cd.chosen.net_limited_ratio is not None
                    ]
                ),
                client_count=len({cd.client_addr for cd in cohort}),
            )
        )
    return AggregateSeries(key=key, cadence=Cadence.DAILY, points=tuple(points))


def week_start(day: date) -> date:
    """Monday of the ISO week containing day."""
    return day - timedelta(days=day.weekday())


def weekly_rollup(series: AggregateSeries) -> AggregateSeries:
    """Roll a daily series into ISO weeks (Monday start).

    Each weekly metric is the median of that week's daily medians; the
    weekly minimum and mean of the daily throughput medians are retained
    (with the minimum's date) for event-context tables. client_count is the
    week's peak daily client count. Weeks with no reporting days are gaps.
    """
    if series.cadence is not Cadence.DAILY:
        raise ValueError("weekly_rollup expects a DAILY series")
    by_week: dict[date, list[SeriesPoint]] = defaultdict(list)
    for point in series.points:
        by_week[week_start(point.date)].append(point)

    points = []
    for monday in sorted(by_week):
        cohort = by_week[monday]
        throughputs = [p.median_throughput for p in cohort]
        min_value = min(throughputs)
        min_date = min(p.date for p in cohort if p.median_throughput == min_value)
        points.append(
            SeriesPoint(
                date=monday,
                median_throughput=statistics.median(throughputs),
                median_avg_rtt=_median_or_none(
                    [p.median_avg_rtt for p in cohort if p.median_avg_rtt is not None]
                ),
                median_min_rtt=_median_or_none(
                    [p.median_min_rtt for p in cohort if p.median_min_rtt is not None]
                ),
                median_loss=_median_or_none(
                    [p.median_loss for p in cohort if p.median_loss is not None]
                ),
                median_net_limited=_median_or_none(
                    [p.median_net_limited for p in cohort if p.median_net_limited is not None]
                ),
                client_count=max(p.client_count for p in cohort),
                min_throughput=min_value,
                mean_throughput=statistics.fmean(throughputs),
                min_date=min_date,
            )
        )
    return AggregateSeries(key=series.key, cadence=Cadence.WEEKLY, points=tuple(points))


def _period_start(day: date, cadence: Cadence) -> date:
    return day if cadence is Cadence.DAILY else week_start(day)


def cross_group_variance(
    days: Iterable[ClientDay],
    period: tuple[date, date] | None = None,
    cadence: Cadence = Cadence.WEEKLY,
    by: GroupBy = GroupBy.ASN,
) -> VarianceSeries:
    """Variance of throughput across groups, per period.

    For each period, take every group's median ClientDay throughput and
    compute the population variance across those medians. Periods with
    fewer than two reporting groups are gaps. relative_variance divides by
    the squared mean of the group medians.
    """
    cells: dict[date, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for cd in days:
        if period is not None and not (period[0] <= cd.date <= period[1]):
            continue
        if cd.chosen.throughput is None:
            continue
        start = _period_start(cd.date, cadence)
        cells[start][group_key(cd.attribution, by)].append(cd.chosen.throughput)

    points = []
    for start in sorted(cells):
        medians = [statistics.median(vals) for vals in cells[start].values()]
        if len(medians) < 2:
            continue
        variance = statistics.pvariance(medians)
        mean = statistics.fmean(medians)
        relative = variance / (mean * mean) if mean > 0 else 0.0
        points.append(
            VariancePoint(
                period_start=start,
                variance=variance,
                relative_variance=relative,
                n=len(medians),
            )
        )
    return VarianceSeries(
        scope=VarianceScope.ACROSS_GROUPS, cadence=cadence, points=tuple(points)
    )


def within_group_variance(
    series: AggregateSeries, cadence: Cadence = Cadence.WEEKLY
) -> VarianceSeries:
    """Variance of one group's daily medians across the days of each period.

    Complements cross_group_variance: day-over-day variation for a single
    network (or the national series) instead of spread between networks.
    Periods with fewer than two reporting days are gaps.
    """
    if series.cadence is not Cadence.DAILY:
        raise ValueError("within_group_variance expects a DAILY series")
    by_period: dict[date, list[float]] = defaultdict(list)
    for point in series.points:
        by_period[_period_start(point.date, cadence)].append(point.median_throughput)

    points = []
    for start in sorted(by_period):
        values = by_period[start]
        if len(values) < 2:
            continue
        variance = statistics.pvariance(values)
        mean = statistics.fmean(values)
        relative = variance / (mean * mean) if mean > 0 else 0.0
        points.append(
            VariancePoint(
                period_start=start,
                variance=variance,
                relative_variance=relative,
                n=len(values),
            )
        )
    return VarianceSeries(
        scope=VarianceScope.WITHIN_GROUP, cadence=cadence, points=tuple(points)
    )


def diurnal_profile(
    tests: Iterable[tuple[MeasurementRecord, DerivedMetrics]],
    utc_offset_minutes: int,
) -> tuple[HourBucket, ...]:
    """Median throughput and test count per local hour of day.

    Uses every test (no per-client dedup): externalities like office-hours
    load show up per test, not per client. The offset shifts UTC timestamps
    into local time (e.g. +270 for Tehran).
    """
    if not (UTC_OFFSET_MIN <= utc_offset_minutes <= UTC_OFFSET_MAX):
        raise ValueError(
            f"utc offset {utc_offset_minutes} outside "
            f"[{UTC_OFFSET_MIN}, {UTC_OFFSET_MAX}] minutes"
        )
    buckets: dict[int, list[float]] = {h: [] for h in range(24)}
    counts: dict[int, int] = {h: 0 for h in range(24)}
    for record, derived in tests:
        minute_of_day = record.timestamp.hour * 60 + record.timestamp.minute
        hour = ((minute_of_day + utc_offset_minutes) // 60) % 24
        counts[hour] += 1
        if derived.throughput is not None:
            buckets[hour].append(derived.throughput)
    return tuple(
        HourBucket(
            hour=h,
            median_throughput=_median_or_none(buckets[h]),
            test_count=counts[h],
        )
        for h in range(24)
    )


