"""Flag abnormal periods in aggregate series and coalesce them into events.

Two warning mechanisms: a Poisson threshold around a rolling average of the
(quantized) daily metric, and a collapse/spike test on the variance between
groups. Both flag in either direction; consumers treat the output as leads
for review, not verdicts.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum

from scipy.stats import poisson

from .aggregate import AggregateSeries, Cadence, VarianceSeries


class FlagDirection(str, Enum):
    DROP = "DROP"
    SPIKE = "SPIKE"


class EventMetric(str, Enum):
    THROUGHPUT = "THROUGHPUT"
    VARIANCE = "VARIANCE"


class DetectorKind(str, Enum):
    THRESHOLD = "THRESHOLD"
    VARIANCE = "VARIANCE"


@dataclass(frozen=True, slots=True)
class DetectorConfig:
    window_days: int = 28
    confidence: float = 0.999
    quantization_unit: float = 10.0  # kbit/s per Poisson count unit
    min_event_days: int = 3
    merge_gap_days: int = 2
    variance_drop_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.window_days < 7:
            raise ValueError("window_days must be >= 7")
        if not (0.5 < self.confidence < 1.0):
            raise ValueError("confidence must be in (0.5, 1)")
        if self.quantization_unit <= 0:
            raise ValueError("quantization_unit must be positive")
        if self.min_event_days < 1 or self.merge_gap_days < 0:
            raise ValueError("bad event coalescing parameters")
        if not (0.0 < self.variance_drop_threshold < 1.0):
            raise ValueError("variance_drop_threshold must be in (0, 1)")

    @property
    def window_periods_weekly(self) -> int:
        return max(4, round(self.window_days / 7))


@dataclass(frozen=True, slots=True)
class BreachFlag:
    date: date
    direction: FlagDirection
    value: float
    lower: float
    upper: float


@dataclass(frozen=True, slots=True)
class DetectionEvent:
    start: date
    end: date
    metric: EventMetric
    direction: FlagDirection
    magnitude_pct: float | None
    baseline: float | None
    detector: DetectorKind
    short_term: bool
    flags: tuple[BreachFlag, ...]


@dataclass(frozen=True, slots=True)
class ContextRow:
    """One row of the labeled-date correlation table (values in bits/s)."""

    event_date: date
    day_of: float | None
    week_min: float | None
    week_min_date: date | None
    week_min_deviation_pct: float | None
    week_mean: float | None
    two_month_mean: float | None
    status: str  # OK or NO_DATA


def poisson_bounds(lam: float, confidence: float) -> tuple[int, int]:
    """Two-sided Poisson quantile bounds at the given confidence."""
    alpha = 1.0 - confidence
    lower = int(poisson.ppf(alpha / 2.0, lam))
    upper = int(poisson.ppf(1.0 - alpha / 2.0, lam))
    return lower, upper


def quantize(value_bps: float, unit_kbits: float) -> int:
    """Throughput as an integer count of quantization units (round half-even)."""
    return round(value_bps / (unit_kbits * 1000.0))


def threshold_detect(series: AggregateSeries, cfg: DetectorConfig) -> list[BreachFlag]:
    """Flag days whose quantized value breaches rolling Poisson bounds.

    For each point with at least window_days of trailing points (the
    evaluated day is excluded so it cannot mask itself), the trailing mean
    of the quantized metric is the Poisson rate; the two-sided quantile
    bounds at the configured confidence decide DROP/SPIKE. The warm-up span
    emits no flags.
    """
    points = series.points
    if len(points) <= cfg.window_days:
        return []
    quantized = [quantize(p.median_throughput, cfg.quantization_unit) for p in points]
    flags: list[BreachFlag] = []
    window = cfg.window_days
    for i in range(window, len(points)):
        lam = statistics.fmean(quantized[i - window : i])
        lower, upper = poisson_bounds(lam, cfg.confidence)
        value = quantized[i]
        if value < lower:
            flags.append(
                BreachFlag(points[i].date, FlagDirection.DROP, value, lower, upper)
            )
        elif value > upper:
            flags.append(
                BreachFlag(points[i].date, FlagDirection.SPIKE, value, lower, upper)
            )
    return flags


def variance_detect(series: VarianceSeries, cfg: DetectorConfig) -> list[BreachFlag]:
    """Flag periods whose variance collapses below (or spikes above) trend.

    The bound is symmetric around the trailing-window mean variance:
    DROP below (1 - t) x mean, SPIKE above (1 + t) x mean, with t the
    configured drop threshold. Needs at least 4 trailing periods.
    """
    points = series.points
    if len(points) < 5:
        return []
    window = (
        cfg.window_days
        if series.cadence is Cadence.DAILY
        else cfg.window_periods_weekly
    )
    flags: list[BreachFlag] = []
    for i in range(4, len(points)):
        trailing = [p.variance for p in points[max(0, i - window) : i]]
        mean = statistics.fmean(trailing)
        lower = (1.0 - cfg.variance_drop_threshold) * mean
        upper = (1.0 + cfg.variance_drop_threshold) * mean
        value = points[i].variance
        if value < lower:
            flags.append(
                BreachFlag(points[i].period_start, FlagDirection.DROP, value, lower, upper)
            )
        elif value > upper:
            flags.append(
                BreachFlag(points[i].period_start, FlagDirection.SPIKE, value, lower, upper)
            )
    return flags


def coalesce(
    flags: list[BreachFlag],
    series: AggregateSeries | VarianceSeries,
    cfg: DetectorConfig,
) -> list[DetectionEvent]:
    """Merge same-direction flags into dated events with magnitudes.

    Runs of flags separated by at most merge_gap_days unflagged days merge.
    Magnitude compares the in-event mean of the raw metric against the mean
    of the window_days points immediately preceding the event. Events
    spanning fewer than min_event_days are labeled short-term but still
    reported.
    """
    if isinstance(series, AggregateSeries):
        metric = EventMetric.THROUGHPUT
        detector = DetectorKind.THRESHOLD
        cadence = series.cadence
    else:
        metric = EventMetric.VARIANCE
        detector = DetectorKind.VARIANCE
        cadence = series.cadence
    values = series.value_by_date()
    dates = sorted(values)
    # Gap between flags is counted in series periods (days for DAILY,
    # weeks for WEEKLY).
    period_days = 1 if cadence is Cadence.DAILY else 7

    runs: list[list[BreachFlag]] = []
    for flag in sorted(flags, key=lambda f: f.date):
        if runs and runs[-1][-1].direction == flag.direction:
            gap = (flag.date - runs[-1][-1].date).days // period_days - 1
            if gap <= cfg.merge_gap_days:
                runs[-1].append(flag)
                continue
        runs.append([flag])

    window = (
        cfg.window_days
        if cadence is Cadence.DAILY
        else cfg.window_periods_weekly
    )
    events: list[DetectionEvent] = []
    for run in runs:
        start, end = run[0].date, run[-1].date
        pre = [values[d] for d in dates if d < start][-window:]
        baseline = statistics.fmean(pre) if pre else None
        in_event = [values[d] for d in dates if start <= d <= end]
        magnitude = None
        if baseline is not None and baseline > 0 and in_event:
            magnitude = (statistics.fmean(in_event) - baseline) / baseline * 100.0
        span_days = (end - start).days + period_days
        events.append(
            DetectionEvent(
                start=start,
                end=end,
                metric=metric,
                direction=run[0].direction,
                magnitude_pct=magnitude,
                baseline=baseline,
                detector=detector,
                short_term=span_days < cfg.min_event_days,
                flags=tuple(run),
            )
        )
    return events


WEEK_HALF_SPAN = 3  # labeled-date week = the 7 days centered on the date
TWO_MONTH_HALF_SPAN = 30  # surrounding baseline = 61 days centered


def event_context(
    series: AggregateSeries, labeled_dates: list[date]
) -> list[ContextRow]:
    """Correlate labeled calendar dates against a national daily series.

    For each date: the day-of median, the minimum daily median of the
    7 days centered on the date (with its date), that minimum's percent
    deviation from the surrounding two-month mean, the centered-week mean,
    and the two-month mean. Dates outside the series or in an empty week
    yield NO_DATA rows. The deviation mirrors (min - baseline) / baseline
    even though published tables show values below -100%.
    """
    if series.cadence is not Cadence.DAILY:
        raise ValueError("event_context expects a DAILY series")
    values = series.value_by_date()
    rows: list[ContextRow] = []
    span = (min(values), max(values)) if values else None
    for labeled in labeled_dates:
        if span is None or not (span[0] <= labeled <= span[1]):
            rows.append(
                ContextRow(labeled, None, None, None, None, None, None, "NO_DATA")
            )
            continue
        week_dates = [
            labeled + timedelta(days=offset)
            for offset in range(-WEEK_HALF_SPAN, WEEK_HALF_SPAN + 1)
        ]
        week_values = [(d, values[d]) for d in week_dates if d in values]
        if not week_values:
            rows.append(
                ContextRow(labeled, None, None, None, None, None, None, "NO_DATA")
            )
            continue
        min_date, week_min = min(week_values, key=lambda item: (item[1], item[0]))
        week_mean = statistics.fmean(v for _, v in week_values)
        lo = labeled - timedelta(days=TWO_MONTH_HALF_SPAN)
        hi = labeled + timedelta(days=TWO_MONTH_HALF_SPAN)
        surrounding = [values[d] for d in values if lo <= d <= hi]
        two_month_mean = statistics.fmean(surrounding) if surrounding else None
        deviation = None
        if two_month_mean is not None and two_month_mean > 0:
            deviation = (week_min - two_month_mean) / two_month_mean * 100.0
        rows.append(
            ContextRow(
                event_date=labeled,
                day_of=values.get(labeled),
                week_min=week_min,
                week_min_date=min_date,
                week_min_deviation_pct=deviation,
                week_mean=week_mean,
                two_month_mean=two_month_mean,
                status="OK",
            )
        )
    return rows
