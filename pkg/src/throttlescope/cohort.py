"""Control-group analysis: privileged networks, comparative series, recovery.

Networks whose clients reach the top throughput percentile form a cohort
whose trajectory, compared with the national median, reveals exemptions from
a disruption. Recovery tables quantify each network's windowed mean change
against a pre-event baseline.
"""

from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Iterable, Sequence

from .aggregate import (
    AggregateSeries,
    ClientDay,
    GroupBy,
    daily_median,
    group_key,
)

BASELINE_DAYS = 60  # "two month" windows are 60 calendar days


@dataclass(frozen=True, slots=True)
class CohortSpec:
    period: tuple[date, date]
    percentile: float = 0.95
    grouping: GroupBy = GroupBy.ASN
    min_presence: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 < self.percentile < 1.0):
            raise ValueError("percentile must be in (0, 1)")
        if not (0.0 < self.min_presence <= 1.0):
            raise ValueError("min_presence must be in (0, 1]")
        if self.period[0] > self.period[1]:
            raise ValueError("empty period")


@dataclass(frozen=True, slots=True)
class NetworkRank:
    group: str
    owner: str
    client_count: int


@dataclass(frozen=True, slots=True)
class RecoveryRow:
    group: str
    owner: str
    delta_after: float | None
    delta_plus2: float | None
    delta_plus10: float | None
    delta_event2: float | None


@dataclass(frozen=True, slots=True)
class RecoveryTable:
    rows: tuple[RecoveryRow, ...]
    excluded: tuple[tuple[str, str, str], ...]  # (group, owner, failed criterion)
    baseline: tuple[date, date]
    event2_baseline: tuple[date, date] | None


def percentile_cutoff(values: Sequence[float], q: float) -> float:
    """Linear-interpolation percentile over the sorted values."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("no values")
    if len(ordered) == 1:
        return ordered[0]
    h = (len(ordered) - 1) * q
    lo = int(h)
    frac = h - lo
    if lo + 1 >= len(ordered):
        return ordered[-1]
    return ordered[lo] + frac * (ordered[lo + 1] - ordered[lo])


def top_percentile_networks(
    days: Iterable[ClientDay], spec: CohortSpec
) -> list[NetworkRank]:
    """Networks holding clients above the national throughput percentile.

    The cutoff is computed over all ClientDay throughputs in the period;
    a client counts for its network when at least one of its days is
    strictly above the cutoff. Result is sorted by descending client count,
    then group key.
    """
    start, end = spec.period
    in_period = [
        cd
        for cd in days
        if start <= cd.date <= end and cd.chosen.throughput is not None
    ]
    if not in_period:
        return []
    cutoff = percentile_cutoff([cd.chosen.throughput for cd in in_period], spec.percentile)
    clients: dict[str, set[str]] = defaultdict(set)
    owners: dict[str, str] = {}
    for cd in in_period:
        key = group_key(cd.attribution, spec.grouping)
        owners.setdefault(key, cd.attribution.owner)
        if cd.chosen.throughput > cutoff:
            clients[key].add(cd.client_addr)
    ranked = [
        NetworkRank(group=key, owner=owners[key], client_count=len(addrs))
        for key, addrs in clients.items()
        if addrs
    ]
    ranked.sort(key=lambda r: (-r.client_count, r.group))
    return ranked


def comparative_series(
    cohort_groups: Sequence[str],
    days: Iterable[ClientDay],
    grouping: GroupBy = GroupBy.ASN,
    span: tuple[date, date] | None = None,
) -> tuple[AggregateSeries, AggregateSeries]:
    """(cohort daily median series, national daily median series).

    The cohort series covers ClientDays whose group key is in
    cohort_groups; the national series covers every ClientDay. Dates where
    the cohort has no clients are gaps in the cohort series only.
    """
    wanted = set(cohort_groups)
    all_days = [
        cd
        for cd in days
        if span is None or (span[0] <= cd.date <= span[1])
    ]
    cohort_days = [cd for cd in all_days if group_key(cd.attribution, grouping) in wanted]
    return (
        daily_median(cohort_days, key="cohort"),
        daily_median(all_days, key="national"),
    )


def _daily_group_medians(days: list[ClientDay]) -> dict[date, float]:
    by_date: dict[date, list[float]] = defaultdict(list)
    for cd in days:
        if cd.chosen.throughput is not None:
            by_date[cd.date].append(cd.chosen.throughput)
    return {d: statistics.median(vals) for d, vals in by_date.items()}


def _window_stats(
    medians: dict[date, float], window: tuple[date, date]
) -> tuple[float | None, int]:
    values = [v for d, v in medians.items() if window[0] <= d <= window[1]]
    return (statistics.fmean(values) if values else None, len(values))


def _presence_ok(n_days: int, window: tuple[date, date], min_presence: float) -> bool:
    span = (window[1] - window[0]).days + 1
    return n_days >= min_presence * span


def recovery_table(
    days: Iterable[ClientDay],
    event_start: date,
    windows: Sequence[tuple[date, date]],
    spec: CohortSpec,
    fresh_baseline_for_last: bool = True,
) -> RecoveryTable:
    """Per-network percent change of windowed mean daily medians vs baseline.

    The baseline is the 60 days preceding event_start. Each of the (up to
    four) windows yields a delta of the window's mean daily group median
    against the baseline mean. A network qualifies when it reports on at
    least min_presence of the days of both the baseline and the first
    window; other windows without enough presence leave that delta absent.
    When fresh_baseline_for_last is set, the last window (a second event)
    is compared against the 60 days preceding that window instead of the
    original baseline.
    """
    if not 1 <= len(windows) <= 4:
        raise ValueError("recovery_table expects between one and four windows")
    baseline = (event_start - timedelta(days=BASELINE_DAYS), event_start - timedelta(days=1))
    event2_baseline: tuple[date, date] | None = None
    if fresh_baseline_for_last and len(windows) == 4:
        last_start = windows[-1][0]
        event2_baseline = (
            last_start - timedelta(days=BASELINE_DAYS),
            last_start - timedelta(days=1),
        )

    grouped: dict[str, list[ClientDay]] = defaultdict(list)
    owners: dict[str, str] = {}
    for cd in days:
        key = group_key(cd.attribution, spec.grouping)
        grouped[key].append(cd)
        owners.setdefault(key, cd.attribution.owner)

    rows: list[RecoveryRow] = []
    excluded: list[tuple[str, str, str]] = []
    for key in sorted(grouped):
        medians = _daily_group_medians(grouped[key])
        base_mean, base_days = _window_stats(medians, baseline)
        if base_mean is None or not _presence_ok(base_days, baseline, spec.min_presence):
            excluded.append((key, owners[key], "baseline_presence"))
            continue
        first_mean, first_days = _window_stats(medians, windows[0])
        if first_mean is None or not _presence_ok(first_days, windows[0], spec.min_presence):
            excluded.append((key, owners[key], "window_presence"))
            continue

        deltas: list[float | None] = []
        for idx, window in enumerate(windows):
            ref_window = baseline
            ref_mean = base_mean
            if event2_baseline is not None and idx == len(windows) - 1:
                ref_window = event2_baseline
                ref_mean, ref_days = _window_stats(medians, event2_baseline)
                if ref_mean is None or not _presence_ok(
                    ref_days, ref_window, spec.min_presence
                ):
                    deltas.append(None)
                    continue
            w_mean, w_days = _window_stats(medians, window)
            if (
                w_mean is None
                or ref_mean is None
                or ref_mean <= 0
                or not _presence_ok(w_days, window, spec.min_presence)
            ):
                deltas.append(None)
                continue
            deltas.append((w_mean - ref_mean) / ref_mean * 100.0)
        deltas += [None] * (4 - len(deltas))
        rows.append(
            RecoveryRow(
                group=key,
                owner=owners[key],
                delta_after=deltas[0],
                delta_plus2=deltas[1],
                delta_plus10=deltas[2],
                delta_event2=deltas[3],
            )
        )
    return RecoveryTable(
        rows=tuple(rows),
        excluded=tuple(excluded),
        baseline=baseline,
        event2_baseline=event2_baseline,
    )
