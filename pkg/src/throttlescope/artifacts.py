"""Deterministic on-disk artifacts: series CSVs, event JSON, summary JSON.

Every writer produces byte-identical output for identical inputs (fixed
numeric precision, sorted JSON keys, LF newlines, atomic replace), so reruns
of the pipeline can be diffed.
"""

from __future__ import annotations

import csv
import io
import json
import os
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

from .aggregate import AggregateSeries, Cadence, HourBucket, VarianceSeries
from .cohort import NetworkRank, RecoveryTable
from .detect import ContextRow, DetectionEvent
from .ingest import to_json_line
from .synth import SynthResult, scenario_to_dict

DAILY_CSV = "series_daily.csv"
WEEKLY_CSV = "series_weekly.csv"
VARIANCE_CSV = "variance_weekly.csv"
DIURNAL_CSV = "diurnal.csv"
EVENTS_JSON = "events.json"
CORRELATION_CSV = "correlation.csv"
NETWORKS_CSV = "cohort_networks.csv"
RECOVERY_CSV = "recovery_table.csv"
RECOVERY_META_JSON = "recovery_meta.json"
INGEST_STATS_JSON = "ingest_stats.json"
RECORDS_NDJSON = "records.ndjson"
TRUTH_JSON = "truth.json"
PREFIXES_CSV = "prefixes.csv"
SCENARIO_JSON = "scenario.json"
SUMMARY_JSON = "summary.json"


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def write_json(path: str | Path, payload: object) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _fmt(value: float | None, digits: int) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def _fmt_date(value: date | None) -> str:
    return "" if value is None else value.isoformat()


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_series_csv(path: str | Path, series: AggregateSeries) -> None:
    """Daily or weekly aggregate series; throughput in bits/second."""
    weekly = series.cadence is Cadence.WEEKLY
    header = [
        "week_start" if weekly else "date",
        "median_throughput_bps",
        "median_avg_rtt_ms",
        "median_min_rtt_ms",
        "median_loss",
        "median_net_limited",
        "client_count",
    ]
    if weekly:
        header += ["min_throughput_bps", "mean_throughput_bps", "min_date"]
    rows = []
    for p in series.points:
        row = [
            p.date.isoformat(),
            _fmt(p.median_throughput, 3),
            _fmt(p.median_avg_rtt, 3),
            _fmt(p.median_min_rtt, 3),
            _fmt(p.median_loss, 6),
            _fmt(p.median_net_limited, 6),
            str(p.client_count),
        ]
        if weekly:
            row += [
                _fmt(p.min_throughput, 3),
                _fmt(p.mean_throughput, 3),
                _fmt_date(p.min_date),
            ]
        rows.append(row)
    atomic_write_text(path, _csv_text(header, rows))


def write_grouped_series_csv(
    path: str | Path, series_list: Sequence[AggregateSeries]
) -> None:
    """Several daily series stacked into one CSV with a leading key column."""
    header = [
        "key",
        "date",
        "median_throughput_bps",
        "median_avg_rtt_ms",
        "median_min_rtt_ms",
        "median_loss",
        "median_net_limited",
        "client_count",
    ]
    rows = [
        [
            series.key,
            p.date.isoformat(),
            _fmt(p.median_throughput, 3),
            _fmt(p.median_avg_rtt, 3),
            _fmt(p.median_min_rtt, 3),
            _fmt(p.median_loss, 6),
            _fmt(p.median_net_limited, 6),
            str(p.client_count),
        ]
        for series in series_list
        for p in series.points
    ]
    atomic_write_text(path, _csv_text(header, rows))


def write_variance_csv(path: str | Path, series: VarianceSeries) -> None:
    header = ["period_start", "scope", "variance", "relative_variance", "n_groups"]
    rows = [
        [
            p.period_start.isoformat(),
            series.scope.value,
            _fmt(p.variance, 3),
            _fmt(p.relative_variance, 6),
            str(p.n),
        ]
        for p in series.points
    ]
    atomic_write_text(path, _csv_text(header, rows))


def write_diurnal_csv(path: str | Path, profile: Sequence[HourBucket]) -> None:
    header = ["local_hour", "median_throughput_bps", "test_count"]
    rows = [
        [str(b.hour), _fmt(b.median_throughput, 3), str(b.test_count)]
        for b in profile
    ]
    atomic_write_text(path, _csv_text(header, rows))


def event_to_dict(event: DetectionEvent) -> dict:
    return {
        "start": event.start.isoformat(),
        "end": event.end.isoformat(),
        "metric": event.metric.value,
        "direction": event.direction.value,
        "magnitude_pct": None
        if event.magnitude_pct is None
        else round(event.magnitude_pct, 2),
        "baseline": None if event.baseline is None else round(event.baseline, 3),
        "detector": event.detector.value,
        "short_term": event.short_term,
        "flags": [
            {
                "date": f.date.isoformat(),
                "direction": f.direction.value,
                "value": round(f.value, 3),
                "lower": round(f.lower, 3),
                "upper": round(f.upper, 3),
            }
            for f in event.flags
        ],
    }


def write_events_json(path: str | Path, events: Sequence[DetectionEvent]) -> None:
    write_json(path, {"events": [event_to_dict(e) for e in events]})


def write_correlation_csv(path: str | Path, rows: Sequence[ContextRow]) -> None:
    """Labeled-date correlation table; throughput rendered in Mbit/s."""
    header = [
        "event_date",
        "status",
        "day_of_mbps",
        "week_min_mbps",
        "week_min_date",
        "week_min_deviation_pct",
        "week_mean_mbps",
        "two_month_mean_mbps",
    ]

    def mb(v: float | None) -> str:
        return "" if v is None else f"{v / 1e6:.2f}"

    out = [
        [
            r.event_date.isoformat(),
            r.status,
            mb(r.day_of),
            mb(r.week_min),
            _fmt_date(r.week_min_date),
            _fmt(r.week_min_deviation_pct, 1),
            mb(r.week_mean),
            mb(r.two_month_mean),
        ]
        for r in rows
    ]
    atomic_write_text(path, _csv_text(header, out))


def write_networks_csv(path: str | Path, networks: Sequence[NetworkRank]) -> None:
    header = ["group", "owner", "client_count"]
    rows = [[n.group, n.owner, str(n.client_count)] for n in networks]
    atomic_write_text(path, _csv_text(header, rows))


def write_recovery_csv(path: str | Path, table: RecoveryTable) -> None:
    header = [
        "group",
        "owner",
        "delta_after_pct",
        "delta_plus2_pct",
        "delta_plus10_pct",
        "delta_event2_pct",
    ]
    rows = [
        [
            r.group,
            r.owner,
            _fmt(r.delta_after, 2),
            _fmt(r.delta_plus2, 2),
            _fmt(r.delta_plus10, 2),
            _fmt(r.delta_event2, 2),
        ]
        for r in table.rows
    ]
    atomic_write_text(path, _csv_text(header, rows))


def write_recovery_meta(path: str | Path, table: RecoveryTable) -> None:
    write_json(
        path,
        {
            "baseline": [table.baseline[0].isoformat(), table.baseline[1].isoformat()],
            "event2_baseline": None
            if table.event2_baseline is None
            else [
                table.event2_baseline[0].isoformat(),
                table.event2_baseline[1].isoformat(),
            ],
            "event2_baseline_note": (
                "the last window is compared against its own two-month "
                "pre-window by default; pass fresh_baseline_for_last=False "
                "to reuse the first baseline"
            ),
            "excluded": [
                {"group": g, "owner": o, "failed": f} for g, o, f in table.excluded
            ],
        },
    )


def write_synth_outputs(out_dir: str | Path, result: SynthResult) -> dict[str, str]:
    """records NDJSON + truth JSON (policies, onsets) + prefix CSV + scenario."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / RECORDS_NDJSON
    atomic_write_text(
        records_path, "".join(to_json_line(r) + "\n" for r in result.records)
    )
    truth_path = out / TRUTH_JSON
    write_json(
        truth_path,
        {
            "scenario": scenario_to_dict(result.scenario),
            "record_count": len(result.records),
            "events": [
                {
                    "policy_index": e.policy_index,
                    "asn": e.asn,
                    "prefix": e.prefix,
                    "start": e.start.isoformat(),
                    "end": e.end.isoformat(),
                    "factor": e.factor,
                    "ceiling_mbps": e.ceiling_mbps,
                    "loss_injection": e.loss_injection,
                    "rtt_inflation": e.rtt_inflation,
                }
                for e in result.events
            ],
        },
    )
    prefixes_path = out / PREFIXES_CSV
    rows = [
        [a.prefix, str(a.asn), a.owner, a.country]
        for a in result.prefix_table.entries
    ]
    atomic_write_text(
        prefixes_path, _csv_text(["cidr", "asn", "owner", "country"], rows)
    )
    scenario_path = out / SCENARIO_JSON
    write_json(scenario_path, scenario_to_dict(result.scenario))
    return {
        "records_path": str(records_path),
        "truth_path": str(truth_path),
        "prefix_table_path": str(prefixes_path),
        "scenario_path": str(scenario_path),
    }


def read_csv_rows(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return [dict(row) for row in csv.DictReader(handle)]


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
