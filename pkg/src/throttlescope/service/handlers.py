"""Command handlers: one function per pipeline stage.

Each handler takes a request model, reads/writes files, and returns a
response model. FastAPI routes and the CLI both call these directly, so the
two front ends cannot drift apart.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

from .. import artifacts
from ..aggregate import (
    AggregateSeries,
    Cadence,
    GroupBy,
    best_per_client_day,
    cross_group_variance,
    daily_median,
    diurnal_profile,
    group_client_days,
    weekly_rollup,
)
from ..attribution import PrefixTable, PrefixTableError, bundled_table, load_prefix_table
from ..cohort import CohortSpec, comparative_series, recovery_table, top_percentile_networks
from ..detect import (
    DetectorConfig,
    coalesce,
    event_context,
    threshold_detect,
    variance_detect,
)
from ..ingest import ValidityReason, parse_records, validate
from ..metrics import derive
from ..synth import ScenarioError, generate, load_scenario
from .schemas import (
    AnalyzeRequest,
    AnalyzeResponse,
    CohortRequest,
    CohortResponse,
    DetectRequest,
    DetectResponse,
    EventModel,
    IngestRequest,
    IngestResponse,
    NetworkModel,
    ReportRequest,
    ReportResponse,
    SynthRequest,
    SynthResponse,
)

COMPARATIVE_COHORT_SIZE = 10


class PipelineError(Exception):
    """Handler failure with a machine-readable code and an HTTP status."""

    def __init__(self, code: str, detail: str, http_status: int = 400) -> None:
        super().__init__(detail)
        self.code = code
        self.detail = detail
        self.http_status = http_status


def _parse_date(text: str, label: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise PipelineError("BAD_DATE", f"{label}: {exc}") from exc


def _load_table(path: str | None) -> PrefixTable:
    if path is None:
        return bundled_table()
    if not Path(path).exists():
        raise PipelineError("TABLE_NOT_FOUND", f"prefix table {path} does not exist", 404)
    try:
        return load_prefix_table(path)
    except PrefixTableError as exc:
        raise PipelineError("BAD_TABLE", str(exc)) from exc


def _read_input(path: str) -> tuple[list, list]:
    if not Path(path).exists():
        raise PipelineError("INPUT_NOT_FOUND", f"input {path} does not exist", 404)
    with open(path, encoding="utf-8") as handle:
        return parse_records(handle)


@dataclass(slots=True)
class _Prepared:
    tests: list  # (record, DerivedMetrics, Attribution) for valid in-country tests
    days: list  # ClientDay
    malformed: int
    rejected: int
    misses: int


def _prepare(
    input_path: str,
    table: PrefixTable,
    country: str,
    date_from: str | None,
    date_to: str | None,
) -> _Prepared:
    records, failures = _read_input(input_path)
    lo = _parse_date(date_from, "date_from") if date_from else None
    hi = _parse_date(date_to, "date_to") if date_to else None

    rejected = 0
    misses = 0
    tests = []
    for record in records:
        if not validate(record).valid:
            rejected += 1
            continue
        day = record.timestamp.date()
        if (lo is not None and day < lo) or (hi is not None and day > hi):
            continue
        attribution = table.lookup(record.client_addr)
        if attribution is None:
            misses += 1
            continue
        if attribution.country != country:
            continue
        tests.append((record, derive(record), attribution))
    return _Prepared(
        tests=tests,
        days=best_per_client_day(tests),
        malformed=len(failures),
        rejected=rejected,
        misses=misses,
    )


def handle_synth(req: SynthRequest) -> SynthResponse:
    try:
        scenario = load_scenario(req.scenario)
        if req.seed is not None:
            scenario = dataclasses.replace(scenario, seed=req.seed)
        result = generate(scenario)
    except ScenarioError as exc:
        raise PipelineError("BAD_SCENARIO", str(exc)) from exc
    paths = artifacts.write_synth_outputs(req.out_dir, result)
    return SynthResponse(
        scenario=scenario.name,
        seed=scenario.seed,
        record_count=len(result.records),
        **paths,
    )


def handle_ingest(req: IngestRequest) -> IngestResponse:
    records, failures = _read_input(req.input_path)
    rejected: dict[str, int] = {}
    valid = 0
    for record in records:
        verdict = validate(record)
        if verdict.valid:
            valid += 1
        else:
            rejected[verdict.reason.value] = rejected.get(verdict.reason.value, 0) + 1
    if failures:
        rejected[ValidityReason.MALFORMED.value] = len(failures)
    stats = {
        "total_lines": len(records) + len(failures),
        "malformed": len(failures),
        "valid": valid,
        "rejected": dict(sorted(rejected.items())),
        "first_errors": [f"line {f.line_no}: {f.reason}" for f in failures[:10]],
    }
    stats_path = None
    if req.out_dir:
        stats_path = str(Path(req.out_dir) / artifacts.INGEST_STATS_JSON)
        artifacts.write_json(stats_path, stats)
    return IngestResponse(stats_path=stats_path, **stats)


def handle_analyze(req: AnalyzeRequest) -> AnalyzeResponse:
    table = _load_table(req.prefix_table_path)
    prepared = _prepare(req.input_path, table, req.country, req.date_from, req.date_to)
    warnings: list[str] = []
    if not prepared.tests:
        warnings.append("no valid records after filtering")
    if prepared.misses > 0:
        warnings.append(f"{prepared.misses} records had no covering prefix")

    daily = daily_median(prepared.days, key=f"country:{req.country}")
    weekly = weekly_rollup(daily)
    variance = cross_group_variance(prepared.days, cadence=Cadence.WEEKLY, by=GroupBy.ASN)
    profile = diurnal_profile(
        ((record, derived) for record, derived, _ in prepared.tests),
        req.utc_offset_minutes,
    )

    out = Path(req.out_dir)
    daily_path = out / artifacts.DAILY_CSV
    weekly_path = out / artifacts.WEEKLY_CSV
    variance_path = out / artifacts.VARIANCE_CSV
    diurnal_path = out / artifacts.DIURNAL_CSV
    artifacts.write_series_csv(daily_path, daily)
    artifacts.write_series_csv(weekly_path, weekly)
    artifacts.write_variance_csv(variance_path, variance)
    artifacts.write_diurnal_csv(diurnal_path, profile)

    grouped_daily_path = None
    if req.group_by != "country":
        grouped = group_client_days(prepared.days, GroupBy(req.group_by))
        series = [daily_median(cds, key=key) for key, cds in sorted(grouped.items())]
        grouped_daily_path = str(out / f"series_daily_by_{req.group_by}.csv")
        artifacts.write_grouped_series_csv(grouped_daily_path, series)

    return AnalyzeResponse(
        valid_records=len(prepared.tests),
        malformed=prepared.malformed,
        rejected=prepared.rejected,
        attribution_misses=prepared.misses,
        client_days=len(prepared.days),
        daily_path=str(daily_path),
        weekly_path=str(weekly_path),
        variance_path=str(variance_path),
        diurnal_path=str(diurnal_path),
        grouped_daily_path=grouped_daily_path,
        warnings=warnings,
    )


def _read_labeled_dates(path: str) -> list[date]:
    if not Path(path).exists():
        raise PipelineError("EVENTS_FILE_NOT_FOUND", f"{path} does not exist", 404)
    dates = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            dates.append(_parse_date(line, "labeled date"))
    return dates


def handle_detect(req: DetectRequest) -> DetectResponse:
    try:
        cfg = DetectorConfig(
            window_days=req.window_days,
            confidence=req.confidence,
            quantization_unit=req.quantization_unit_kbps,
            min_event_days=req.min_event_days,
            merge_gap_days=req.merge_gap_days,
            variance_drop_threshold=req.variance_drop_threshold,
        )
    except ValueError as exc:
        raise PipelineError("BAD_CONFIG", str(exc)) from exc
    table = _load_table(req.prefix_table_path)
    prepared = _prepare(req.input_path, table, req.country, req.date_from, req.date_to)

    daily = daily_median(prepared.days, key=f"country:{req.country}")
    thr_flags = threshold_detect(daily, cfg)
    events = coalesce(thr_flags, daily, cfg)

    variance = cross_group_variance(prepared.days, cadence=Cadence.WEEKLY, by=GroupBy.ASN)
    var_flags = variance_detect(variance, cfg)
    events += coalesce(var_flags, variance, cfg)
    events.sort(key=lambda e: (e.start, e.detector.value, e.direction.value))

    out = Path(req.out_dir)
    events_path = out / artifacts.EVENTS_JSON
    artifacts.write_events_json(events_path, events)

    correlation_path = None
    if req.events_file:
        rows = event_context(daily, _read_labeled_dates(req.events_file))
        correlation_path = str(out / artifacts.CORRELATION_CSV)
        artifacts.write_correlation_csv(correlation_path, rows)

    return DetectResponse(
        events=[EventModel(**artifacts.event_to_dict(e)) for e in events],
        flag_count=len(thr_flags) + len(var_flags),
        events_path=str(events_path),
        correlation_path=correlation_path,
    )


def _default_windows(event_start: date, event2_start: date | None) -> list[tuple[date, date]]:
    windows = [
        (event_start, event_start + timedelta(days=59)),
        (event_start + timedelta(days=63), event_start + timedelta(days=122)),
        (event_start + timedelta(days=244), event_start + timedelta(days=303)),
    ]
    if event2_start is not None:
        windows.append((event2_start, event2_start + timedelta(days=49)))
    return windows


def handle_cohort(req: CohortRequest) -> CohortResponse:
    table = _load_table(req.prefix_table_path)
    prepared = _prepare(req.input_path, table, req.country, None, None)
    try:
        spec = CohortSpec(
            period=(
                _parse_date(req.period_from, "period_from"),
                _parse_date(req.period_to, "period_to"),
            ),
            percentile=req.percentile,
            grouping=GroupBy(req.group_by),
            min_presence=req.min_presence,
        )
    except ValueError as exc:
        raise PipelineError("BAD_CONFIG", str(exc)) from exc

    event_start = _parse_date(req.event_start, "event_start")
    if req.windows is not None:
        windows = [
            (_parse_date(lo, "window start"), _parse_date(hi, "window end"))
            for lo, hi in req.windows
        ]
    else:
        event2 = _parse_date(req.event2_start, "event2_start") if req.event2_start else None
        windows = _default_windows(event_start, event2)
    if not 1 <= len(windows) <= 4:
        raise PipelineError("BAD_CONFIG", "between one and four windows required")

    networks = top_percentile_networks(prepared.days, spec)
    recovery = recovery_table(
        prepared.days, event_start, windows, spec, req.fresh_baseline_for_last
    )
    cohort_groups = [n.group for n in networks[:COMPARATIVE_COHORT_SIZE]]
    cohort_series, national_series = comparative_series(
        cohort_groups, prepared.days, spec.grouping, span=spec.period
    )

    out = Path(req.out_dir)
    networks_path = out / artifacts.NETWORKS_CSV
    recovery_path = out / artifacts.RECOVERY_CSV
    recovery_meta_path = out / artifacts.RECOVERY_META_JSON
    cohort_daily_path = out / "cohort_daily.csv"
    national_daily_path = out / "national_daily.csv"
    artifacts.write_networks_csv(networks_path, networks)
    artifacts.write_recovery_csv(recovery_path, recovery)
    artifacts.write_recovery_meta(recovery_meta_path, recovery)
    artifacts.write_series_csv(cohort_daily_path, cohort_series)
    artifacts.write_series_csv(national_daily_path, national_series)

    return CohortResponse(
        networks=[NetworkModel(**dataclasses.asdict(n)) for n in networks],
        recovery_rows=len(recovery.rows),
        recovery_excluded=len(recovery.excluded),
        networks_path=str(networks_path),
        recovery_path=str(recovery_path),
        recovery_meta_path=str(recovery_meta_path),
        cohort_daily_path=str(cohort_daily_path),
        national_daily_path=str(national_daily_path),
    )


def _coerce(value: str) -> object:
    if value == "":
        return None
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def _rows_to_payload(rows: list[dict[str, str]]) -> list[dict[str, object]]:
    return [{k: _coerce(v) for k, v in row.items()} for row in rows]


_REPORT_CSV_SECTIONS = {
    "daily": artifacts.DAILY_CSV,
    "weekly": artifacts.WEEKLY_CSV,
    "variance": artifacts.VARIANCE_CSV,
    "diurnal": artifacts.DIURNAL_CSV,
    "correlation": artifacts.CORRELATION_CSV,
    "cohort_networks": artifacts.NETWORKS_CSV,
    "recovery": artifacts.RECOVERY_CSV,
    "cohort_daily": "cohort_daily.csv",
    "national_daily": "national_daily.csv",
}
_REPORT_JSON_SECTIONS = {
    "ingest": artifacts.INGEST_STATS_JSON,
    "events": artifacts.EVENTS_JSON,
    "recovery_meta": artifacts.RECOVERY_META_JSON,
    "synth_truth": artifacts.TRUTH_JSON,
}


def handle_report(req: ReportRequest) -> ReportResponse:
    base = Path(req.artifacts_dir)
    if not base.is_dir():
        raise PipelineError("ARTIFACTS_NOT_FOUND", f"{base} is not a directory", 404)
    sections: dict[str, object] = {}
    for name, filename in sorted(_REPORT_CSV_SECTIONS.items()):
        path = base / filename
        if path.exists():
            sections[name] = _rows_to_payload(artifacts.read_csv_rows(path))
    for name, filename in sorted(_REPORT_JSON_SECTIONS.items()):
        path = base / filename
        if path.exists():
            sections[name] = artifacts.read_json(path)
    summary_path = Path(req.out_path) if req.out_path else base / artifacts.SUMMARY_JSON
    artifacts.write_json(summary_path, {"sections": sections})
    return ReportResponse(summary_path=str(summary_path), sections=sorted(sections))
