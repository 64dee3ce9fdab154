"""Request/response models for the analysis service.

The service is job-oriented: requests point at files on a filesystem shared
with the server, responses carry summary values inline plus the paths of the
artifacts written. The CLI builds these same models and either calls the
handlers in process or posts them to a remote server.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

GroupByName = Literal["country", "asn", "prefix"]


class SynthRequest(BaseModel):
    scenario: str = Field(description="Canned scenario name or path to a JSON config")
    seed: Optional[int] = Field(default=None, description="Overrides the config seed")
    out_dir: str


class SynthResponse(BaseModel):
    scenario: str
    seed: int
    record_count: int
    records_path: str
    truth_path: str
    prefix_table_path: str
    scenario_path: str


class IngestRequest(BaseModel):
    input_path: str
    out_dir: Optional[str] = None


class IngestResponse(BaseModel):
    total_lines: int
    malformed: int
    valid: int
    rejected: dict[str, int]
    first_errors: list[str]
    stats_path: Optional[str] = None


class AnalyzeRequest(BaseModel):
    input_path: str
    out_dir: str
    prefix_table_path: Optional[str] = None
    country: str = "IR"
    group_by: GroupByName = "country"
    utc_offset_minutes: int = 270
    date_from: Optional[str] = None
    date_to: Optional[str] = None


class AnalyzeResponse(BaseModel):
    valid_records: int
    malformed: int
    rejected: int
    attribution_misses: int
    client_days: int
    daily_path: str
    weekly_path: str
    variance_path: str
    diurnal_path: str
    grouped_daily_path: Optional[str] = None
    warnings: list[str]


class FlagModel(BaseModel):
    date: str
    direction: str
    value: float
    lower: float
    upper: float


class EventModel(BaseModel):
    start: str
    end: str
    metric: str
    direction: str
    magnitude_pct: Optional[float]
    baseline: Optional[float]
    detector: str
    short_term: bool
    flags: list[FlagModel]


class DetectRequest(BaseModel):
    input_path: str
    out_dir: str
    prefix_table_path: Optional[str] = None
    country: str = "IR"
    window_days: int = 28
    confidence: float = 0.999
    quantization_unit_kbps: float = 10.0
    min_event_days: int = 3
    merge_gap_days: int = 2
    variance_drop_threshold: float = 0.5
    events_file: Optional[str] = None
    date_from: Optional[str] = None
    date_to: Optional[str] = None


class DetectResponse(BaseModel):
    events: list[EventModel]
    flag_count: int
    events_path: str
    correlation_path: Optional[str] = None


class CohortRequest(BaseModel):
    input_path: str
    out_dir: str
    prefix_table_path: Optional[str] = None
    country: str = "IR"
    group_by: Literal["asn", "prefix"] = "asn"
    percentile: float = 0.95
    min_presence: float = 0.5
    period_from: str
    period_to: str
    event_start: str
    event2_start: Optional[str] = None
    windows: Optional[list[tuple[str, str]]] = Field(
        default=None, description="Up to four explicit [start, end] ranges"
    )
    fresh_baseline_for_last: bool = True


class NetworkModel(BaseModel):
    group: str
    owner: str
    client_count: int


class CohortResponse(BaseModel):
    networks: list[NetworkModel]
    recovery_rows: int
    recovery_excluded: int
    networks_path: str
    recovery_path: str
    recovery_meta_path: str
    cohort_daily_path: str
    national_daily_path: str


class ReportRequest(BaseModel):
    artifacts_dir: str
    out_path: Optional[str] = None


class ReportResponse(BaseModel):
    summary_path: str
    sections: list[str]


class ErrorBody(BaseModel):
    error: str
    detail: str
