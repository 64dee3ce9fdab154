"""Command-line front end: a thin client over the service handlers.

Every subcommand builds the same request model the HTTP API accepts, then
either calls the handler in process (default) or posts it to a running
server given via --server. Results are printed as JSON; failures exit
non-zero with an error JSON on stderr.

Set THROTTLESCOPE_LOG=debug|info|warning to control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Callable, Sequence

import httpx
from pydantic import BaseModel

from . import __version__
from .service import handlers
from .service.handlers import PipelineError
from .service.schemas import (
    AnalyzeRequest,
    CohortRequest,
    DetectRequest,
    IngestRequest,
    ReportRequest,
    SynthRequest,
)

log = logging.getLogger("throttlescope")

_ENDPOINTS: dict[str, tuple[str, Callable]] = {
    "synth": ("/v1/synth", handlers.handle_synth),
    "ingest": ("/v1/ingest", handlers.handle_ingest),
    "analyze": ("/v1/analyze", handlers.handle_analyze),
    "detect": ("/v1/detect", handlers.handle_detect),
    "cohort": ("/v1/cohort", handlers.handle_cohort),
    "report": ("/v1/report", handlers.handle_report),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="throttlescope",
        description="Detect throttling events in crowd-sourced TCP diagnostics",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--server",
        help="Base URL of a running service; without it commands run in process",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", help="Generate a labeled synthetic corpus")
    p.add_argument("--scenario", required=True, help="Canned name or JSON config path")
    p.add_argument("--seed", type=int, help="Override the scenario seed")
    p.add_argument("--out", required=True, help="Output directory")

    p = sub.add_parser("ingest", help="Parse and filter records, report stats")
    p.add_argument("--input", required=True, help="NDJSON records path")
    p.add_argument("--out", help="Directory for ingest_stats.json")

    p = sub.add_parser("analyze", help="Emit daily/weekly/variance/diurnal series")
    _add_corpus_args(p)
    p.add_argument(
        "--group-by",
        choices=["country", "asn", "prefix"],
        default="country",
        help="Also emit stacked per-group daily series for asn/prefix",
    )
    p.add_argument("--utc-offset", type=int, default=270, help="Diurnal offset, minutes")

    p = sub.add_parser("detect", help="Run detectors and coalesce events")
    _add_corpus_args(p)
    p.add_argument("--window", type=int, default=28, help="Rolling window, days")
    p.add_argument("--confidence", type=float, default=0.999)
    p.add_argument("--quantize", type=float, default=10.0, help="Unit, kbit/s")
    p.add_argument("--min-event-days", type=int, default=3)
    p.add_argument("--merge-gap", type=int, default=2)
    p.add_argument("--variance-threshold", type=float, default=0.5)
    p.add_argument("--events-file", help="Labeled dates for the correlation table")

    p = sub.add_parser("cohort", help="Top-percentile networks and recovery table")
    _add_corpus_args(p, dates=False)
    p.add_argument("--group-by", choices=["asn", "prefix"], default="asn")
    p.add_argument("--percentile", type=float, default=0.95)
    p.add_argument("--min-presence", type=float, default=0.5)
    p.add_argument("--from", dest="period_from", required=True, metavar="DATE")
    p.add_argument("--to", dest="period_to", required=True, metavar="DATE")
    p.add_argument("--event-start", required=True, metavar="DATE")
    p.add_argument("--event2-start", metavar="DATE", help="Second event for the last delta")

    p = sub.add_parser("report", help="Merge artifacts into one summary JSON")
    p.add_argument("--artifacts", required=True, help="Directory of prior outputs")
    p.add_argument("--out", help="Summary path (default <artifacts>/summary.json)")

    p = sub.add_parser("serve", help="Run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8300)

    return parser


def _add_corpus_args(p: argparse.ArgumentParser, dates: bool = True) -> None:
    p.add_argument("--input", required=True, help="NDJSON records path")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--prefix-table", help="CSV table (default: bundled fixture)")
    p.add_argument("--country", default="IR")
    if dates:
        p.add_argument("--from", dest="date_from", metavar="DATE")
        p.add_argument("--to", dest="date_to", metavar="DATE")


def _build_request(args: argparse.Namespace) -> BaseModel:
    if args.command == "synth":
        return SynthRequest(scenario=args.scenario, seed=args.seed, out_dir=args.out)
    if args.command == "ingest":
        return IngestRequest(input_path=args.input, out_dir=args.out)
    if args.command == "analyze":
        return AnalyzeRequest(
            input_path=args.input,
            out_dir=args.out,
            prefix_table_path=args.prefix_table,
            country=args.country,
            group_by=args.group_by,
            utc_offset_minutes=args.utc_offset,
            date_from=args.date_from,
            date_to=args.date_to,
        )
    if args.command == "detect":
        return DetectRequest(
            input_path=args.input,
            out_dir=args.out,
            prefix_table_path=args.prefix_table,
            country=args.country,
            window_days=args.window,
            confidence=args.confidence,
            quantization_unit_kbps=args.quantize,
            min_event_days=args.min_event_days,
            merge_gap_days=args.merge_gap,
            variance_drop_threshold=args.variance_threshold,
            events_file=args.events_file,
            date_from=args.date_from,
            date_to=args.date_to,
        )
    if args.command == "cohort":
        return CohortRequest(
            input_path=args.input,
            out_dir=args.out,
            prefix_table_path=args.prefix_table,
            country=args.country,
            group_by=args.group_by,
            percentile=args.percentile,
            min_presence=args.min_presence,
            period_from=args.period_from,
            period_to=args.period_to,
            event_start=args.event_start,
            event2_start=args.event2_start,
        )
    if args.command == "report":
        return ReportRequest(artifacts_dir=args.artifacts, out_path=args.out)
    raise AssertionError(f"unhandled command {args.command}")


def _fail(code: str, detail: str) -> int:
    print(json.dumps({"error": code, "detail": detail}), file=sys.stderr)
    return 1


def _run_remote(server: str, path: str, request: BaseModel) -> int:
    url = server.rstrip("/") + path
    log.info("POST %s", url)
    response = httpx.post(url, json=request.model_dump(), timeout=600.0)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        return _fail(f"HTTP_{response.status_code}", json.dumps(detail))
    print(json.dumps(response.json(), indent=2, sort_keys=True))
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("THROTTLESCOPE_LOG", "warning").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 0

    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    try:
        request = _build_request(args)
    except ValueError as exc:  # pydantic validation
        return _fail("BAD_REQUEST", str(exc))

    path, handler = _ENDPOINTS[args.command]
    if args.server:
        return _run_remote(args.server, path, request)
    try:
        response = handler(request)
    except PipelineError as exc:
        return _fail(exc.code, exc.detail)
    print(response.model_dump_json(indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
