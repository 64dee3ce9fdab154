"""FastAPI application exposing the pipeline as a local analysis service.

Requests reference files on a filesystem shared with the server; each
endpoint is a thin wrapper over the matching handler.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from . import handlers
from .handlers import PipelineError
from .schemas import (
    AnalyzeRequest,
    AnalyzeResponse,
    CohortRequest,
    CohortResponse,
    DetectRequest,
    DetectResponse,
    ErrorBody,
    IngestRequest,
    IngestResponse,
    ReportRequest,
    ReportResponse,
    SynthRequest,
    SynthResponse,
)

_ERROR_RESPONSES = {
    400: {"model": ErrorBody},
    404: {"model": ErrorBody},
}


def create_app() -> FastAPI:
    app = FastAPI(
        title="throttlescope",
        version=__version__,
        description="Throttling detection over crowd-sourced TCP diagnostics",
    )

    def run(handler, req):
        try:
            return handler(req)
        except PipelineError as exc:
            raise HTTPException(
                status_code=exc.http_status,
                detail={"error": exc.code, "detail": exc.detail},
            ) from exc

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok", "version": __version__}

    @app.post("/v1/synth", response_model=SynthResponse, responses=_ERROR_RESPONSES)
    def synth(req: SynthRequest) -> SynthResponse:
        return run(handlers.handle_synth, req)

    @app.post("/v1/ingest", response_model=IngestResponse, responses=_ERROR_RESPONSES)
    def ingest(req: IngestRequest) -> IngestResponse:
        return run(handlers.handle_ingest, req)

    @app.post("/v1/analyze", response_model=AnalyzeResponse, responses=_ERROR_RESPONSES)
    def analyze(req: AnalyzeRequest) -> AnalyzeResponse:
        return run(handlers.handle_analyze, req)

    @app.post("/v1/detect", response_model=DetectResponse, responses=_ERROR_RESPONSES)
    def detect(req: DetectRequest) -> DetectResponse:
        return run(handlers.handle_detect, req)

    @app.post("/v1/cohort", response_model=CohortResponse, responses=_ERROR_RESPONSES)
    def cohort(req: CohortRequest) -> CohortResponse:
        return run(handlers.handle_cohort, req)

    @app.post("/v1/report", response_model=ReportResponse, responses=_ERROR_RESPONSES)
    def report(req: ReportRequest) -> ReportResponse:
        return run(handlers.handle_report, req)

    return app


app = create_app()
