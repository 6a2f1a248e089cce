"""FastAPI wiring: one POST endpoint per pipeline stage plus a health check.

Validation failures (bad data, bad parameters) map to 422; runtime
failures inside the pipeline map to 500 with the failing error class
named so clients can distinguish usage errors from genuine faults.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import DataError, DomainError, SfkrigError
from . import ops
from . import schemas as S


def create_app() -> FastAPI:
    app = FastAPI(title="sfkrig", version=ops.__version__)

    @app.exception_handler(SfkrigError)
    async def _sfkrig_error(request: Request, exc: SfkrigError):
        status = 422 if isinstance(exc, (DataError, DomainError)) else 500
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__,
                                     "detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=422,
                            content={"error": "ValueError",
                                     "detail": str(exc)})

    @app.get("/health", response_model=S.HealthResponse)
    def health():
        return ops.health_op()

    @app.post("/simulate", response_model=S.SimulateResponse)
    def simulate(req: S.SimulateRequest):
        return ops.simulate_op(req)

    @app.post("/smooth", response_model=S.SmoothResponse)
    def smooth(req: S.SmoothRequest):
        return ops.smooth_op(req)

    @app.post("/variogram", response_model=S.VariogramResponse)
    def variogram(req: S.VariogramRequest):
        return ops.variogram_op(req)

    @app.post("/krige", response_model=S.KrigeResponse)
    def krige(req: S.KrigeRequest):
        return ops.krige_op(req)

    @app.post("/cv-select", response_model=S.CvSelectResponse)
    def cv_select(req: S.CvSelectRequest):
        return ops.cv_select_op(req)

    @app.post("/experiment", response_model=S.ExperimentResponse)
    def experiment(req: S.ExperimentRequest):
        return ops.experiment_op(req)

    @app.post("/report", response_model=S.ReportResponse)
    def report(req: S.ReportRequest):
        return ops.report_op(req)

    return app
