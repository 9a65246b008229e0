"""FastAPI application exposing the evaluation protocols."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import DataError, FormatError, NumericalError
from . import models, runner


def create_app() -> FastAPI:
    app = FastAPI(
        title="manifold-probe",
        version=__version__,
        description=(
            "Few-shot evaluation of frozen-backbone embeddings: episodic "
            "benchmarks, layer characterization, dimension sweeps, and "
            "logistic maturation fits."
        ),
    )

    @app.exception_handler(DataError)
    @app.exception_handler(FormatError)
    async def data_error(_: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content=models.ErrorPayload(code="data", message=str(exc)).model_dump(),
        )

    @app.exception_handler(NumericalError)
    async def numeric_error(_: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(
            status_code=500,
            content=models.ErrorPayload(code="numeric", message=str(exc)).model_dump(),
        )

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/v1/validate", response_model=models.ValidateResponse)
    def validate(request: models.ValidateRequest) -> models.ValidateResponse:
        return runner.run_validate(request)

    @app.post("/v1/fewshot", response_model=models.FewshotResponse)
    def fewshot(request: models.FewshotRequest) -> models.FewshotResponse:
        return runner.run_fewshot(request)

    @app.post("/v1/characterize", response_model=models.CharacterizeResponse)
    def characterize(request: models.CharacterizeRequest) -> models.CharacterizeResponse:
        return runner.run_characterize(request)

    @app.post("/v1/dim-sweep", response_model=models.DimSweepResponse)
    def dim_sweep(request: models.DimSweepRequest) -> models.DimSweepResponse:
        return runner.run_sweep(request)

    @app.post("/v1/fit-logistic", response_model=models.FitLogisticResponse)
    def fit_logistic(request: models.FitLogisticRequest) -> models.FitLogisticResponse:
        return runner.run_fit_logistic(request)

    @app.post("/v1/report", response_model=models.ReportResponse)
    def report(request: models.ReportRequest) -> models.ReportResponse:
        return runner.run_report(request)

    return app


app = create_app()
