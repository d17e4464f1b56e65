"""FastAPI app wrapping the pipeline stages.

Run with:  uvicorn earkd.service.app:app
"""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..dataset.synth import SynthConfig
from ..errors import EarKDError, UsageError
from ..models import ModelConfig
from ..pipeline import run_evaluate, run_preprocess, run_report, run_synth, run_train
from ..training import TrainConfig
from . import schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="earkd",
        version=__version__,
        description="Cross-modal distillation pipeline for ear-EEG sleep staging",
    )

    @app.exception_handler(UsageError)
    async def usage_error(request: Request, exc: UsageError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(EarKDError)
    async def library_error(request: Request, exc: EarKDError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def missing_file(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(request: schemas.SynthRequest):
        params = request.config or schemas.SynthParams()
        config = SynthConfig(**params.model_dump())
        return run_synth(config, request.out_dir, request.seed)

    @app.post("/preprocess", response_model=schemas.PreprocessResponse)
    def preprocess(request: schemas.PreprocessRequest):
        return run_preprocess(request.in_dir, request.out_dir)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(request: schemas.TrainRequest):
        train_config = TrainConfig()
        if request.train is not None:
            train_config = TrainConfig(**request.train.model_dump())
        return run_train(
            strategy=request.strategy,
            arch=request.arch,
            data_dir=request.data_dir,
            fold=request.fold,
            out_dir=request.out_dir,
            seed=request.seed,
            train_config=train_config,
            model_config=ModelConfig(arch=request.arch, seed=request.seed),
            teacher_checkpoint=request.teacher_checkpoint,
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(request: schemas.EvaluateRequest):
        return run_evaluate(
            request.checkpoint, request.data_dir, request.fold,
            request.out_dir, embed_method=request.embed, embed_seed=request.seed,
        )

    @app.post("/report", response_model=schemas.ReportResponse)
    def report(request: schemas.ReportRequest):
        return run_report(list(request.run_dirs), request.out_path)

    return app


app = create_app()
