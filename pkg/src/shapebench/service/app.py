"""FastAPI application wrapping the pipeline.

Domain errors map onto a uniform envelope, {"error": {"kind", "message"}}:
usage and data problems are 400s (kind "usage" / "data"), violated internal
invariants are 500s (kind "internal"). The CLI turns kinds into exit codes.
"""

from __future__ import annotations

import base64
import binascii
import math
import os

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import __version__, MODEL_CONTAINER_VERSION, VXBG_FORMAT_VERSION
from .. import metrics, pipeline, stats
from ..errors import DataError, InvariantError, UsageError
from ..voxel import VoxelGrid
from . import schemas


def _error_response(status: int, kind: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"kind": kind, "message": message}})


def _cfg(body: schemas.ConfigBody) -> pipeline.RunConfig:
    return pipeline.RunConfig().merged(body.overrides())


def create_app() -> FastAPI:
    app = FastAPI(title="shapebench", version=__version__)

    @app.exception_handler(UsageError)
    async def _usage(request: Request, exc: UsageError):
        return _error_response(400, "usage", str(exc))

    @app.exception_handler(DataError)
    async def _data(request: Request, exc: DataError):
        return _error_response(400, "data", str(exc))

    @app.exception_handler(InvariantError)
    async def _internal(request: Request, exc: InvariantError):
        return _error_response(500, "internal", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _validation(request: Request, exc: RequestValidationError):
        return _error_response(400, "usage", str(exc))

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok")

    @app.get("/version", response_model=schemas.VersionResponse)
    def version():
        return schemas.VersionResponse(package=__version__,
                                       vxbg_format=VXBG_FORMAT_VERSION,
                                       model_container=MODEL_CONTAINER_VERSION)

    @app.post("/dataset/gen", response_model=schemas.GenResponse)
    def dataset_gen(body: schemas.ConfigBody):
        cfg = _cfg(body)
        manifest = pipeline.run_gen(cfg)
        return schemas.GenResponse(shapes=len(manifest.entries),
                                   classes=list(manifest.classes),
                                   manifest_path=pipeline.manifest_path(cfg))

    @app.post("/dataset/split", response_model=schemas.SplitResponse)
    def dataset_split(body: schemas.ConfigBody):
        cfg = _cfg(body)
        split = pipeline.run_split(cfg)
        return schemas.SplitResponse(train=len(split.train), val=len(split.val),
                                     test=len(split.test),
                                     split_path=pipeline.split_path(cfg))

    @app.post("/dataset/materialize", response_model=schemas.MaterializeResponse)
    def dataset_materialize(body: schemas.ConfigBody):
        cfg = _cfg(body)
        section = pipeline.run_materialize(cfg)
        return schemas.MaterializeResponse(grids=len(section["grids"]),
                                           resolution=section["resolution"],
                                           frame=section["frame"],
                                           poses_per_shape=section["poses_per_shape"])

    @app.post("/fit/cluster", response_model=schemas.FitResponse)
    def fit_cluster(body: schemas.ConfigBody):
        return schemas.FitResponse(kind="cluster",
                                   model_path=pipeline.run_fit_cluster(_cfg(body)))

    @app.post("/fit/retrieval", response_model=schemas.FitResponse)
    def fit_retrieval(body: schemas.ConfigBody):
        return schemas.FitResponse(kind="retrieval",
                                   model_path=pipeline.run_fit_retrieval(_cfg(body)))

    @app.post("/predict", response_model=schemas.PredictResponse)
    def predict(body: schemas.PredictRequest):
        methods = tuple(body.methods) if body.methods else pipeline.METHODS
        cfg = _cfg(body)
        return schemas.PredictResponse(written=pipeline.run_predict(cfg, methods))

    @app.post("/eval", response_model=schemas.EvalResponse)
    def evaluate(body: schemas.EvalRequest):
        methods = tuple(body.methods) if body.methods else pipeline.METHODS
        cfg = _cfg(body)
        report = pipeline.evaluate_run(cfg, methods)
        files = pipeline.emit_reports(report, os.path.join(cfg.out_dir, "reports"),
                                      metric=body.report_metric, bins=cfg.bins,
                                      alpha=cfg.alpha)
        return schemas.EvalResponse(entries=len(report.entries),
                                    skips=len(report.skips),
                                    report_path=pipeline.report_path(cfg),
                                    files=files)

    @app.post("/stats/ks", response_model=schemas.KSResponse)
    def stats_ks(body: schemas.KSRequest):
        cfg = _cfg(body)
        heatmap = pipeline.run_stats_ks(cfg, body.metric, body.binned)
        return schemas.KSResponse(methods=list(heatmap.methods),
                                  classes=list(heatmap.classes),
                                  counts=[[int(c) for c in row] for row in heatmap.counts],
                                  alpha=cfg.alpha)

    @app.post("/stats/sweep", response_model=schemas.SweepResponse)
    def stats_sweep(body: schemas.ConfigBody):
        rows = pipeline.run_stats_sweep(_cfg(body))
        return schemas.SweepResponse(rows=[schemas.SweepRow(**r) for r in rows])

    @app.post("/stats/corr", response_model=schemas.CorrResponse)
    def stats_corr(body: schemas.CorrRequest):
        cfg = _cfg(body)
        corr = pipeline.run_stats_corr(cfg, body.metric)
        safe = {m: (None if math.isnan(v) else v) for m, v in corr.items()}
        return schemas.CorrResponse(correlations=safe)

    @app.post("/stats/cutoff", response_model=schemas.CutoffResponse)
    def stats_cutoff(body: schemas.ConfigBody):
        rows = pipeline.run_stats_cutoff(_cfg(body))
        return schemas.CutoffResponse(rows=[schemas.CutoffRow(**r) for r in rows])

    @app.post("/viz/pr", response_model=schemas.VizResponse)
    def viz_pr(body: schemas.VizRequest):
        cfg = _cfg(body)
        files = pipeline.run_viz_pr(cfg, body.method, body.key, body.prefix)
        return schemas.VizResponse(files=files)

    @app.post("/metrics/iou", response_model=schemas.IoUResponse)
    def metrics_iou(body: schemas.IoURequest):
        def decode(blob, name):
            try:
                return VoxelGrid.from_bytes(base64.b64decode(blob, validate=True))
            except (binascii.Error, ValueError) as exc:
                raise DataError(f"grid {name!r} is not valid base64 VXBG: {exc}") from exc
        return schemas.IoUResponse(iou=metrics.iou(decode(body.a, "a"), decode(body.b, "b")))

    @app.post("/stats/ks_samples", response_model=schemas.KSSamplesResponse)
    def ks_samples(body: schemas.KSSamplesRequest):
        kwargs = {"binned": body.binned, "bins": body.bins}
        if body.value_range is not None:
            kwargs["value_range"] = tuple(body.value_range)
        result = stats.ks_two_sample(body.x, body.y, **kwargs)
        return schemas.KSSamplesResponse(d_stat=result.d_stat, p_value=result.p_value,
                                         n1=result.n1, n2=result.n2, binned=result.binned)

    return app

