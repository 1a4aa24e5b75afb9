"""HTTP service for interactive surrogate-vs-reference dose comparison.

Read-only and stateless per request: models and the nuclide database load at
startup and are never mutated, so any number of concurrent requests may share
them. The reference path calls the adaptive-quadrature dose kernel live and
returns exactly what a direct dose_rate call with the same inputs returns.
Schema violations map to 400, unknown nuclides to 404, and a request naming
a model that is not loaded to 503; scenarios outside the trained bounds are
flagged as extrapolation, never rejected.
"""

from __future__ import annotations

import time
from typing import Literal, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator

from .dispersion import ReleaseSpec, StabilityClass
from .kernel import KernelConfig, Receptor, dose_rate
from .nuclides import NuclideDB, normalize_name
from .trees import predict_dose

__all__ = ["create_app", "PredictRequest", "PredictResponse", "ProfileRequest", "ProfileResponse"]

MODEL_NAMES = ("forest", "boosted")


class PredictRequest(BaseModel):
    radionuclide: str
    stability: Literal["A", "B", "C", "D", "E", "F"]
    release_height_m: float = Field(ge=0.0, le=500.0)
    distance_m: float = Field(gt=0.0)
    models: list[Literal["forest", "boosted"]] = ["forest", "boosted"]
    include_reference: bool = False

    @field_validator("models")
    @classmethod
    def non_empty_models(cls, v):
        if not v:
            raise ValueError("at least one model must be requested")
        return v


class ModelPrediction(BaseModel):
    dose_uSv_per_hr: float
    deviation_from_reference_percent: Optional[float] = None
    elapsed_ms: float
    extrapolation: bool


class ReferenceResult(BaseModel):
    dose_uSv_per_hr: float
    elapsed_ms: float


class PredictResponse(BaseModel):
    radionuclide: str
    stability: str
    release_height_m: float
    distance_m: float
    predictions: dict[str, ModelPrediction]
    reference: Optional[ReferenceResult] = None


class ProfileRequest(BaseModel):
    radionuclide: str
    stability: Literal["A", "B", "C", "D", "E", "F"]
    release_height_m: float = Field(ge=0.0, le=500.0)
    distances_m: list[float]
    models: list[Literal["forest", "boosted"]] = ["forest", "boosted"]
    include_reference: bool = True

    @field_validator("distances_m")
    @classmethod
    def ascending_distances(cls, v):
        if not v:
            raise ValueError("distances_m must be non-empty")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("distances_m must be strictly ascending")
        if any(d <= 0 for d in v):
            raise ValueError("distances_m must be positive")
        return v


class ProfileResponse(BaseModel):
    radionuclide: str
    stability: str
    release_height_m: float
    distances_m: list[float]
    curves: dict[str, list[float]]
    reference: Optional[list[float]] = None
    extrapolation: list[bool]
    elapsed_ms: dict[str, float]


class _NotFound(Exception):
    def __init__(self, message: str):
        self.message = message


class _NotLoaded(Exception):
    def __init__(self, message: str):
        self.message = message


def create_app(
    db: NuclideDB,
    models: dict,
    kernel_cfg: KernelConfig | None = None,
    ui_dir: str | None = None,
) -> FastAPI:
    """Build the service over an immutable database and trained models.

    models maps "forest"/"boosted" to loaded tree models; either may be
    absent (requests naming it get 503). ui_dir, when given, is served as
    static files under /ui (the browser console's build output).
    """
    cfg = kernel_cfg or KernelConfig()
    app = FastAPI(title="plume-shine dose service", version="1")
    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.exception_handler(RequestValidationError)
    async def validation_as_400(request: Request, exc: RequestValidationError):
        detail = [
            f"{'.'.join(str(part) for part in err.get('loc', ()))}: {err.get('msg', '')}"
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"error": "validation", "detail": detail})

    @app.exception_handler(_NotFound)
    async def not_found(request: Request, exc: _NotFound):
        return JSONResponse(status_code=404, content={"error": "not_found", "detail": exc.message})

    @app.exception_handler(_NotLoaded)
    async def not_loaded(request: Request, exc: _NotLoaded):
        return JSONResponse(status_code=503, content={"error": "model_not_loaded", "detail": exc.message})

    def resolve_nuclide(name: str) -> str:
        try:
            canon = normalize_name(name)
        except ValueError:
            raise _NotFound(f"unrecognized nuclide name {name!r}")
        if canon not in db.nuclides:
            raise _NotFound(f"nuclide {canon!r} not in database")
        return canon

    def resolve_model(name: str):
        model = models.get(name)
        if model is None:
            raise _NotLoaded(f"model {name!r} is not loaded")
        return model

    def is_extrapolation(model, height: float, distance: float) -> bool:
        p = model.preprocessor
        return not (
            p.height_min <= height <= p.height_max
            and p.distance_min <= distance <= p.distance_max
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "models": sorted(models)}

    @app.get("/nuclides")
    def nuclides():
        return {"nuclides": db.names()}

    @app.get("/stability-classes")
    def stability_classes():
        return {"classes": [c.value for c in StabilityClass]}

    @app.post("/predict", response_model=PredictResponse)
    def predict(req: PredictRequest) -> PredictResponse:
        canon = resolve_nuclide(req.radionuclide)
        reference = None
        ref_dose = None
        if req.include_reference:
            t0 = time.perf_counter()
            ref_dose = dose_rate(
                db, db.get(canon),
                ReleaseSpec(Q=1.0, U=1.0, H=req.release_height_m,
                            stability=StabilityClass(req.stability)),
                Receptor(x1=req.distance_m), cfg,
            )
            reference = ReferenceResult(
                dose_uSv_per_hr=ref_dose,
                elapsed_ms=(time.perf_counter() - t0) * 1e3,
            )
        predictions: dict[str, ModelPrediction] = {}
        for name in req.models:
            model = resolve_model(name)
            t0 = time.perf_counter()
            dose = float(predict_dose(
                model, [canon], [req.stability], [req.release_height_m], [req.distance_m],
            )[0])
            elapsed = (time.perf_counter() - t0) * 1e3
            deviation = None
            if ref_dose is not None:
                deviation = 100.0 * (dose - ref_dose) / ref_dose
            predictions[name] = ModelPrediction(
                dose_uSv_per_hr=dose,
                deviation_from_reference_percent=deviation,
                elapsed_ms=elapsed,
                extrapolation=is_extrapolation(model, req.release_height_m, req.distance_m),
            )
        return PredictResponse(
            radionuclide=canon, stability=req.stability,
            release_height_m=req.release_height_m, distance_m=req.distance_m,
            predictions=predictions, reference=reference,
        )

    @app.post("/profile", response_model=ProfileResponse)
    def profile(req: ProfileRequest) -> ProfileResponse:
        canon = resolve_nuclide(req.radionuclide)
        elapsed: dict[str, float] = {}
        curves: dict[str, list[float]] = {}
        for name in req.models:
            model = resolve_model(name)
            t0 = time.perf_counter()
            doses = predict_dose(
                model,
                [canon] * len(req.distances_m),
                [req.stability] * len(req.distances_m),
                [req.release_height_m] * len(req.distances_m),
                req.distances_m,
            )
            elapsed[name] = (time.perf_counter() - t0) * 1e3
            curves[name] = [float(v) for v in doses]
        reference = None
        if req.include_reference:
            t0 = time.perf_counter()
            release = ReleaseSpec(Q=1.0, U=1.0, H=req.release_height_m,
                                  stability=StabilityClass(req.stability))
            reference = [
                dose_rate(db, db.get(canon), release, Receptor(x1=d), cfg)
                for d in req.distances_m
            ]
            elapsed["reference"] = (time.perf_counter() - t0) * 1e3
        first_model = models.get(req.models[0])
        extrapolation = [
            is_extrapolation(first_model, req.release_height_m, d) if first_model else False
            for d in req.distances_m
        ]
        return ProfileResponse(
            radionuclide=canon, stability=req.stability,
            release_height_m=req.release_height_m,
            distances_m=[float(d) for d in req.distances_m],
            curves=curves, reference=reference,
            extrapolation=extrapolation, elapsed_ms=elapsed,
        )

    return app
