"""FastAPI application exposing segment / inpaint / classify over the shared
wire protocol.

Status code policy (matches the protocol's reference mock server):
  400  schema violations — unparseable JSON, missing/mistyped fields,
       unknown part, out-of-range points, dimension clashes, oversize images
  422  well-formed requests whose base64/PNG payloads do not decode
  503  while models are loading
"""

from __future__ import annotations

from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import models
from .codecs import PayloadDecodeError, decode_image, decode_mask, encode_array, encode_mask
from .config import ServerConfig


class Point(BaseModel):
    x: int
    y: int
    positive: bool


class SegmentRequest(BaseModel):
    image: str
    part: str
    points: list[Point] = Field(default_factory=list)
    seed: int = 0


class InpaintRequest(BaseModel):
    image: str
    mask: str


class ClassifyRequest(BaseModel):
    image: str


def create_app(config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig()
    holder: dict = {"registry": None}

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        holder["registry"] = models.load_registry(config.models)
        yield
        holder["registry"] = None

    app = FastAPI(title="modelserver", lifespan=lifespan)

    @app.exception_handler(RequestValidationError)
    async def validation_as_400(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.exception_handler(PayloadDecodeError)
    async def undecodable_as_422(request: Request, exc: PayloadDecodeError):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    def registry() -> models.Registry:
        reg = holder["registry"]
        if reg is None:
            raise HTTPException(status_code=503, detail="models are loading")
        return reg

    def checked_image(payload: str):
        img = decode_image(payload)
        if max(img.shape[0], img.shape[1]) > config.max_image_side:
            raise HTTPException(
                status_code=400,
                detail=f"image side exceeds advertised maximum {config.max_image_side}",
            )
        return img

    @app.get("/healthz")
    def healthz():
        reg = holder["registry"]
        if reg is None:
            raise HTTPException(status_code=503, detail="models are loading")
        return {
            "status": "ok",
            "fingerprints": reg.fingerprints(),
            "max_image_side": config.max_image_side,
        }

    @app.post("/v1/segment")
    def segment(req: SegmentRequest):
        reg = registry()
        img = checked_image(req.image)
        if req.part not in models.PARTS:
            raise HTTPException(status_code=400, detail=f"unknown part {req.part!r}")
        h, w = img.shape[:2]
        for p in req.points:
            if not (0 <= p.x < w and 0 <= p.y < h):
                raise HTTPException(status_code=400, detail=f"point ({p.x}, {p.y}) outside image")
        if not any(p.positive for p in req.points):
            raise HTTPException(status_code=400, detail="need at least one positive point")
        points = [p.model_dump() for p in req.points]
        mask = reg.segment.segment(img, req.part, points, req.seed)
        return {"mask": encode_mask(mask), "model": reg.segment.fingerprint}

    @app.post("/v1/inpaint")
    def inpaint(req: InpaintRequest):
        reg = registry()
        img = checked_image(req.image)
        mask = decode_mask(req.mask)
        if mask.shape != img.shape[:2]:
            raise HTTPException(status_code=400, detail="mask dimensions must match image")
        out = reg.inpaint.inpaint(img, mask)
        return {"image": encode_array(out), "model": reg.inpaint.fingerprint}

    @app.post("/v1/classify")
    def classify(req: ClassifyRequest):
        reg = registry()
        img = checked_image(req.image)
        label, scores = reg.classify.classify(img)
        return {"label": label, "scores": scores, "model": reg.classify.fingerprint}

    return app
