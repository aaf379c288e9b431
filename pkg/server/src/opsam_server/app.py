"""FastAPI application implementing protocol 1.

Request schema violations come back as 400 (malformed), a well-formed
request for an embedding kind the encoder does not produce as 422, and
a segment call for a session the server has never seen as 404. One lock
serializes model calls; the HTTP layer queues behind it.
"""
from __future__ import annotations

import logging
import threading
from collections import OrderedDict

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .models import EncoderModel, SegmenterModel, ServerConfig, load_models
from .protocol import (
    PROTOCOL_VERSION,
    CapabilitiesResponse,
    EchoRequest,
    EncodeRequest,
    SegmentRequest,
    SegmentResponse,
    b64_to_image,
    floats_to_b64,
    mask_to_b64,
)

log = logging.getLogger("opsam_server")

# sessions kept in memory; oldest dropped beyond this
SESSION_CAPACITY = 32


def create_app(
    config: ServerConfig = ServerConfig(),
    encoder: EncoderModel | None = None,
    segmenter: SegmenterModel | None = None,
) -> FastAPI:
    """Build the application; pass model objects to skip loading by id."""
    if encoder is None or segmenter is None:
        loaded_enc, loaded_seg = load_models(config)
        encoder = encoder or loaded_enc
        segmenter = segmenter or loaded_seg

    app = FastAPI(title="opsam model server", version="0.1.0")
    sessions: OrderedDict[str, np.ndarray] = OrderedDict()
    model_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc.errors())})

    @app.get("/v1/capabilities")
    def capabilities() -> CapabilitiesResponse:
        return CapabilitiesResponse(
            patch=encoder.patch,
            input_size=encoder.input_size,
            d=encoder.dim,
            kinds=list(encoder.kinds),
            segmenter_input=segmenter.input_size,
            encoder_model=encoder.name,
            segmenter_model=segmenter.name,
            value_embedding=encoder.value_embedding,
        )

    @app.post("/v1/encode")
    def encode(req: EncodeRequest) -> dict:
        unsupported = [k for k in req.embedding_kinds if k not in encoder.kinds]
        if unsupported:
            raise HTTPException(
                status_code=422, detail=f"unsupported embedding kinds {unsupported}"
            )
        try:
            image = b64_to_image(req.image_png_b64)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        size = encoder.input_size
        if image.shape[:2] != (size, size):
            raise HTTPException(
                status_code=400,
                detail=f"image must arrive letterboxed to {size}x{size}, "
                f"got {image.shape[1]}x{image.shape[0]}",
            )
        with model_lock:
            embeddings = encoder.embed(image, req.embedding_kinds)
        side = size // encoder.patch
        body: dict = {"protocol": PROTOCOL_VERSION, "h": side, "w": side, "d": encoder.dim}
        for kind, values in embeddings.items():
            body[f"{kind}_f32le_b64"] = floats_to_b64(values)
        return body

    @app.post("/v1/segment")
    def segment(req: SegmentRequest) -> SegmentResponse:
        size = segmenter.input_size
        if req.image_png_b64 is not None:
            try:
                image = b64_to_image(req.image_png_b64)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
            if image.shape[:2] != (size, size):
                raise HTTPException(
                    status_code=400,
                    detail=f"image must arrive letterboxed to {size}x{size}, "
                    f"got {image.shape[1]}x{image.shape[0]}",
                )
            sessions[req.session_id] = image
            sessions.move_to_end(req.session_id)
            while len(sessions) > SESSION_CAPACITY:
                sessions.popitem(last=False)
        elif req.session_id in sessions:
            image = sessions[req.session_id]
            sessions.move_to_end(req.session_id)
        else:
            raise HTTPException(
                status_code=404, detail=f"unknown session {req.session_id!r}"
            )
        if not any(p.label == 1 for p in req.prompts):
            raise HTTPException(
                status_code=400, detail="prompts need at least one positive point"
            )
        outside = [p for p in req.prompts if p.x >= size or p.y >= size]
        if outside:
            raise HTTPException(
                status_code=400,
                detail=f"prompt ({outside[0].x}, {outside[0].y}) lies outside "
                f"the {size}x{size} frame",
            )
        points = [(p.x, p.y) for p in req.prompts]
        labels = [p.label for p in req.prompts]
        with model_lock:
            mask, iou, chosen = segmenter.predict(image, points, labels)
        log.info(
            "session %s: %d prompts -> candidate %d, predicted iou %.3f",
            req.session_id, len(points), chosen, iou,
        )
        return SegmentResponse(
            mask_png_b64=mask_to_b64(mask),
            predicted_iou=float(iou),
            chosen_candidate=chosen,
        )

    @app.post("/v1/echo")
    def echo(req: EchoRequest) -> dict:
        return {"protocol": PROTOCOL_VERSION, "payload_b64": req.payload_b64}

    return app
