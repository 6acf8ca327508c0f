"""HTTP surface of the inference API.

Routes:
    POST /inferences            multipart: model_name, model_version?, file
    GET  /inferences/{id}
    GET  /inferences?status=&model=

202 accepted, 404 unknown, 415 undecodable audio, 422 invalid fields.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.responses import JSONResponse

from .. import audio
from .core import InferenceCore, UnknownRequest
from .records import LATEST


def create_app(core: InferenceCore) -> FastAPI:
    app = FastAPI(title="inference-service")

    @app.exception_handler(audio.AudioError)
    async def _audio(request: Request, exc: audio.AudioError):
        return JSONResponse(
            status_code=415,
            content={"detail": str(exc), "error": type(exc).__name__},
        )

    @app.exception_handler(UnknownRequest)
    async def _unknown(request: Request, exc: UnknownRequest):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.post("/inferences", status_code=202)
    async def submit(
        model_name: str = Form(...),
        model_version: Optional[str] = Form(default=None),
        file: UploadFile = File(...),
    ):
        if model_version is None or model_version == LATEST:
            version = None
        elif model_version.isdigit():
            version = int(model_version)
        else:
            return JSONResponse(
                status_code=422,
                content={"detail": f"model_version must be an integer or {LATEST!r}"},
            )
        try:
            request_id = core.submit(model_name, version, await file.read())
        except ValueError as exc:  # unroutable model name
            return JSONResponse(status_code=422, content={"detail": str(exc)})
        return {"request_id": request_id}

    @app.get("/inferences/{request_id}")
    def get_inference(request_id: str):
        return core.get(request_id).to_api_json()

    @app.get("/inferences")
    def list_inferences(status: Optional[str] = None, model: Optional[str] = None):
        return [r.to_api_json() for r in core.list(status=status, model=model)]

    return app
