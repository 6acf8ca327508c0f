"""HTTP/JSON surface of the collection service.

Routes:
    POST /collections                       create (idempotent)
    PUT  /collections/{id}/audios/{step}    body: WAV bytes
    GET  /collections/{id}
    GET  /collections?state=&hospital=

Statuses: 200/201 success, 400 validation, 404 unknown, 409 conflict,
415 unsupported codec.
"""

from __future__ import annotations

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .. import audio
from .store import (
    CollectionRecord,
    CollectionStore,
    ConflictingResubmission,
    DurationOutOfBounds,
    StepConflict,
    UnknownCollection,
    ValidationError,
)


class CreateCollectionBody(BaseModel):
    collection_id: str
    participant_ref: str
    collector_id: str = ""
    hospital_code: str = ""
    info: dict[str, str] = Field(default_factory=dict)


def record_json(record: CollectionRecord) -> dict:
    return {
        "collection_id": record.collection_id,
        "participant_ref": record.participant_ref,
        "collector_id": record.collector_id,
        "hospital_code": record.hospital_code,
        "created_at": record.created_at,
        "info": record.info,
        "sync_state": record.sync_state,
        "audios": {
            step.value: {
                "content_hash": ref.content_hash,
                "file_path": ref.file_path,
                "duration": ref.duration,
                "sample_rate": ref.sample_rate,
            }
            for step, ref in record.audios.items()
        },
    }


def create_app(store: CollectionStore) -> FastAPI:
    app = FastAPI(title="collection-service")

    @app.exception_handler(ValidationError)
    async def _validation(request: Request, exc: ValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(DurationOutOfBounds)
    async def _duration(request: Request, exc: DurationOutOfBounds):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(UnknownCollection)
    async def _unknown(request: Request, exc: UnknownCollection):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(ConflictingResubmission)
    async def _conflict(request: Request, exc: ConflictingResubmission):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(StepConflict)
    async def _step_conflict(request: Request, exc: StepConflict):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(audio.AudioError)
    async def _audio(request: Request, exc: audio.AudioError):
        # lossy/undecodable uploads are a media-type problem, not a bad request
        if isinstance(exc, (audio.UnsupportedCodec, audio.NotWav, audio.UnsupportedDepth)):
            status = 415
        else:
            status = 400
        return JSONResponse(
            status_code=status,
            content={"detail": str(exc), "error": type(exc).__name__},
        )

    @app.post("/collections")
    def create_collection(body: CreateCollectionBody, response: Response):
        record, created = store.create_collection(
            collection_id=body.collection_id,
            participant_ref=body.participant_ref,
            collector_id=body.collector_id,
            hospital_code=body.hospital_code,
            info=body.info,
        )
        response.status_code = 201 if created else 200
        return record_json(record)

    @app.put("/collections/{collection_id}/audios/{step}")
    async def upload_audio(collection_id: str, step: str, request: Request):
        wav_bytes = await request.body()
        ref, record = store.upload_audio(collection_id, step, wav_bytes)
        return {
            "step": ref.step.value,
            "content_hash": ref.content_hash,
            "file_path": ref.file_path,
            "duration": ref.duration,
            "sample_rate": ref.sample_rate,
            "sync_state": record.sync_state,
        }

    @app.get("/collections/{collection_id}")
    def get_collection(collection_id: str):
        return record_json(store.get_collection(collection_id))

    @app.get("/collections")
    def list_collections(state: str | None = None, hospital: str | None = None):
        records = store.list_collections(hospital_code=hospital, state=state)
        return [
            {
                "collection_id": r.collection_id,
                "hospital_code": r.hospital_code,
                "created_at": r.created_at,
                "sync_state": r.sync_state,
                "steps_present": sorted(s.value for s in r.audios),
            }
            for r in records
        ]

    return app
