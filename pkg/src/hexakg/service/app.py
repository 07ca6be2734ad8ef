"""FastAPI application exposing the engine operations.

Engine errors map to HTTP statuses by category: usage 400, parse 422,
storage 500, busy 423.  The body always carries {category, message} so
clients (the CLI included) can pick exit codes without sniffing text.
"""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from ..errors import EngineError
from . import models, ops

_STATUS = {"usage": 400, "parse": 422, "storage": 500, "busy": 423}


class DbRequest(BaseModel):
    db: str


def create_app() -> FastAPI:
    app = FastAPI(title="hexakg", version="0.1.0")

    @app.exception_handler(EngineError)
    async def engine_error(_: Request, exc: EngineError):
        return JSONResponse(
            status_code=_STATUS.get(exc.category, 500),
            content=models.ErrorBody(
                category=exc.category, message=str(exc)
            ).model_dump(),
        )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/load", response_model=models.LoadResponse)
    def load(req: models.LoadRequest):
        return ops.do_load(req)

    @app.post("/query", response_model=models.QueryResponse)
    def query(req: models.QueryRequest):
        return ops.do_query(req)

    @app.post(
        "/probe",
        response_model=models.ProbeResponse,
        response_model_exclude_none=True,
    )
    def probe(req: models.ProbeRequest):
        return ops.do_probe(req)

    @app.post("/update", response_model=models.UpdateResponse)
    def update(req: models.UpdateRequest):
        return ops.do_update(req)

    @app.post("/merge", response_model=models.MergeResponse)
    def merge(req: DbRequest):
        return ops.do_merge(req.db)

    @app.get("/stats", response_model=models.StatsResponse)
    def stats(db: str):
        return ops.do_stats(db)

    return app


app = create_app()
