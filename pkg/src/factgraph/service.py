"""HTTP chat-session API exposing the full per-turn pipeline.

Endpoints live under /v1. Sessions are in-memory; each one owns a dialogue
state, a pipeline configured at creation time, and a lock so turns within a
session never interleave.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from . import fixtures, kg
from .generation import GeneratorError
from .inference import GroundingError, QueryTooHardError
from .pipeline import MODES, Pipeline, PipelineConfig, default_rules_dir


class SessionCreate(BaseModel):
    mode: str = "relevance_logic"
    kb: dict | None = None
    seed: int | None = None


class TurnRequest(BaseModel):
    utterance: str


class Rating(BaseModel):
    statement: str
    score: int
    annotations: dict | None = None


@dataclass
class Session:
    id: str
    mode: str
    seed: int
    state: kg.DialogueState
    pipeline: Pipeline
    lock: threading.Lock = field(default_factory=threading.Lock)
    transcript: list[dict] = field(default_factory=list)
    ratings: list[dict] = field(default_factory=list)


def _env_config(mode: str, seed: int) -> PipelineConfig:
    return PipelineConfig(mode=mode, seed=seed,
                          k=int(os.environ.get("FACTGRAPH_K", "10")))


def _default_pipeline_factory(mode: str, seed: int) -> Pipeline:
    kwargs = {}
    rules_dir = os.environ.get("FACTGRAPH_RULES_DIR")
    generator_url = os.environ.get("FACTGRAPH_GENERATOR_URL")
    embedder_url = os.environ.get("FACTGRAPH_EMBEDDER_URL")
    if generator_url:
        from .generation import HttpGenerator
        kwargs["generator"] = HttpGenerator(generator_url)
    if embedder_url:
        from .relevance import ExternalEmbedder
        kwargs["embedder"] = ExternalEmbedder(embedder_url)
    return Pipeline.from_files(rules_dir=rules_dir or default_rules_dir(),
                               config=_env_config(mode, seed), **kwargs)


def create_app(pipeline_factory=None, ratings_path: str | Path | None = None,
               include_timing: bool = True) -> FastAPI:
    """Application factory; `pipeline_factory(mode, seed) -> Pipeline` lets
    tests inject mock clients."""
    factory = pipeline_factory or _default_pipeline_factory
    ratings_file = Path(ratings_path or os.environ.get(
        "FACTGRAPH_RATINGS_PATH", "ratings.jsonl"))
    app = FastAPI(title="factgraph", version="1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {session_id}")
        return session

    @app.get("/healthz", response_class=PlainTextResponse)
    @app.get("/v1/healthz", response_class=PlainTextResponse)
    def healthz() -> str:
        return "ok"

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: SessionCreate):
        if body.mode not in MODES:
            raise HTTPException(status_code=400,
                                detail=f"invalid mode {body.mode!r}; "
                                       f"expected one of {', '.join(MODES)}")
        seed = body.seed if body.seed is not None else secrets.randbelow(2 ** 31)
        if body.kb is not None:
            try:
                state, _doc = kg.load_dataset({"kb": body.kb.get("kb", body.kb),
                                               "now": body.kb.get("now", {})})
            except (KeyError, TypeError, ValueError) as exc:
                raise HTTPException(status_code=400,
                                    detail=f"invalid kb: {exc}") from exc
        else:
            state = fixtures.random_state(seed)
        session = Session(id=secrets.token_hex(16), mode=body.mode, seed=seed,
                          state=state, pipeline=factory(body.mode, seed))
        with registry_lock:
            sessions[session.id] = session
        return {"session_id": session.id, "mode": session.mode, "seed": seed}

    @app.post("/v1/sessions/{session_id}/turns")
    def post_turn(session_id: str, body: TurnRequest):
        session = get_session(session_id)
        if not body.utterance.strip():
            raise HTTPException(status_code=422, detail="empty utterance")
        with session.lock:
            try:
                result = session.pipeline.run_turn(session.state, body.utterance)
            except GeneratorError as exc:
                raise HTTPException(status_code=502, detail=str(exc)) from exc
            except (GroundingError, QueryTooHardError) as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            payload = result.payload(include_timing=include_timing)
            session.transcript.append({"utterance": body.utterance, **payload})
        return payload

    @app.get("/v1/sessions/{session_id}/state")
    def get_state(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return session.state.snapshot()

    @app.post("/v1/sessions/{session_id}/rating", status_code=201)
    def post_rating(session_id: str, body: Rating):
        session = get_session(session_id)
        if not 1 <= body.score <= 5:
            raise HTTPException(status_code=422,
                                detail="score must be between 1 and 5")
        record = {"session_id": session_id, "statement": body.statement,
                  "score": body.score}
        if body.annotations:
            record["annotations"] = body.annotations
        with session.lock:
            session.ratings.append(record)
            ratings_file.parent.mkdir(parents=True, exist_ok=True)
            with ratings_file.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
        return record

    @app.get("/v1/sessions/{session_id}/transcript")
    def get_transcript(session_id: str):
        session = get_session(session_id)
        with session.lock:
            doc = {"session_id": session.id, "mode": session.mode,
                   "seed": session.seed, "turns": list(session.transcript),
                   "ratings": list(session.ratings)}
        return JSONResponse(doc, headers={
            "Content-Disposition":
                f'attachment; filename="transcript-{session.id}.json"'})

    return app


def main() -> None:
    import uvicorn
    uvicorn.run(create_app(), host="127.0.0.1",
                port=int(os.environ.get("FACTGRAPH_PORT", "8040")))


if __name__ == "__main__":
    main()
