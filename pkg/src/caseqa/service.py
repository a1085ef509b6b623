"""HTTP facade over the pipeline and the case memory.

The service exists for the inject-and-retry loop: ask a question, inspect the
retrieved cases and the generated form, add a fixing case, ask again.  The
pipeline components are immutable while serving; the case memory is the only
writable state, guarded by a readers-writer lock so queries share it and
injections take it exclusively.

Endpoints (all JSON):

    POST   /query                      answer a question, full pipeline trace
    POST   /cases                      inject one case -> {id}
    DELETE /cases/{id}                 remove a case -> {removed}
    GET    /cases                      list cases, or nearest to ?query=
    GET    /kb/neighborhood/{entity}   incident edges, ?direction=out|in|both
    POST   /lf/validate                parse check -> {ok} or {ok, error}
    GET    /meta                       versions, counts, config

Errors use one envelope: {"code", "message", "detail"}; 400 for malformed
JSON bodies, 404 for unknown ids, 409 when a write lock cannot be taken,
422 for invalid logical forms or bad fields.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .kb import EntityId, Literal
from .linker import Mention, link
from .logical_form import LFSyntaxError, format_lf, parse
from .memory import UnknownCaseId
from .pipeline import REVISE_MODES, PipelineComponents, PipelineFlags, answer
from .retriever import retrieve

WRITE_TIMEOUT_SECONDS = 10.0


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: Optional[dict] = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail or {}

    def response(self) -> JSONResponse:
        return JSONResponse(
            status_code=self.status,
            content={"code": self.code, "message": self.message, "detail": self.detail},
        )


class RWLock:
    """Readers share, writers exclude; writers wait for active readers."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if self._readers == 0:
                    self._cond.notify_all()

    @contextmanager
    def write(self, timeout: float):
        with self._cond:
            ok = self._cond.wait_for(
                lambda: not self._writer and self._readers == 0, timeout=timeout
            )
            if not ok:
                raise ApiError(409, "write_conflict", "another write is holding the memory lock")
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


class QueryBody(BaseModel):
    question: str
    k: Optional[int] = None
    revise: Optional[str] = None


class MentionBody(BaseModel):
    span: tuple[int, int]
    entity: str
    surface: str = ""


class CaseBody(BaseModel):
    question: str
    sparql: str
    mentions: Optional[list[MentionBody]] = None
    author: Optional[str] = None


class ValidateBody(BaseModel):
    sparql: str


def _term_json(term) -> dict:
    if isinstance(term, EntityId):
        return {"kind": "entity", "value": term.name}
    assert isinstance(term, Literal)
    return {"kind": term.kind, "value": term.value}


def create_app(
    components: PipelineComponents, default_flags: PipelineFlags = PipelineFlags()
) -> FastAPI:
    app = FastAPI(title="caseqa", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    lock = RWLock()
    counters: dict[str, int] = {}
    versions = {
        "encoder": components.encoder.version(),
        "world": components.kb.content_hash(),
        "transe": components.transe.version() if components.transe is not None else None,
    }

    @app.middleware("http")
    async def stamp_versions(request: Request, call_next):
        route = f"{request.method} {request.url.path}"
        counters[route] = counters.get(route, 0) + 1
        response = await call_next(request)
        response.headers["x-encoder-version"] = versions["encoder"]
        response.headers["x-world-version"] = versions["world"]
        return response

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return exc.response()

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        # a body that is not JSON at all is a 400; a JSON body with bad
        # fields is a 422
        if any(e.get("type") == "json_invalid" for e in exc.errors()):
            return ApiError(400, "bad_json", "request body is not valid JSON").response()
        return ApiError(
            422, "invalid_request", "request body failed validation",
            {"errors": [{"loc": list(map(str, e["loc"])), "msg": e["msg"]} for e in exc.errors()]},
        ).response()

    def flags_for(body: QueryBody) -> PipelineFlags:
        k = body.k if body.k is not None else default_flags.k
        revise = body.revise if body.revise is not None else default_flags.revise
        if revise not in REVISE_MODES:
            raise ApiError(422, "invalid_request", f"revise must be one of {REVISE_MODES}")
        if revise == "transe" and components.transe is None:
            raise ApiError(
                422, "invalid_request",
                "revise mode 'transe' is unavailable: no embeddings loaded",
            )
        if k < 0:
            raise ApiError(422, "invalid_request", "k must be >= 0")
        return PipelineFlags(k=k, revise=revise, revise_beam=default_flags.revise_beam)

    @app.post("/query")
    def post_query(body: QueryBody) -> dict:
        flags = flags_for(body)
        with lock.read():
            result = answer(body.question, components, flags)
        out = result.to_json()
        out["flags"] = {"k": flags.k, "revise": flags.revise, "beam": flags.revise_beam}
        return out

    @app.post("/cases")
    def post_case(body: CaseBody) -> dict:
        try:
            parse(body.sparql)
        except LFSyntaxError as exc:
            raise ApiError(422, "invalid_lf", str(exc))
        if body.mentions is None:
            mentions = link(body.question, components.aliases)
        else:
            mentions = [
                Mention(m.span[0], m.span[1], m.surface, EntityId(m.entity))
                for m in body.mentions
            ]
        with lock.write(WRITE_TIMEOUT_SECONDS):
            case = components.memory.inject(
                body.question, body.sparql, components.encoder,
                mentions=mentions, author=body.author, kb=components.kb,
            )
        return {"id": case.id}

    @app.delete("/cases/{case_id}")
    def delete_case(case_id: str) -> dict:
        with lock.write(WRITE_TIMEOUT_SECONDS):
            try:
                components.memory.remove(case_id)
            except UnknownCaseId:
                raise ApiError(404, "unknown_case", f"no case with id {case_id!r}")
        return {"removed": case_id}

    @app.get("/cases")
    def get_cases(query: Optional[str] = None, k: int = 5) -> dict:
        if k < 0:
            raise ApiError(422, "invalid_request", "k must be >= 0")
        with lock.read():
            if query is None:
                cases = [c.to_json() for c in components.memory.cases()]
                return {"cases": cases, "count": len(cases)}
            mentions = link(query, components.aliases)
            ranked = retrieve(components.encoder, components.memory, query, mentions, k=k)
        out = []
        for case, sim in ranked:
            item = case.to_json()
            item["similarity"] = round(sim, 6)
            out.append(item)
        return {"cases": out, "count": len(out)}

    @app.get("/kb/neighborhood/{entity}")
    def get_neighborhood(entity: str, direction: str = "both") -> dict:
        if direction not in ("out", "in", "both"):
            raise ApiError(422, "invalid_request", "direction must be out, in, or both")
        eid = EntityId(entity)
        if eid not in components.kb.entity_vocab:
            raise ApiError(404, "unknown_entity", f"no entity named {entity!r}")
        edges = []
        if direction in ("out", "both"):
            for rel, obj in components.kb.out_edges(eid):
                edges.append({"direction": "out", "relation": rel.name, "other": _term_json(obj)})
        if direction in ("in", "both"):
            for rel, subj in components.kb.in_edges(eid):
                edges.append({"direction": "in", "relation": rel.name, "other": _term_json(subj)})
        edges.sort(key=lambda e: (e["relation"], e["direction"], e["other"]["value"]))
        return {"entity": entity, "direction": direction, "edges": edges}

    @app.post("/lf/validate")
    def post_validate(body: ValidateBody) -> dict:
        try:
            lf = parse(body.sparql)
        except LFSyntaxError as exc:
            return {"ok": False, "error": str(exc)}
        return {"ok": True, "canonical": format_lf(lf)}

    @app.get("/meta")
    def get_meta() -> dict:
        with lock.read():
            n_cases = len(components.memory)
            by_kind: dict[str, int] = {}
            for case in components.memory.cases():
                by_kind[case.provenance.kind] = by_kind.get(case.provenance.kind, 0) + 1
        return {
            "versions": versions,
            "counts": {
                "cases": n_cases,
                "cases_by_provenance": by_kind,
                "triples": len(components.kb.triples),
                "entities": len(components.kb.entity_vocab),
                "relations": len(components.kb.relation_vocab),
                "requests": dict(sorted(counters.items())),
            },
            "config": {
                "default_k": default_flags.k,
                "default_revise": default_flags.revise,
                "revise_beam": default_flags.revise_beam,
                "generator": {
                    "beam": components.generator.beam,
                    "alpha": components.generator.alpha,
                    "beta": components.generator.beta,
                    "gamma_oov": components.generator.gamma_oov,
                },
            },
        }

    return app
