"""REST API: plain-text annotation, batched PMID annotation, and health.

Handlers run concurrently over shared immutable pipeline state; cache
writes are serialized inside the store.  Every error body is JSON of the
form ``{"error": "..."}``.
"""

from __future__ import annotations

from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool
from starlette.exceptions import HTTPException as StarletteHTTPException

from bioann.errors import BackendUnavailable, InputTooLarge, PmidNotFound
from bioann.ingest import Fetcher, FetcherConfig, FetchMode, HttpFetcher
from bioann.model import Document, is_valid_pmid
from bioann.pipeline import Pipeline, PipelineConfig
from bioann.store import AnnotationStore
from bioann.tagger import RemoteTagger
from bioann.wire import result_to_response

MAX_PMIDS_PER_REQUEST = 100


@dataclass
class ServiceRuntime:
    pipeline: Pipeline
    store: AnnotationStore
    fetcher: Fetcher

    @classmethod
    def from_config(cls, cfg: PipelineConfig) -> "ServiceRuntime":
        pipeline = Pipeline(cfg)
        store = AnnotationStore(cfg.store_path)
        fetcher_cfg = dict(cfg.fetcher)
        mode = FetchMode(fetcher_cfg.pop("mode", "efetch_xml"))
        base_url = fetcher_cfg.pop(
            "base_url", "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/efetch.fcgi"
        )
        fetcher = HttpFetcher(FetcherConfig(base_url=base_url, mode=mode, **fetcher_cfg))
        return cls(pipeline, store, fetcher)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def create_app(runtime: ServiceRuntime) -> FastAPI:
    app = FastAPI(title="bioann", docs_url=None, redoc_url=None)
    pipeline = runtime.pipeline

    @app.exception_handler(StarletteHTTPException)
    async def http_error(request: Request, exc: StarletteHTTPException):
        return _error(exc.status_code, str(exc.detail))

    @app.exception_handler(Exception)
    async def unhandled_error(request: Request, exc: Exception):
        return _error(500, f"internal error: {exc}")

    async def read_json(request: Request):
        try:
            return await request.json()
        except Exception:
            return None

    @app.post("/plain")
    async def annotate_plain(request: Request):
        body = await read_json(request)
        if not isinstance(body, dict):
            return _error(400, "body must be a JSON object with a 'text' field")
        text = body.get("text")
        if not isinstance(text, str):
            return _error(400, "'text' must be a string")
        try:
            result = await run_in_threadpool(pipeline.annotate_text, Document(text=text))
        except InputTooLarge as exc:
            return _error(400, str(exc))
        except BackendUnavailable as exc:
            return _error(503, str(exc))
        return JSONResponse(result_to_response(result))

    @app.post("/pmid")
    async def annotate_pmids(request: Request):
        body = await read_json(request)
        if not isinstance(body, dict):
            return _error(400, "body must be a JSON object with a 'pmids' field")
        pmids = body.get("pmids")
        if not isinstance(pmids, list) or not all(isinstance(p, str) for p in pmids):
            return _error(400, "'pmids' must be a list of strings")
        if not pmids:
            return _error(400, "'pmids' must not be empty")
        if len(pmids) > MAX_PMIDS_PER_REQUEST:
            return _error(400, f"at most {MAX_PMIDS_PER_REQUEST} pmids per request")
        bad = [p for p in pmids if not is_valid_pmid(p)]
        if bad:
            return _error(400, f"pmids must be digit strings: {bad[:5]}")

        def run_batch() -> list[dict]:
            results = []
            for pmid in pmids:
                try:
                    result = pipeline.annotate_pmid(pmid, runtime.store, runtime.fetcher)
                    results.append(
                        {"pmid": pmid, "status": "ok", "result": result_to_response(result)}
                    )
                except PmidNotFound:
                    results.append({"pmid": pmid, "status": "not_found"})
                except Exception as exc:  # per-item isolation: batch never fails whole
                    results.append({"pmid": pmid, "status": "error", "error": str(exc)})
            return results

        return JSONResponse(await run_in_threadpool(run_batch))

    @app.get("/health")
    async def health():
        backend = pipeline.backend
        if isinstance(backend, RemoteTagger):
            backend_name = "remote"
            backend_ok = await run_in_threadpool(backend.ping)
        else:
            backend_name = "gazetteer"
            backend_ok = True
        return JSONResponse(
            {
                "status": "ok",
                "pipeline_version": pipeline.cfg.pipeline_version,
                "backend": backend_name,
                "backend_ok": backend_ok,
                "cache_records": len(runtime.store),
            }
        )

    return app
