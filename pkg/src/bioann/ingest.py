"""Fetch PubMed abstracts by PMID from a configurable upstream endpoint.

Two modes: ``efetch_xml`` speaks the NCBI efetch XML shape; ``stub_json``
expects a plain ``{"pmid", "title", "abstract"}`` object and exists so the
whole test suite can run against a local fixture server without network.
"""

from __future__ import annotations

import random
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Protocol

import requests
from requests.adapters import HTTPAdapter

from bioann.errors import ConfigError, FetchFailed, MalformedResponse, PmidNotFound
from bioann.model import Document, is_valid_pmid

_BACKOFF_BASE_S = 0.1


class FetchMode(Enum):
    EFETCH_XML = "efetch_xml"
    STUB_JSON = "stub_json"


@dataclass(frozen=True, slots=True)
class FetcherConfig:
    base_url: str
    timeout_ms: int = 10_000
    retries: int = 2
    mode: FetchMode = FetchMode.STUB_JSON
    api_key: str | None = None  # passed through as a query parameter
    max_connections: int = 4

    def __post_init__(self):
        if not self.base_url:
            raise ConfigError("fetcher base_url must be nonempty")
        if self.timeout_ms <= 0:
            raise ConfigError("fetcher timeout_ms must be positive")
        if not (0 <= self.retries <= 5):
            raise ConfigError("fetcher retries must be in [0, 5]")


class Fetcher(Protocol):
    def fetch(self, pmid: str) -> Document: ...


class HttpFetcher:
    """HTTP abstract fetcher with bounded, jittered exponential backoff."""

    def __init__(self, cfg: FetcherConfig, session: requests.Session | None = None):
        self.cfg = cfg
        if session is None:
            session = requests.Session()
            adapter = HTTPAdapter(
                pool_connections=cfg.max_connections, pool_maxsize=cfg.max_connections
            )
            session.mount("http://", adapter)
            session.mount("https://", adapter)
        self._session = session

    def fetch(self, pmid: str) -> Document:
        if not is_valid_pmid(pmid):
            raise ValueError(f"pmid must be a digit string, got {pmid!r}")
        attempts = self.cfg.retries + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                delay = _BACKOFF_BASE_S * (2 ** (attempt - 1))
                time.sleep(delay * random.uniform(0.5, 1.5))
            try:
                return self._fetch_once(pmid)
            except (PmidNotFound, MalformedResponse):
                raise  # definitive answers, retrying will not help
            except (requests.RequestException, FetchFailed) as exc:
                last_error = exc
        raise FetchFailed(f"pmid {pmid}: giving up after {attempts} attempts: {last_error}")

    def _fetch_once(self, pmid: str) -> Document:
        cfg = self.cfg
        timeout = cfg.timeout_ms / 1000.0
        if cfg.mode is FetchMode.STUB_JSON:
            url = f"{cfg.base_url.rstrip('/')}/{pmid}"
            params = {"api_key": cfg.api_key} if cfg.api_key else None
        else:
            url = cfg.base_url
            params = {
                "db": "pubmed",
                "id": pmid,
                "rettype": "abstract",
                "retmode": "xml",
            }
            if cfg.api_key:
                params["api_key"] = cfg.api_key

        resp = self._session.get(url, params=params, timeout=timeout)
        if resp.status_code == 404:
            raise PmidNotFound(f"pmid {pmid} not found upstream")
        if resp.status_code >= 500:
            raise FetchFailed(f"upstream returned HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise MalformedResponse(f"unexpected HTTP {resp.status_code}")

        if cfg.mode is FetchMode.STUB_JSON:
            return self._parse_stub(pmid, resp)
        return self._parse_efetch(pmid, resp)

    @staticmethod
    def _parse_stub(pmid: str, resp: requests.Response) -> Document:
        try:
            body = resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"stub reply is not JSON: {exc}") from exc
        if not isinstance(body, dict) or "title" not in body or "abstract" not in body:
            raise MalformedResponse("stub reply must carry 'title' and 'abstract'")
        return Document(text=_join(body["title"], body["abstract"]), doc_id=pmid)

    @staticmethod
    def _parse_efetch(pmid: str, resp: requests.Response) -> Document:
        try:
            root = ET.fromstring(resp.text)
        except ET.ParseError as exc:
            raise MalformedResponse(f"efetch reply is not XML: {exc}") from exc
        article = root.find(".//PubmedArticle")
        if article is None:
            raise PmidNotFound(f"pmid {pmid}: empty article set")
        title = "".join((article.find(".//ArticleTitle")).itertext()) if article.find(".//ArticleTitle") is not None else ""
        parts = [
            "".join(el.itertext()) for el in article.findall(".//Abstract/AbstractText")
        ]
        return Document(text=_join(title, " ".join(p for p in parts if p)), doc_id=pmid)


def _join(title: str, abstract: str) -> str:
    title = title.strip()
    abstract = abstract.strip()
    return f"{title} {abstract}" if abstract else title


@dataclass
class StaticFetcher:
    """In-memory fetcher over a pmid -> text mapping (benchmarks, tests)."""

    docs: Mapping[str, str]
    fetches: int = field(default=0)

    def fetch(self, pmid: str) -> Document:
        self.fetches += 1
        try:
            return Document(text=self.docs[pmid], doc_id=pmid)
        except KeyError:
            raise PmidNotFound(f"pmid {pmid} not in corpus") from None
