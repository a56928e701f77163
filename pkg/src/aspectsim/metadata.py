"""Scholarly-metadata client used to back-fill abstracts, authors and venues.

The default endpoints follow the Semantic Scholar Graph API layout
(``/paper/{SCHEME}:{id}`` and ``/paper/search/match``).  Every answer,
including "not found", is cached as a JSON file keyed by the query hash, so a
repeated query never goes back to the network.  Transient failures are not
cached.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from collections.abc import Iterable, Iterator, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import httpx
from filelock import FileLock

from .corpus import PaperRecord

logger = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.semanticscholar.org/graph/v1"
FIELDS = "paperId,title,abstract,authors,venue,year"

# external-id scheme -> path prefix understood by the API
_SCHEME_PREFIX = {
    "doi": "DOI:",
    "arxiv": "ARXIV:",
    "acl": "ACL:",
    "pmid": "PMID:",
    "pmcid": "PMCID:",
    "mag": "MAG:",
    "corpusid": "CorpusId:",
    "s2": "",
}


@dataclass(frozen=True)
class MetadataQuery:
    scheme: str | None = None
    identifier: str | None = None
    title: str | None = None
    year: int | None = None

    def cache_key(self) -> str:
        payload = json.dumps(dataclasses.asdict(self), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class MetadataResponse:
    paper_id: str | None = None
    title: str | None = None
    abstract: str | None = None
    authors: tuple[str, ...] = ()
    venue: str | None = None
    year: int | None = None

    @classmethod
    def from_api(cls, obj: Mapping) -> MetadataResponse:
        return cls(
            paper_id=obj.get("paperId"),
            title=obj.get("title"),
            abstract=obj.get("abstract"),
            authors=tuple(
                a["name"] if isinstance(a, Mapping) else str(a) for a in obj.get("authors") or []
            ),
            venue=obj.get("venue"),
            year=obj.get("year"),
        )

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["authors"] = list(self.authors)
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> MetadataResponse:
        return cls(**{**d, "authors": tuple(d.get("authors") or ())})


@dataclass
class ClientStats:
    cache_hits: int = 0
    network_calls: int = 0
    not_found: int = 0
    failures: int = 0


class MetadataClient:
    """Rate-limited, retrying, caching HTTP client.

    ``offline=True`` answers from the cache only (cache misses resolve to
    ``None``), which keeps CI deterministic.
    """

    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        cache_dir: str | Path | None = None,
        requests_per_second: float = 1.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        offline: bool = False,
        api_key: str | None = None,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.min_interval = 1.0 / requests_per_second if requests_per_second > 0 else 0.0
        self.max_retries = max_retries
        self.backoff = backoff
        self.offline = offline
        self.stats = ClientStats()
        self._sleep = sleep
        self._rate_lock = threading.Lock()
        self._last_request = 0.0
        headers = {"x-api-key": api_key} if api_key else {}
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    @classmethod
    def from_config(cls, config: Mapping | None = None, **overrides) -> MetadataClient:
        """Build a client from a config mapping, then ``ASPECTSIM_METADATA_*`` env vars.

        Explicit keyword overrides win over both.
        """
        cfg = dict(config or {})
        env = {
            "base_url": os.environ.get("ASPECTSIM_METADATA_URL"),
            "requests_per_second": os.environ.get("ASPECTSIM_METADATA_RPS"),
            "max_retries": os.environ.get("ASPECTSIM_METADATA_RETRIES"),
            "cache_dir": os.environ.get("ASPECTSIM_METADATA_CACHE"),
            "offline": os.environ.get("ASPECTSIM_METADATA_OFFLINE"),
            "api_key": os.environ.get("ASPECTSIM_METADATA_API_KEY"),
        }
        cfg.update({k: v for k, v in env.items() if v is not None})
        cfg.update({k: v for k, v in overrides.items() if v is not None})
        if "requests_per_second" in cfg:
            cfg["requests_per_second"] = float(cfg["requests_per_second"])
        if "max_retries" in cfg:
            cfg["max_retries"] = int(cfg["max_retries"])
        if isinstance(cfg.get("offline"), str):
            cfg["offline"] = cfg["offline"].lower() in ("1", "true", "yes")
        return cls(**cfg)

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # cache ---------------------------------------------------------------

    def _cache_path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / key[:2] / f"{key}.json"

    def _cache_get(self, key: str) -> tuple[bool, MetadataResponse | None]:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return False, None
        data = json.loads(path.read_text(encoding="utf-8"))
        resp = data.get("response")
        return True, MetadataResponse.from_json(resp) if resp is not None else None

    def _cache_put(self, key: str, query: MetadataQuery, resp: MetadataResponse | None) -> None:
        path = self._cache_path(key)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "query": dataclasses.asdict(query),
            "response": resp.to_json() if resp is not None else None,
        }
        # readers never take the lock; os.replace keeps each file whole
        with FileLock(str(path) + ".lock"):
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, ensure_ascii=False)
            os.replace(tmp, path)

    # network -------------------------------------------------------------

    def _throttle(self) -> None:
        with self._rate_lock:
            wait = self._last_request + self.min_interval - time.monotonic()
            if wait > 0:
                self._sleep(wait)
            self._last_request = time.monotonic()

    def _request(self, query: MetadataQuery) -> tuple[str, str, dict]:
        if query.identifier:
            scheme = (query.scheme or "s2").lower()
            prefix = _SCHEME_PREFIX.get(scheme, f"{scheme.upper()}:")
            return "id", f"{self.base_url}/paper/{prefix}{query.identifier}", {"fields": FIELDS}
        params = {"query": query.title or "", "fields": FIELDS}
        if query.year:
            params["year"] = str(query.year)
        return "match", f"{self.base_url}/paper/search/match", params

    def _fetch(self, query: MetadataQuery) -> tuple[bool, MetadataResponse | None]:
        """Return (definitive, response); definitive=False means give up without caching."""
        kind, url, params = self._request(query)
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            self._throttle()
            self.stats.network_calls += 1
            try:
                r = self._http.get(url, params=params)
            except httpx.TransportError as exc:
                logger.debug("metadata request failed (%s), attempt %d", exc, attempt + 1)
                continue
            if r.status_code == 404:
                return True, None
            if r.status_code == 429 or r.status_code >= 500:
                continue
            if r.status_code >= 400:
                logger.warning("metadata query %s rejected with HTTP %d", url, r.status_code)
                return True, None
            body = r.json()
            if kind == "match":
                hits = body.get("data") or []
                return True, MetadataResponse.from_api(hits[0]) if hits else None
            return True, MetadataResponse.from_api(body)
        return False, None

    def lookup(self, query: MetadataQuery) -> MetadataResponse | None:
        key = query.cache_key()
        hit, resp = self._cache_get(key)
        if hit:
            self.stats.cache_hits += 1
            return resp
        if self.offline:
            return None
        definitive, resp = self._fetch(query)
        if not definitive:
            self.stats.failures += 1
            logger.warning("metadata lookup gave up after %d retries: %s", self.max_retries, query)
            return None
        if resp is None:
            self.stats.not_found += 1
        self._cache_put(key, query, resp)
        return resp


@dataclass
class EnrichStats:
    attempted: int = 0
    filled: int = 0
    unresolved: int = 0


def queries_for(record: PaperRecord) -> list[MetadataQuery]:
    out = [
        MetadataQuery(scheme=scheme, identifier=value)
        for scheme, value in sorted(record.external_ids.items())
        if value
    ]
    if record.title.strip():
        out.append(MetadataQuery(title=record.title.strip(), year=record.year))
    return out


def _enrich_one(record: PaperRecord, client) -> tuple[PaperRecord, str]:
    if record.abstract.strip():
        return record, "skipped"
    for query in queries_for(record):
        resp = client.lookup(query)
        if resp is None or not (resp.abstract or "").strip():
            continue
        filled = dataclasses.replace(
            record,
            abstract=resp.abstract.strip(),
            authors=record.authors or list(resp.authors),
            venue=record.venue or (resp.venue or ""),
        )
        return filled, "filled"
    return record, "unresolved"


def enrich_metadata(
    records: Iterable[PaperRecord],
    client,
    stats: EnrichStats | None = None,
    workers: int = 1,
) -> Iterator[PaperRecord]:
    """Fill empty abstracts (and empty authors/venue alongside) from ``client``.

    Records that already have an abstract pass through untouched.  Input
    records are never mutated; output order follows input order.
    """
    if stats is None:
        stats = EnrichStats()
    if workers <= 1:
        results = (_enrich_one(r, client) for r in records)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(lambda r: _enrich_one(r, client), records)
    for record, outcome in results:
        if outcome != "skipped":
            stats.attempted += 1
            if outcome == "filled":
                stats.filled += 1
            else:
                stats.unresolved += 1
        yield record
    if workers > 1:
        pool.shutdown()
