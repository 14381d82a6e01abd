"""Collect English/Vietnamese category-name pairs from Wikidata sitelinks.

The HTTP layer is a ``Transport``: anything with ``get(params) -> (status, body, headers)``.
``HttpTransport`` talks to the live API; ``FixtureTransport`` answers from a
local mapping of Q-ids to entity JSON so tests and offline runs are hermetic.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

from .corpus import CategoryPair, Dataset, save
from .rng import SplitMix64, derive_seed

log = logging.getLogger(__name__)

API_URL = "https://www.wikidata.org/w/api.php"
BATCH_LIMIT = 50
QID_RE = re.compile(r"Q[1-9][0-9]*")
SOURCE_PREFIX = "Category:"
TARGET_PREFIX = "Thể loại:"
RETRYABLE = {429, 500, 502, 503, 504}
USER_AGENT_ENV = "CATMT_USER_AGENT"
DEFAULT_USER_AGENT = "catmt-harvester/0.1 (category translation research; set CATMT_USER_AGENT)"


class HarvestError(RuntimeError):
    def __init__(self, message: str, qids: Iterable[str] = (), status: int | None = None) -> None:
        super().__init__(message)
        self.qids = list(qids)
        self.status = status


@dataclass
class HarvestConfig:
    target_count: int = 15000
    max_qid: int = 130_000_000
    concurrency: int = 1
    min_request_interval: float = 1.0
    user_agent: str = DEFAULT_USER_AGENT
    seed: int = 42
    attempt_budget: int = 100_000  # sampling rounds; each issues at most one request of <= 50 ids
    batch_size: int = BATCH_LIMIT
    source_wiki: str = "enwiki"
    target_wiki: str = "viwiki"
    max_retries: int = 3
    backoff_base: float = 1.0

    def __post_init__(self) -> None:
        if self.target_count < 1:
            raise ValueError("target_count must be >= 1")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        if self.max_qid < 1:
            raise ValueError("max_qid must be >= 1")
        if not 1 <= self.batch_size <= BATCH_LIMIT:
            raise ValueError(f"batch_size must be in 1..{BATCH_LIMIT}")


@dataclass(frozen=True)
class EntityRecord:
    qid: str
    sitelinks: Mapping[str, str]


def random_qids(n: int, max_qid: int, seed: int, batch_size: int = BATCH_LIMIT) -> list[list[str]]:
    if n < 1 or max_qid < 1:
        raise ValueError("n and max_qid must be >= 1")
    rng = SplitMix64(seed)
    ids = [f"Q{rng.below(max_qid) + 1}" for _ in range(n)]
    return [ids[i : i + batch_size] for i in range(0, n, batch_size)]


# -- transports ----------------------------------------------------------------


class Transport(Protocol):
    def get(self, params: Mapping[str, str]) -> tuple[int, bytes, Mapping[str, str]]: ...


class HttpTransport:
    def __init__(self, user_agent: str, url: str = API_URL, timeout: float = 30.0) -> None:
        if not user_agent:
            raise ValueError("a descriptive User-Agent is required")
        self.user_agent = user_agent
        self.url = url
        self.timeout = timeout

    def get(self, params):
        req = urllib.request.Request(
            f"{self.url}?{urllib.parse.urlencode(params)}",
            headers={"User-Agent": self.user_agent, "Accept": "application/json"},
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.status, resp.read(), dict(resp.headers)
        except urllib.error.HTTPError as e:
            return e.code, e.read() or b"", dict(e.headers or {})


class FixtureTransport:
    """Answers ``wbgetentities`` requests from a ``{qid: entity}`` mapping.

    Ids absent from the mapping come back the way the API reports deleted or
    unknown items: ``{"id": ..., "missing": ""}``.
    """

    def __init__(self, entities: Mapping[str, dict]) -> None:
        self.entities = dict(entities)
        self.requests: list[dict] = []

    @classmethod
    def from_path(cls, path: str | Path) -> "FixtureTransport":
        """A JSON file mapping Q-ids to entities, or a directory of ``<qid>.json`` files."""
        path = Path(path)
        if path.is_dir():
            entities = {}
            for f in sorted(path.glob("*.json")):
                data = json.loads(f.read_text(encoding="utf-8"))
                entities.update(data if "sitelinks" not in data else {f.stem: data})
            return cls(entities)
        return cls(json.loads(path.read_text(encoding="utf-8")))

    def get(self, params):
        self.requests.append(dict(params))
        out = {}
        for qid in params["ids"].split("|"):
            out[qid] = self.entities.get(qid, {"id": qid, "missing": ""})
        return 200, json.dumps({"entities": out, "success": 1}).encode("utf-8"), {}


# -- pacing ----------------------------------------------------------------------


class Clock(Protocol):
    def monotonic(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def monotonic(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class RateLimiter:
    """Spaces request starts at least ``interval`` seconds apart across all workers."""

    def __init__(self, interval: float, clock: Clock | None = None) -> None:
        self.interval = interval
        self.clock = clock or SystemClock()
        self._lock = threading.Lock()
        self._next = None

    def acquire(self) -> float:
        with self._lock:
            now = self.clock.monotonic()
            if self._next is not None and now < self._next:
                self.clock.sleep(self._next - now)
                now = self.clock.monotonic()
            self._next = now + self.interval
            return now


# -- fetching ----------------------------------------------------------------------


def fetch_entities(
    batch: list[str],
    config: HarvestConfig,
    transport: Transport,
    limiter: RateLimiter | None = None,
) -> list[EntityRecord]:
    for qid in batch:
        if not QID_RE.fullmatch(qid):
            raise HarvestError(f"invalid Q-id {qid!r}", [qid])
    if len(batch) > BATCH_LIMIT:
        raise HarvestError(f"batch of {len(batch)} exceeds {BATCH_LIMIT}", batch)
    if not batch:
        return []
    limiter = limiter or RateLimiter(config.min_request_interval)
    params = {
        "action": "wbgetentities",
        "ids": "|".join(batch),
        "props": "sitelinks",
        "sitefilter": f"{config.source_wiki}|{config.target_wiki}",
        "format": "json",
    }
    status, body, headers = 0, b"", {}
    for attempt in range(config.max_retries):
        limiter.acquire()
        try:
            status, body, headers = transport.get(params)
        except OSError as e:
            status, body, headers = -1, str(e).encode(), {}
        if status == 200:
            break
        if status not in RETRYABLE and status != -1:
            raise HarvestError(f"HTTP {status} for ids {params['ids']}", batch, status)
        delay = config.backoff_base * 2**attempt
        retry_after = headers.get("Retry-After") if headers else None
        if retry_after and retry_after.isdigit():
            delay = max(delay, float(retry_after))
        log.warning("transient failure (status %s), retrying in %.1fs", status, delay)
        limiter.clock.sleep(delay)
    else:
        raise HarvestError(f"giving up after {config.max_retries} attempts (last status {status})", batch, status)
    return parse_entities(body, batch)


def parse_entities(body: bytes, batch: list[str]) -> list[EntityRecord]:
    try:
        payload = json.loads(body)
    except ValueError as e:
        raise HarvestError(f"malformed JSON for ids {'|'.join(batch)}", batch, 200) from e
    if "error" in payload:
        info = payload["error"].get("info", payload["error"]) if isinstance(payload["error"], dict) else payload["error"]
        raise HarvestError(f"API error for ids {'|'.join(batch)}: {info}", batch, 200)
    entities = payload.get("entities")
    if not isinstance(entities, dict):
        raise HarvestError(f"payload without entities for ids {'|'.join(batch)}", batch, 200)
    records = []
    for qid in batch:
        ent = entities.get(qid)
        if ent is None or "missing" in ent:
            continue
        links = ent.get("sitelinks", {})
        if not isinstance(links, dict):
            raise HarvestError(f"malformed sitelinks for {qid}", [qid], 200)
        titles = {}
        for site, link in links.items():
            title = link.get("title") if isinstance(link, dict) else None
            if title:
                titles[site] = title
        records.append(EntityRecord(qid, titles))
    return records


def extract_pair(record: EntityRecord, source_wiki: str = "enwiki", target_wiki: str = "viwiki") -> CategoryPair | None:
    src = record.sitelinks.get(source_wiki, "")
    tgt = record.sitelinks.get(target_wiki, "")
    if not (src.startswith(SOURCE_PREFIX) and tgt.startswith(TARGET_PREFIX)):
        return None
    src = src[len(SOURCE_PREFIX) :].strip()
    tgt = tgt[len(TARGET_PREFIX) :].strip()
    if not src or not tgt:
        return None
    return CategoryPair(src, tgt, qid=record.qid)


# -- harvesting loop ----------------------------------------------------------------


@dataclass
class HarvestResult:
    dataset: Dataset
    attempts: int
    shortfall: int = 0
    visited: set[str] = field(default_factory=set)

    @property
    def complete(self) -> bool:
        return self.shortfall == 0


class Checkpointer:
    """Resume state: visited Q-ids (one per line) plus the dataset file written so far."""

    def __init__(self, visited_path: str | Path, dataset_path: str | Path | None = None) -> None:
        self.visited_path = Path(visited_path)
        self.dataset_path = Path(dataset_path) if dataset_path else None

    def load_visited(self) -> set[str]:
        if not self.visited_path.exists():
            return set()
        return {line.strip() for line in self.visited_path.read_text().splitlines() if line.strip()}

    def record(self, qids: Iterable[str], dataset: Dataset) -> None:
        with open(self.visited_path, "a") as f:
            f.writelines(q + "\n" for q in qids)
        if self.dataset_path is not None:
            tmp = self.dataset_path.with_name(self.dataset_path.name + ".tmp")
            save(dataset, tmp)
            tmp.replace(self.dataset_path)


def harvest(
    config: HarvestConfig,
    transport: Transport,
    sink: Dataset | None = None,
    checkpoint: Checkpointer | None = None,
    limiter: RateLimiter | None = None,
) -> HarvestResult:
    """Sample Q-ids, fetch sitelinks and keep category pairs until the target is met.

    Rounds are numbered; round ``r`` draws its ids from ``derive_seed(seed, r)``,
    so a fixed seed gives a fixed id stream. Workers run rounds concurrently
    but results are merged in round order.
    """
    sink = sink if sink is not None else Dataset()
    limiter = limiter or RateLimiter(config.min_request_interval)
    visited = checkpoint.load_visited() if checkpoint else set()
    lock = threading.Lock()
    attempts = 0
    round_no = 0

    def ids_for(r: int) -> list[str]:
        batch = random_qids(config.batch_size, config.max_qid, derive_seed(config.seed, r), config.batch_size)[0]
        return list(dict.fromkeys(q for q in batch if q not in visited))

    def run_round(r: int) -> tuple[list[str], list[EntityRecord]]:
        ids = ids_for(r)
        return ids, fetch_entities(ids, config, transport, limiter) if ids else []

    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        while len(sink) < config.target_count and attempts < config.attempt_budget:
            width = min(config.concurrency, config.attempt_budget - attempts)
            futures = [pool.submit(run_round, round_no + k) for k in range(width)]
            round_no += width
            for fut in futures:
                ids, records = fut.result()
                attempts += 1
                with lock:
                    for rec in records:
                        if len(sink) >= config.target_count:
                            break
                        pair = extract_pair(rec, config.source_wiki, config.target_wiki)
                        if pair is not None and not sink.add(pair):
                            log.debug("duplicate pair %r", pair.key)
                    visited.update(ids)
                    if checkpoint:
                        checkpoint.record(ids, sink)
    shortfall = max(config.target_count - len(sink), 0)
    if shortfall:
        log.warning("attempt budget exhausted: %d of %d pairs", len(sink), config.target_count)
    return HarvestResult(sink, attempts, shortfall, visited)
