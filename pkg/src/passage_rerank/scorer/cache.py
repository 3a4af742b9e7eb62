"""SQLite-backed score cache so pairwise reruns do not re-query the model."""

from __future__ import annotations

import hashlib
import json
import sqlite3
import threading
from pathlib import Path
from typing import Mapping

from .backends import LikelihoodRequest, OptionRequest, ScorerBackend

_SCHEMA = "CREATE TABLE IF NOT EXISTS scores (key TEXT PRIMARY KEY, value TEXT NOT NULL)"


def _digest(*parts: str) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


class ScoreCache:
    """Key/value store with one connection per thread and serialised writes."""

    def __init__(self, path: str | Path):
        self.path = str(path)
        self._local = threading.local()
        self._write_lock = threading.Lock()
        with self._write_lock:
            conn = self._conn()
            conn.execute("PRAGMA journal_mode=WAL")
            conn.execute(_SCHEMA)
            conn.commit()

    def _conn(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = self._local.conn = sqlite3.connect(self.path, timeout=30.0)
        return conn

    def get(self, key: str):
        row = self._conn().execute("SELECT value FROM scores WHERE key = ?", (key,)).fetchone()
        return None if row is None else json.loads(row[0])

    def put(self, key: str, value) -> None:
        with self._write_lock:
            conn = self._conn()
            conn.execute("INSERT OR REPLACE INTO scores (key, value) VALUES (?, ?)", (key, json.dumps(value)))
            conn.commit()

    def __len__(self) -> int:
        return self._conn().execute("SELECT COUNT(*) FROM scores").fetchone()[0]


class CachedBackend:
    """Serves repeated requests from a :class:`ScoreCache`.

    Keys hash the backend identity, the rendered prompt (which embeds the
    template body), the option tokens, and the query and passage ids and texts.
    """

    def __init__(self, inner: ScorerBackend, cache: ScoreCache):
        self.inner = inner
        self.cache = cache
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    @property
    def identity(self) -> str:
        return self.inner.identity

    @property
    def max_parallel_requests(self) -> int:
        return self.inner.max_parallel_requests

    def _count(self, hit: bool) -> None:
        with self._lock:
            if hit:
                self.hits += 1
            else:
                self.misses += 1

    def option_logprobs(self, request: OptionRequest) -> Mapping[str, float]:
        key = _digest(
            "options",
            self.identity,
            request.kind,
            request.prompt,
            json.dumps(list(request.options)),
            request.query.id,
            request.query.text,
            *(f"{p.id}\x1f{p.full_text}" for p in request.passages),
        )
        cached = self.cache.get(key)
        self._count(cached is not None)
        if cached is not None:
            return cached
        value = dict(self.inner.option_logprobs(request))
        self.cache.put(key, value)
        return value

    def loglikelihood(self, request: LikelihoodRequest) -> tuple[float, int]:
        key = _digest(
            "loglikelihood",
            self.identity,
            request.context,
            request.continuation,
            request.query.id,
            request.passage.id,
        )
        cached = self.cache.get(key)
        self._count(cached is not None)
        if cached is not None:
            return float(cached[0]), int(cached[1])
        value = self.inner.loglikelihood(request)
        self.cache.put(key, list(value))
        return value
