"""
VerdictCache — oracle verdicts kept in Redis for the duration of a run.

Connects to a real Redis when a URL is configured; otherwise an
in-process fakeredis instance is used (the default for replay runs and
tests).

Key schema (one JSON string per key):
    verdict:{oracle_id}:{language}:{name}  →  {"oracle_id", "label", "confidence"}

Lookups of one key are serialized by a per-key lock, so concurrent
identical queries reach the oracle (and the trace) exactly once.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Awaitable, Callable, Optional

import redis.asyncio as _redis

from .models import OracleVerdict

log = logging.getLogger(__name__)


class VerdictCache:
    """Thin async wrapper around a Redis connection."""

    def __init__(
        self,
        url: Optional[str] = None,
        namespace: str = "verdict",
        **redis_kwargs,
    ):
        if url is None:
            from fakeredis import FakeServer, aioredis as fake_aioredis
            self._r = fake_aioredis.FakeRedis(server=FakeServer(), decode_responses=True)
        else:
            self._r = _redis.Redis.from_url(
                url,
                decode_responses=True,
                socket_timeout=redis_kwargs.pop("socket_timeout", 5),
                socket_connect_timeout=redis_kwargs.pop("socket_connect_timeout", 5),
                **redis_kwargs,
            )
        self.namespace = namespace
        self._locks: dict[str, asyncio.Lock] = {}
        self.hits = 0
        self.misses = 0

    def _key(self, oracle_id: str, language: str, name: str) -> str:
        return f"{self.namespace}:{oracle_id}:{language}:{name}"

    # ── read / write ─────────────────────────────────────────────────────

    async def get(self, oracle_id: str, language: str, name: str) -> Optional[OracleVerdict]:
        raw = await self._r.get(self._key(oracle_id, language, name))
        return OracleVerdict.model_validate_json(raw) if raw is not None else None

    async def put(self, language: str, name: str, verdict: OracleVerdict) -> None:
        await self._r.set(self._key(verdict.oracle_id, language, name),
                          verdict.model_dump_json())

    async def get_or_fetch(
        self,
        oracle_id: str,
        language: str,
        name: str,
        fetch: Callable[[], Awaitable[OracleVerdict]],
    ) -> OracleVerdict:
        key = self._key(oracle_id, language, name)
        lock = self._locks.setdefault(key, asyncio.Lock())
        async with lock:
            cached = await self.get(oracle_id, language, name)
            if cached is not None:
                self.hits += 1
                return cached
            self.misses += 1
            verdict = await fetch()
            await self.put(language, name, verdict)
            return verdict

    # ── cleanup ──────────────────────────────────────────────────────────

    async def flush(self) -> None:
        """Drop every cached verdict in this namespace."""
        keys = [k async for k in self._r.scan_iter(match=f"{self.namespace}:*")]
        if keys:
            await self._r.delete(*keys)
        self._locks.clear()

    async def close(self) -> None:
        await self._r.aclose()
