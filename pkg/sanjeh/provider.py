"""
provider — chat-completion access, the probe retry protocol, and the
record / replay session shared by every outbound request.

Trace file (JSONL, append-only, one line per exchange):

    {"task_key", "attempt_index", "request_text", "response_text",
     "latency_ms", "request_body", "response_body"}

Entries are keyed by (task_key, attempt_index).  Probe keys are
``model|lang|domain|category|trial``; oracle keys are
``oracle/{id}/{lang}/{name}`` with attempt 0.

    record   existing entries are served first, misses go to the network
             and are appended; the trace is flock'ed for one writer
    replay   every lookup must hit; a miss raises ReplayError

Transport failures (connection errors, 429, 5xx) are retried with
exponential backoff via tenacity and never count against the probe's
invalid-name retry budget.
"""

from __future__ import annotations

import asyncio
import fcntl
import logging
import math
import re
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Any, Awaitable, Callable, Iterable, Optional, Union

import httpx
from pydantic import ValidationError as PydanticValidationError
from tenacity import (
    AsyncRetrying,
    retry_if_exception,
    stop_after_attempt,
    wait_exponential,
)

from .config import ProviderEndpoint
from .errors import ProviderError, ReplayError, SessionError
from .models import (
    Attempt,
    GenerationRecord,
    RunMode,
    TraceEntry,
    Verdict,
)
from .namenorm import NameCandidate
from .prompting import ProbeTask

log = logging.getLogger(__name__)

Validator = Callable[[str], NameCandidate]


# ═══════════════════════════════════════════════════════════════════════════
# Session (record / replay trace)
# ═══════════════════════════════════════════════════════════════════════════

@dataclass
class Exchange:
    """What a live call produced, before it becomes a TraceEntry."""
    response_text: str
    latency_ms: int
    request_body: Any = None
    response_body: Optional[str] = None


class Session:
    """
    Handle on one trace file.  All appends go through ``_append`` which
    writes a complete line synchronously, so coroutines on one event loop
    never interleave partial lines.
    """

    def __init__(self, mode: RunMode, trace_path: Path,
                 entries: dict[tuple[str, int], TraceEntry],
                 fh: Optional[IO[str]] = None):
        self.mode = mode
        self.trace_path = trace_path
        self._entries = entries
        self._fh = fh
        self.appended = 0
        self.served = 0

    # ── lookup ───────────────────────────────────────────────────────────

    def get(self, key: str, attempt_index: int = 0) -> Optional[TraceEntry]:
        return self._entries.get((key, attempt_index))

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def keys(self) -> set[tuple[str, int]]:
        return set(self._entries)

    async def exchange(
        self,
        key: str,
        attempt_index: int,
        request_text: str,
        call: Callable[[], Awaitable[Exchange]],
    ) -> TraceEntry:
        """Serve (key, attempt) from the trace, or perform ``call`` and record it."""
        hit = self._entries.get((key, attempt_index))
        if hit is not None:
            if hit.request_text != request_text:
                log.warning("trace request text differs for %s (attempt %d)",
                            key, attempt_index)
            self.served += 1
            return hit
        if self.mode == RunMode.REPLAY:
            raise ReplayError(key, attempt_index)

        result = await call()
        entry = TraceEntry(
            task_key=key,
            attempt_index=attempt_index,
            request_text=request_text,
            response_text=result.response_text,
            latency_ms=result.latency_ms,
            request_body=result.request_body,
            response_body=result.response_body,
        )
        # a concurrent caller may have recorded the same key meanwhile
        existing = self._entries.get((key, attempt_index))
        if existing is not None:
            return existing
        self._append(entry)
        return entry

    def _append(self, entry: TraceEntry) -> None:
        if self._fh is None:
            raise SessionError("session is closed or read-only")
        self._fh.write(entry.model_dump_json() + "\n")
        self._fh.flush()
        self._entries[(entry.task_key, entry.attempt_index)] = entry
        self.appended += 1

    # ── lifecycle ────────────────────────────────────────────────────────

    def close(self) -> None:
        if self._fh is not None:
            try:
                fcntl.flock(self._fh.fileno(), fcntl.LOCK_UN)
            finally:
                self._fh.close()
                self._fh = None

    def __enter__(self) -> Session:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _parse_trace(lines: Iterable[str], origin: str) -> dict[tuple[str, int], TraceEntry]:
    entries: dict[tuple[str, int], TraceEntry] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            entry = TraceEntry.model_validate_json(line)
        except PydanticValidationError as e:
            raise SessionError(f"{origin}: corrupt trace line {lineno}: "
                               f"{e.errors()[0]['msg']}") from e
        entries.setdefault((entry.task_key, entry.attempt_index), entry)
    return entries


def open_session(mode: Union[RunMode, str], trace_path: Union[str, Path]) -> Session:
    mode = RunMode(mode)
    path = Path(trace_path)

    if mode == RunMode.REPLAY:
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise SessionError(f"trace not found: {path}") from None
        except (OSError, UnicodeDecodeError) as e:
            raise SessionError(f"cannot read trace {path}: {e}") from e
        entries = _parse_trace(text.splitlines(), str(path))
        log.info("replay session: %d trace entries from %s", len(entries), path)
        return Session(mode, path, entries)

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fh = open(path, "a+", encoding="utf-8")
    except OSError as e:
        raise SessionError(f"cannot open trace for writing {path}: {e}") from e
    try:
        fcntl.flock(fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
    except OSError:
        fh.close()
        raise SessionError(f"trace is locked by another writer: {path}") from None

    try:
        fh.seek(0)
        text = fh.read()
        lines = text.splitlines()
        if text and not text.endswith("\n"):
            # an interrupted append left a partial line; drop it
            log.warning("dropping partial last line of %s", path)
            keep = text[:text.rfind("\n") + 1]
            fh.truncate(len(keep.encode("utf-8")))
            lines = lines[:-1]
        entries = _parse_trace(lines, str(path))
    except (SessionError, OSError, UnicodeDecodeError) as e:
        fcntl.flock(fh.fileno(), fcntl.LOCK_UN)
        fh.close()
        if isinstance(e, SessionError):
            raise
        raise SessionError(f"cannot read trace {path}: {e}") from e
    fh.seek(0, 2)
    log.info("record session: %d existing entries in %s", len(entries), path)
    return Session(mode, path, entries, fh)


# ═══════════════════════════════════════════════════════════════════════════
# Rate limiting and transport retries
# ═══════════════════════════════════════════════════════════════════════════

class RateLimiter:
    """
    Sliding-window limiter: at most ``capacity`` acquisitions in any
    ``window_s`` seconds.  For rpm ≥ 1 the window is 60 s with
    capacity ⌊rpm⌋; below 1 rpm one request is allowed per 60/rpm s.
    """

    def __init__(
        self,
        requests_per_minute: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], Awaitable[Any]] = asyncio.sleep,
    ):
        if requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be > 0")
        if requests_per_minute >= 1:
            self.capacity = int(math.floor(requests_per_minute))
            self.window_s = 60.0
        else:
            self.capacity = 1
            self.window_s = 60.0 / requests_per_minute
        self._clock = clock
        self._sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock: Optional[asyncio.Lock] = None

    async def acquire(self) -> None:
        if self._lock is None:
            self._lock = asyncio.Lock()
        async with self._lock:
            while True:
                now = self._clock()
                while self._stamps and now - self._stamps[0] >= self.window_s:
                    self._stamps.popleft()
                if len(self._stamps) < self.capacity:
                    self._stamps.append(now)
                    return
                await self._sleep(self.window_s - (now - self._stamps[0]))


@dataclass
class WireRequest:
    method: str
    url: str
    headers: dict[str, str] = field(default_factory=dict)
    params: Optional[dict[str, str]] = None
    json: Optional[dict] = None
    secret_params: tuple[str, ...] = ()

    def recorded_body(self) -> Any:
        """What goes into the trace: body and query, never headers or keys."""
        if self.json is not None:
            return self.json
        if not self.params:
            return None
        return {"params": {k: v for k, v in self.params.items()
                           if k not in self.secret_params}}


def _is_transient(exc: BaseException) -> bool:
    if isinstance(exc, httpx.TransportError):
        return True
    if isinstance(exc, httpx.HTTPStatusError):
        code = exc.response.status_code
        return code == 429 or code >= 500
    return False


async def send_with_retries(
    http: httpx.AsyncClient,
    req: WireRequest,
    *,
    attempts: int = 3,
    backoff_s: float = 1.0,
    timeout_s: float = 60.0,
    limiter: Optional[RateLimiter] = None,
) -> httpx.Response:
    """
    Issue ``req``; retry transport errors, 429 and 5xx.  Raises httpx errors.
    Every attempt, retries included, takes a slot from ``limiter``.
    """
    retrying = AsyncRetrying(
        stop=stop_after_attempt(attempts),
        wait=wait_exponential(multiplier=backoff_s, min=0, max=60),
        retry=retry_if_exception(_is_transient),
        reraise=True,
    )
    async for attempt in retrying:
        with attempt:
            if limiter is not None:
                await limiter.acquire()
            resp = await http.request(req.method, req.url, headers=req.headers,
                                      params=req.params, json=req.json,
                                      timeout=timeout_s)
            resp.raise_for_status()
            return resp
    raise AssertionError("unreachable")


# ═══════════════════════════════════════════════════════════════════════════
# Chat adapters
# ═══════════════════════════════════════════════════════════════════════════

_THINK = re.compile(r"<think>.*?</think>", re.DOTALL)


def strip_reasoning(text: str) -> str:
    text = _THINK.sub("", text)
    if "<think>" in text:
        # unterminated reasoning block: nothing usable follows it
        text = text[:text.index("<think>")]
    return text.strip()


def _openai_request(ep: ProviderEndpoint, prompt: str, key: Optional[str]) -> WireRequest:
    body: dict[str, Any] = {
        "model": ep.wire_model,
        "messages": [{"role": "user", "content": prompt}],
    }
    if ep.decoding.temperature is not None:
        body["temperature"] = ep.decoding.temperature
    if ep.decoding.max_tokens is not None:
        body["max_tokens"] = ep.decoding.max_tokens
    headers = {"Authorization": f"Bearer {key}"} if key else {}
    return WireRequest("POST", ep.base_url.rstrip("/") + "/chat/completions",
                       headers=headers, json=body)


def _openai_text(payload: dict) -> str:
    content = payload["choices"][0]["message"].get("content") or ""
    return strip_reasoning(content)


def _gemini_request(ep: ProviderEndpoint, prompt: str, key: Optional[str]) -> WireRequest:
    body: dict[str, Any] = {"contents": [{"role": "user", "parts": [{"text": prompt}]}]}
    gen: dict[str, Any] = {}
    if ep.decoding.temperature is not None:
        gen["temperature"] = ep.decoding.temperature
    if ep.decoding.max_tokens is not None:
        gen["maxOutputTokens"] = ep.decoding.max_tokens
    if gen:
        body["generationConfig"] = gen
    headers = {"x-goog-api-key": key} if key else {}
    url = f"{ep.base_url.rstrip('/')}/models/{ep.wire_model}:generateContent"
    return WireRequest("POST", url, headers=headers, json=body)


def _gemini_text(payload: dict) -> str:
    candidates = payload.get("candidates") or []
    if not candidates:
        return ""
    parts = candidates[0].get("content", {}).get("parts", [])
    return strip_reasoning("".join(p.get("text", "") for p in parts))


CHAT_ADAPTERS: dict[str, tuple[Callable[..., WireRequest], Callable[[dict], str]]] = {
    "openai": (_openai_request, _openai_text),
    "gemini": (_gemini_request, _gemini_text),
}


# ═══════════════════════════════════════════════════════════════════════════
# Provider client
# ═══════════════════════════════════════════════════════════════════════════

class ProviderClient:
    """One chat endpoint: in-flight cap, rate limit, transport retries."""

    def __init__(
        self,
        endpoint: ProviderEndpoint,
        http: Optional[httpx.AsyncClient] = None,
        *,
        transport_retries: int = 3,
        backoff_s: float = 1.0,
        limiter: Optional[RateLimiter] = None,
    ):
        self.endpoint = endpoint
        self.http = http
        self.transport_retries = transport_retries
        self.backoff_s = backoff_s
        self.limiter = limiter or RateLimiter(endpoint.requests_per_minute)
        self._build, self._parse = CHAT_ADAPTERS[endpoint.adapter]
        self._slots: Optional[asyncio.Semaphore] = None

    async def _call(self, prompt_text: str) -> Exchange:
        if self.http is None:
            raise ProviderError(f"{self.endpoint.model_id}: no HTTP client in this session")
        if self._slots is None:
            self._slots = asyncio.Semaphore(self.endpoint.max_in_flight)
        req = self._build(self.endpoint, prompt_text, self.endpoint.credential())
        async with self._slots:
            started = time.perf_counter()
            try:
                resp = await send_with_retries(
                    self.http, req, attempts=self.transport_retries,
                    backoff_s=self.backoff_s, timeout_s=self.endpoint.timeout_s,
                    limiter=self.limiter)
                text = self._parse(resp.json())
            except httpx.HTTPError as e:
                raise ProviderError(f"{self.endpoint.model_id}: {e}") from e
            except (ValueError, KeyError, IndexError, TypeError) as e:
                raise ProviderError(
                    f"{self.endpoint.model_id}: unexpected response shape: {e}") from e
            latency = int((time.perf_counter() - started) * 1000)
        log.debug("%s ← %r (%d ms)", self.endpoint.model_id, text, latency)
        return Exchange(response_text=text, latency_ms=latency,
                        request_body=req.recorded_body(), response_body=resp.text)

    async def exchange(self, prompt_text: str, session: Session,
                       task_key: str, attempt_index: int = 0) -> TraceEntry:
        return await session.exchange(task_key, attempt_index, prompt_text,
                                      lambda: self._call(prompt_text))

    async def complete(self, prompt_text: str, session: Session,
                       task_key: str, attempt_index: int = 0) -> str:
        entry = await self.exchange(prompt_text, session, task_key, attempt_index)
        return entry.response_text


# ═══════════════════════════════════════════════════════════════════════════
# Probe protocol
# ═══════════════════════════════════════════════════════════════════════════

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


async def run_probe(
    task: ProbeTask,
    client: ProviderClient,
    validator: Validator,
    session: Session,
    retry_limit: int = 2,
) -> GenerationRecord:
    """
    Ask until the validator accepts a name or 1 + ``retry_limit`` attempts
    are used.  ProviderError / ReplayError propagate: the task is aborted,
    not recorded as failed.
    """
    started = _now()
    attempts: list[Attempt] = []
    accepted: Optional[NameCandidate] = None
    for index in range(retry_limit + 1):
        entry = await client.exchange(task.prompt.text, session, task.key, index)
        cand = validator(entry.response_text)
        attempts.append(Attempt(
            index=index,
            request_text=entry.request_text,
            response_text=entry.response_text,
            latency_ms=entry.latency_ms,
            verdict=Verdict.VALID_NAME if cand.accepted else Verdict.INVALID,
            reason=cand.rejected_reason,
        ))
        if cand.accepted:
            accepted = cand
            break
    return GenerationRecord(
        task=task.task_key,
        attempts=attempts,
        name=accepted.normalized if accepted else None,
        failure=None if accepted else attempts[-1].reason,
        started_at=started,
        finished_at=_now(),
    )


def missing_count(records: Iterable[GenerationRecord], plan: Iterable[ProbeTask]) -> int:
    """Plan tasks whose record is failed or absent."""
    by_key = {r.task.key: r for r in records}
    return sum(1 for t in plan
               if t.key not in by_key or not by_key[t.key].ok)


def trace_lines(entries: Iterable[TraceEntry]) -> str:
    """Serialize entries as trace JSONL (used by fixture builders)."""
    return "".join(e.model_dump_json() + "\n" for e in entries)
