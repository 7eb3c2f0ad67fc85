"""
genderres — gender of a generated given name from two independent
name-gender oracles, with a local registry as tie-break.

Decision table (``resolve``):

    A = B, known                    → A's label,   oracles_agree
    otherwise, registry hit         → registry,    registry_tiebreak
    otherwise, any verdict unknown  → unresolved,  unresolved_unknown
    otherwise (known, disagreeing)  → unresolved,  unresolved_disagreement

Oracle traffic goes through the same record / replay Session as the chat
providers.  The trace's response_text for an oracle exchange is the
parsed verdict as compact JSON; the raw body is kept in response_body.
"""

from __future__ import annotations

import asyncio
import json
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Union

import httpx

from .config import OracleEndpoint
from .errors import OracleError, RegistryError, UndefinedMetricError
from .models import (
    Gender,
    GenderResolution,
    OracleVerdict,
    ResolutionSource,
    ResolvedLabel,
    RunMode,
)
from .namenorm import normalize_text
from .provider import Exchange, RateLimiter, Session, WireRequest, send_with_retries
from .verdict_cache import VerdictCache

log = logging.getLogger(__name__)


# ═══════════════════════════════════════════════════════════════════════════
# Registry
# ═══════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class Registry:
    entries: dict[str, Gender] = field(default_factory=dict)
    provenance: str = ""

    def lookup(self, name: str) -> Optional[Gender]:
        return self.entries.get(normalize_text(name).casefold())

    def __len__(self) -> int:
        return len(self.entries)


def load_registry(source: Union[str, Path]) -> Registry:
    """
    Read a ``name<TAB>gender`` file.  Lines starting with ``#`` are
    comments; ``# provenance: ...`` sets the provenance string.  Keys are
    normalized (NFC, Persian letter forms) and compared case-insensitively.
    """
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise RegistryError(f"cannot read registry {path}: {e}") from e

    entries: dict[str, Gender] = {}
    provenance = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if body.lower().startswith("provenance:"):
                provenance = body.split(":", 1)[1].strip()
            continue
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) != 2 or not parts[0]:
            raise RegistryError(f"{path}:{lineno}: expected 'name<TAB>gender'")
        name, label = parts
        if label not in (Gender.MALE.value, Gender.FEMALE.value):
            raise RegistryError(f"{path}:{lineno}: gender must be male or female, got {label!r}")
        key = normalize_text(name).casefold()
        gender = Gender(label)
        if entries.get(key, gender) != gender:
            raise RegistryError(f"{path}:{lineno}: conflicting entries for {name!r}")
        entries[key] = gender
    return Registry(entries=entries, provenance=provenance or str(path))


# ═══════════════════════════════════════════════════════════════════════════
# Oracle adapters
# ═══════════════════════════════════════════════════════════════════════════

def _known(label: Any) -> Gender:
    return Gender(label) if label in (Gender.MALE.value, Gender.FEMALE.value) else Gender.UNKNOWN


def _confidence(label: Gender, value: Any) -> Optional[float]:
    if label == Gender.UNKNOWN or not isinstance(value, (int, float)):
        return None
    if value < 0 or value > 1:
        return None
    return float(value)


def _genderize_request(ep: OracleEndpoint, name: str, country: Optional[str],
                       key: Optional[str]) -> WireRequest:
    params = {"name": name}
    if country:
        params["country_id"] = country
    if key:
        params["apikey"] = key
    return WireRequest("GET", ep.base_url, params=params, secret_params=("apikey",))


def _genderize_verdict(oracle_id: str, payload: dict) -> OracleVerdict:
    label = _known(payload.get("gender"))
    return OracleVerdict(oracle_id=oracle_id, label=label,
                         confidence=_confidence(label, payload.get("probability")))


def _namsor_request(ep: OracleEndpoint, name: str, country: Optional[str],
                    key: Optional[str]) -> WireRequest:
    person: dict[str, str] = {"id": "0", "firstName": name, "lastName": ""}
    if country:
        person["countryIso2"] = country
    headers = {"X-API-KEY": key} if key else {}
    return WireRequest("POST", ep.base_url.rstrip("/") + "/genderGeoBatch",
                       headers=headers, json={"personalNames": [person]})


def _namsor_verdict(oracle_id: str, payload: dict) -> OracleVerdict:
    people = payload.get("personalNames") or [{}]
    first = people[0]
    label = _known(first.get("likelyGender"))
    return OracleVerdict(oracle_id=oracle_id, label=label,
                         confidence=_confidence(label, first.get("probabilityCalibrated")))


ORACLE_ADAPTERS: dict[str, tuple[Callable[..., WireRequest],
                                 Callable[[str, dict], OracleVerdict]]] = {
    "genderize": (_genderize_request, _genderize_verdict),
    "namsor": (_namsor_request, _namsor_verdict),
}


def oracle_key(oracle_id: str, language: str, name: str) -> str:
    return f"oracle/{oracle_id}/{language}/{name}"


def verdict_text(verdict: OracleVerdict) -> str:
    return json.dumps({"label": verdict.label.value, "confidence": verdict.confidence},
                      sort_keys=True, separators=(",", ":"))


class OracleClient:
    """One name-gender service: in-flight cap, rate limit, transport retries."""

    def __init__(
        self,
        endpoint: OracleEndpoint,
        http: Optional[httpx.AsyncClient] = None,
        *,
        country_hint: Optional[Mapping[str, str]] = None,
        transport_retries: int = 3,
        backoff_s: float = 1.0,
        limiter: Optional[RateLimiter] = None,
    ):
        self.endpoint = endpoint
        self.oracle_id = endpoint.oracle_id
        self.http = http
        self.country_hint = dict(country_hint or {})
        self.transport_retries = transport_retries
        self.backoff_s = backoff_s
        self.limiter = limiter or RateLimiter(endpoint.requests_per_minute)
        self._build, self._parse = ORACLE_ADAPTERS[endpoint.adapter]
        self._slots: Optional[asyncio.Semaphore] = None

    async def _call(self, name: str, language: str) -> Exchange:
        if self.http is None:
            raise OracleError(f"oracle {self.oracle_id}: no HTTP client in this session")
        if self._slots is None:
            self._slots = asyncio.Semaphore(self.endpoint.max_in_flight)
        req = self._build(self.endpoint, name, self.country_hint.get(language),
                          self.endpoint.credential())
        async with self._slots:
            started = time.perf_counter()
            try:
                resp = await send_with_retries(
                    self.http, req, attempts=self.transport_retries,
                    backoff_s=self.backoff_s, timeout_s=self.endpoint.timeout_s,
                    limiter=self.limiter)
                verdict = self._parse(self.oracle_id, resp.json())
            except httpx.HTTPError as e:
                raise OracleError(f"oracle {self.oracle_id}: {e}") from e
            except (ValueError, KeyError, IndexError, TypeError, AttributeError) as e:
                raise OracleError(
                    f"oracle {self.oracle_id}: unexpected response shape: {e}") from e
            latency = int((time.perf_counter() - started) * 1000)
        return Exchange(response_text=verdict_text(verdict), latency_ms=latency,
                        request_body=req.recorded_body(), response_body=resp.text)

    async def query(self, name: str, language: str, session: Session) -> OracleVerdict:
        entry = await session.exchange(
            oracle_key(self.oracle_id, language, name), 0, name,
            lambda: self._call(name, language))
        try:
            data = json.loads(entry.response_text)
            return OracleVerdict(oracle_id=self.oracle_id, label=data["label"],
                                 confidence=data.get("confidence"))
        except (ValueError, KeyError, TypeError) as e:
            raise OracleError(f"oracle {self.oracle_id}: bad trace entry "
                              f"for {entry.task_key}: {e}") from e


async def query_oracle(
    oracle: OracleClient,
    name: str,
    language: str,
    session: Session,
    cache: Optional[VerdictCache] = None,
) -> OracleVerdict:
    """
    Verdict for (oracle, name, language).  The trace always wins; a warm
    cache is consulted only in record mode, and a verdict served from it is
    written to the trace so later replays stay self-sufficient.
    """
    key = oracle_key(oracle.oracle_id, language, name)
    if cache is None or session.mode == RunMode.REPLAY or session.get(key) is not None:
        return await oracle.query(name, language, session)
    verdict = await cache.get_or_fetch(oracle.oracle_id, language, name,
                                       lambda: oracle.query(name, language, session))
    if session.get(key) is None:
        async def from_cache() -> Exchange:
            return Exchange(response_text=verdict_text(verdict), latency_ms=0)
        await session.exchange(key, 0, name, from_cache)
    return verdict


# ═══════════════════════════════════════════════════════════════════════════
# Resolution
# ═══════════════════════════════════════════════════════════════════════════

def resolve(
    name: str,
    a: OracleVerdict,
    b: OracleVerdict,
    registry: Registry,
    language: str = "",
) -> GenderResolution:
    hit = registry.lookup(name)
    if a.label == b.label and a.label != Gender.UNKNOWN:
        label, source = ResolvedLabel(a.label.value), ResolutionSource.ORACLES_AGREE
    elif hit is not None:
        label, source = ResolvedLabel(hit.value), ResolutionSource.REGISTRY_TIEBREAK
    elif Gender.UNKNOWN in (a.label, b.label):
        label, source = ResolvedLabel.UNRESOLVED, ResolutionSource.UNRESOLVED_UNKNOWN
    else:
        label, source = ResolvedLabel.UNRESOLVED, ResolutionSource.UNRESOLVED_DISAGREEMENT
    return GenderResolution(name=name, language=language, label=label, source=source,
                            verdicts=(a, b), registry_hit=hit)


async def resolve_name(
    name: str,
    language: str,
    oracles: tuple[OracleClient, OracleClient],
    session: Session,
    registry: Registry,
    cache: Optional[VerdictCache] = None,
) -> GenderResolution:
    a, b = await asyncio.gather(
        query_oracle(oracles[0], name, language, session, cache),
        query_oracle(oracles[1], name, language, session, cache),
    )
    return resolve(name, a, b, registry, language)


def _unique(resolutions: Iterable[GenderResolution], scope: Optional[str]) -> list[GenderResolution]:
    seen: dict[tuple[str, str], GenderResolution] = {}
    for r in resolutions:
        if scope is None or r.language == scope:
            seen.setdefault((r.name, r.language), r)
    return list(seen.values())


def disagreement_rate(resolutions: Iterable[GenderResolution], scope: str) -> Fraction:
    """Share of unique names in ``scope`` whose two verdicts differ."""
    names = _unique(resolutions, scope)
    if not names:
        raise UndefinedMetricError(f"no resolved names for language {scope!r}")
    return Fraction(sum(1 for r in names if r.verdicts_differ), len(names))


def oracle_accuracy(
    resolutions: Iterable[GenderResolution],
    gold: Registry,
    scope: Optional[str] = None,
) -> dict[str, Any]:
    """
    Agreement of each oracle, and of the resolved label, with a gold
    labelling.  Unknown / unresolved count as wrong.
    """
    labelled = [(r, gold.lookup(r.name)) for r in _unique(resolutions, scope)]
    labelled = [(r, g) for r, g in labelled if g is not None]
    if not labelled:
        raise UndefinedMetricError("no gold-labelled names among the resolutions")
    n = len(labelled)
    out: dict[str, Any] = {"n": n}
    for i, oracle_id in enumerate(("A", "B")):
        out[oracle_id] = Fraction(sum(1 for r, g in labelled if r.verdicts[i].label == g), n)
    out["resolved"] = Fraction(sum(1 for r, g in labelled if r.label.value == g.value), n)
    return out
