import asyncio
import itertools
from fractions import Fraction

import pytest

from sanjeh.catalog import DATA_DIR
from sanjeh.config import OracleEndpoint
from sanjeh.errors import RegistryError, UndefinedMetricError
from sanjeh.genderres import (
    OracleClient,
    Registry,
    disagreement_rate,
    load_registry,
    oracle_accuracy,
    oracle_key,
    query_oracle,
    resolve,
    resolve_name,
)
from sanjeh.models import Gender, GenderResolution, OracleVerdict, ResolutionSource, RunMode
from sanjeh.provider import RateLimiter, open_session
from sanjeh.report import fmt2
from sanjeh.stub_server import create_stub_app
from sanjeh.verdict_cache import VerdictCache

NEGIN = "\u0646\u06af\u06cc\u0646"
ALI = "\u0639\u0644\u06cc"
ALI_ARABIC_YEH = "\u0639\u0644\u064a"

M, F, U = Gender.MALE, Gender.FEMALE, Gender.UNKNOWN


def verdict(oracle_id, label):
    return OracleVerdict(oracle_id=oracle_id, label=label,
                         confidence=None if label == U else 0.9)


def registry_of(**entries):
    return Registry(entries={k.casefold(): v for k, v in entries.items()}, provenance="test")


def oracles(http):
    a = OracleEndpoint(oracle_id="A", adapter="genderize", base_url="http://stub/genderize",
                       requests_per_minute=6000, api_key_env=None)
    b = OracleEndpoint(oracle_id="B", adapter="namsor", base_url="http://stub/namsor",
                       requests_per_minute=6000)
    hint = {"fa": "IR"}
    return (OracleClient(a, http, country_hint=hint, backoff_s=0),
            OracleClient(b, http, country_hint=hint, backoff_s=0))


# ── decision table ───────────────────────────────────────────────────────

def expected(a, b, hit):
    if a == b and a != U:
        return a.value, "oracles_agree"
    if hit is not None:
        return hit.value, "registry_tiebreak"
    if U in (a, b):
        return "unresolved", "unresolved_unknown"
    return "unresolved", "unresolved_disagreement"


def test_all_27_combinations():
    seen = 0
    for a, b, hit in itertools.product([M, F, U], [M, F, U], [None, M, F]):
        registry = registry_of(Sam=hit) if hit else Registry()
        res = resolve("Sam", verdict("A", a), verdict("B", b), registry, "en")
        assert (res.label.value, res.source.value) == expected(a, b, hit), (a, b, hit)
        assert res.registry_hit == hit
        seen += 1
    assert seen == 27


def test_agreement_ignores_registry():
    res = resolve("Sam", verdict("A", M), verdict("B", M), registry_of(Sam=F))
    assert res.label.value == "male"
    assert res.source == ResolutionSource.ORACLES_AGREE


# ── registry ─────────────────────────────────────────────────────────────

def test_bundled_registry():
    reg = load_registry(DATA_DIR / "registry.tsv")
    assert reg.provenance.startswith("editorial sample")
    assert reg.lookup("emily") == F
    assert reg.lookup(ALI) == M
    # Arabic yeh normalizes onto the Persian entry
    assert reg.lookup(ALI_ARABIC_YEH) == M
    assert reg.lookup("Zephyrine") is None


def test_registry_conflict(tmp_path):
    path = tmp_path / "r.tsv"
    path.write_text("Robin\tmale\nrobin\tfemale\n", encoding="utf-8")
    with pytest.raises(RegistryError, match=r"r.tsv:2: conflicting entries for 'robin'"):
        load_registry(path)


def test_registry_bad_label(tmp_path):
    path = tmp_path / "r.tsv"
    path.write_text("Robin\tunisex\n", encoding="utf-8")
    with pytest.raises(RegistryError, match="gender must be male or female"):
        load_registry(path)


def test_registry_repeated_agreeing_entries(tmp_path):
    path = tmp_path / "r.tsv"
    path.write_text("Robin\tmale\nROBIN\tmale\n", encoding="utf-8")
    assert len(load_registry(path)) == 1


# ── disagreement / accuracy ──────────────────────────────────────────────

def synthetic_resolutions(language, n_names, n_disagree):
    out = []
    for i in range(n_names):
        a = verdict("A", F)
        b = verdict("B", M if i < n_disagree else F)
        out.append(resolve(f"name{i}", a, b, Registry(), language))
    return out


def test_persian_disagreement_rate():
    resolutions = synthetic_resolutions("fa", 190, 25)
    # each name seen twice still counts once
    rate = disagreement_rate(resolutions + resolutions[:40], "fa")
    assert rate == Fraction(25, 190)
    assert fmt2(rate * 100) == "13.16"


def test_english_disagreement_rate():
    rate = disagreement_rate(synthetic_resolutions("en", 2500, 87), "en")
    assert fmt2(rate * 100) == "3.48"


def test_disagreement_rate_empty_scope():
    with pytest.raises(UndefinedMetricError):
        disagreement_rate(synthetic_resolutions("fa", 3, 1), "en")


def test_oracle_accuracy():
    resolutions = [
        resolve("Emily", verdict("A", F), verdict("B", F), Registry(), "en"),
        resolve("Jordan", verdict("A", M), verdict("B", F), registry_of(Jordan=M), "en"),
        resolve("Kai", verdict("A", U), verdict("B", M), Registry(), "en"),
        resolve("Nobody", verdict("A", F), verdict("B", F), Registry(), "en"),
    ]
    gold = registry_of(Emily=F, Jordan=M, Kai=M)
    acc = oracle_accuracy(resolutions, gold)
    assert acc["n"] == 3
    assert acc["A"] == Fraction(2, 3)
    assert acc["B"] == Fraction(2, 3)
    assert acc["resolved"] == Fraction(2, 3)


# ── oracle clients ───────────────────────────────────────────────────────

GENDERS = {"Emily": ("female", 0.98), "James": ("male", 0.99),
           NEGIN: ("female", 0.95), "Jordan": ("male", 0.6)}
NAMSOR = {"Emily": ("female", 0.97), "James": ("male", 0.97),
          NEGIN: ("female", 0.9), "Jordan": ("female", 0.55)}


def test_oracles_in_record_then_replay(tmp_path, stub_http):
    app = create_stub_app(genders=GENDERS, namsor_genders=NAMSOR)
    trace = tmp_path / "trace.jsonl"

    async def record():
        async with stub_http(app) as http:
            a, b = oracles(http)
            with open_session(RunMode.RECORD, trace) as session:
                return (await a.query("Emily", "en", session),
                        await b.query(NEGIN, "fa", session),
                        await a.query("Zephyrine", "en", session))

    emily, negin, unknown = asyncio.run(record())
    assert emily.label == F and emily.confidence == pytest.approx(0.98)
    assert negin.label == F and negin.oracle_id == "B"
    assert unknown.label == U and unknown.confidence is None

    async def replay():
        a, b = oracles(None)
        session = open_session(RunMode.REPLAY, trace)
        return await a.query("Emily", "en", session)

    assert asyncio.run(replay()) == emily
    text = trace.read_text(encoding="utf-8")
    assert oracle_key("A", "en", "Emily") in text


def test_country_hint_and_key_handling(tmp_path, stub_http, monkeypatch):
    monkeypatch.setenv("GENDERIZE_KEY", "gz-secret")
    app = create_stub_app(genders=GENDERS)
    ep = OracleEndpoint(oracle_id="A", adapter="genderize", base_url="http://stub/genderize",
                        api_key_env="GENDERIZE_KEY", requests_per_minute=6000)
    trace = tmp_path / "trace.jsonl"

    async def go():
        async with stub_http(app) as http:
            client = OracleClient(ep, http, country_hint={"fa": "IR"}, backoff_s=0)
            with open_session(RunMode.RECORD, trace) as session:
                await client.query(NEGIN, "fa", session)
                return session.get(oracle_key("A", "fa", NEGIN))

    entry = asyncio.run(go())
    assert entry.request_body == {"params": {"name": NEGIN, "country_id": "IR"}}
    assert "gz-secret" not in trace.read_text(encoding="utf-8")


def test_oracle_retries_respect_the_rate_limit(tmp_path, stub_http):
    now = [0.0]

    async def sleep(seconds):
        now[0] += seconds

    app = create_stub_app(genders=GENDERS, clock=lambda: now[0])
    app.state.stub.fail_next("genderize", 429)
    ep = OracleEndpoint(oracle_id="A", adapter="genderize", base_url="http://stub/genderize",
                        requests_per_minute=1, api_key_env=None)

    async def go():
        async with stub_http(app) as http:
            client = OracleClient(ep, http, backoff_s=0,
                                  limiter=RateLimiter(1, clock=lambda: now[0], sleep=sleep))
            with open_session(RunMode.RECORD, tmp_path / "t.jsonl") as session:
                return await client.query("James", "en", session)

    assert asyncio.run(go()).label == M
    assert app.state.stub.timestamps("genderize") == [0.0, 60.0]


def test_resolve_name_with_registry_tiebreak(tmp_path, stub_http):
    app = create_stub_app(genders=GENDERS, namsor_genders=NAMSOR)

    async def go():
        async with stub_http(app) as http:
            with open_session(RunMode.RECORD, tmp_path / "t.jsonl") as session:
                return await resolve_name("Jordan", "en", oracles(http), session,
                                          registry_of(Jordan=M))

    res = asyncio.run(go())
    assert res.source == ResolutionSource.REGISTRY_TIEBREAK
    assert res.label.value == "male"
    assert res.verdicts_differ
    assert GenderResolution.model_validate(res.model_dump(mode="json")) == res


# ── cache ────────────────────────────────────────────────────────────────

def test_concurrent_identical_queries_hit_the_oracle_once(tmp_path, stub_http):
    app = create_stub_app(genders=GENDERS)

    async def go():
        cache = VerdictCache()
        async with stub_http(app) as http:
            a, _ = oracles(http)
            with open_session(RunMode.RECORD, tmp_path / "t.jsonl") as session:
                got = await asyncio.gather(*(query_oracle(a, "James", "en", session, cache)
                                             for _ in range(8)))
        await cache.close()
        return got, cache

    got, cache = asyncio.run(go())
    assert {v.label for v in got} == {M}
    assert len(app.state.stub.timestamps("genderize")) == 1
    assert cache.misses == 1 and cache.hits == 7
    assert len((tmp_path / "t.jsonl").read_text(encoding="utf-8").splitlines()) == 1


def test_warm_cache_still_writes_the_trace(tmp_path, stub_http):
    app = create_stub_app(genders=GENDERS, namsor_genders=NAMSOR)
    registry = registry_of(Jordan=M)

    async def go():
        cache = VerdictCache()
        async with stub_http(app) as http:
            pair = oracles(http)
            with open_session(RunMode.RECORD, tmp_path / "cold.jsonl") as s:
                cold = await resolve_name("Jordan", "en", pair, s, registry, cache)
            with open_session(RunMode.RECORD, tmp_path / "warm.jsonl") as s:
                warm = await resolve_name("Jordan", "en", pair, s, registry, cache)
            await cache.flush()
            with open_session(RunMode.RECORD, tmp_path / "flushed.jsonl") as s:
                flushed = await resolve_name("Jordan", "en", pair, s, registry, cache)
        await cache.close()
        return cold, warm, flushed

    cold, warm, flushed = asyncio.run(go())
    assert cold == warm == flushed
    # cold and flushed reached both oracles; warm was served from the cache
    assert len(app.state.stub.timestamps()) == 4
    assert len((tmp_path / "warm.jsonl").read_text(encoding="utf-8").splitlines()) == 2

    async def replay():
        session = open_session(RunMode.REPLAY, tmp_path / "warm.jsonl")
        return await resolve_name("Jordan", "en", oracles(None), session, registry)

    assert asyncio.run(replay()) == cold
