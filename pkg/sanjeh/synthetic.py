"""
synthetic — offline replay fixture with designed skews.

Writes into ``out_dir``:

    config.json      two stub models (openai + gemini wire), fa + en, replay
    registry.tsv     tie-break registry covering the designed disagreements
    trace.jsonl      every provider and oracle exchange the run will ask for

Female counts per (model, language, category) follow a fixed pattern
over 0, 0.1, ... 1.0 of the trials.  A few tasks are refused on the first
attempt and some exhaust every attempt; a handful of names make the two
oracles disagree or return unknown.  Endpoint URLs point at the local
stub server so the same config can be re-recorded against it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .catalog import load_catalog
from .config import parse_config
from .genderres import oracle_key, verdict_text
from .models import Gender, OracleVerdict, TraceEntry
from .prompting import ProbeTask, enumerate_probes, load_templates
from .provider import trace_lines

log = logging.getLogger(__name__)

STUB_BASE = "http://127.0.0.1:8765"

FEMALE_NAMES = {
    "en": ["Emily", "Sarah", "Olivia", "Emma", "Sophia"],
    "fa": ["\u0633\u0627\u0631\u0627", "\u0645\u0631\u06cc\u0645",
           "\u0632\u0647\u0631\u0627", "\u0646\u0627\u0632\u0646\u06cc\u0646",
           "\u0641\u0627\u0637\u0645\u0647"],
}
MALE_NAMES = {
    "en": ["James", "Michael", "David", "Daniel", "Liam"],
    "fa": ["\u0639\u0644\u06cc", "\u0631\u0636\u0627", "\u0627\u0645\u06cc\u0631",
           "\u062d\u0633\u06cc\u0646", "\u0645\u062d\u0645\u062f"],
}
# name → (oracle A, oracle B); registry settles the first one of each language
CONTESTED = {
    "en": {"Jordan": (Gender.MALE, Gender.FEMALE),
           "Kai": (Gender.MALE, Gender.FEMALE),
           "Zephyrine": (Gender.UNKNOWN, Gender.UNKNOWN)},
    "fa": {"\u0646\u06cc\u06a9\u06cc": (Gender.FEMALE, Gender.MALE),
           "\u0622\u0633\u0645\u0627\u0646": (Gender.FEMALE, Gender.UNKNOWN)},
}
REGISTRY_ROWS = [("Jordan", Gender.MALE), ("\u0646\u06cc\u06a9\u06cc", Gender.FEMALE)]

REFUSAL = {
    "en": "I'm sorry, I can't help with that.",
    "fa": "\u0645\u062a\u0627\u0633\u0641\u0645\u060c "
          "\u0646\u0645\u06cc\u200c\u062a\u0648\u0627\u0646\u0645 "
          "\u06a9\u0645\u06a9 \u06a9\u0646\u0645.",
}
# a valid-looking name in the other language's script
WRONG_SCRIPT = {"en": "\u0633\u0627\u0631\u0627", "fa": "Sara"}


@dataclass
class SyntheticFixture:
    config_path: Path
    trace_path: Path
    registry_path: Path
    plan_size: int
    exhausted: list[str] = field(default_factory=list)
    retried: list[str] = field(default_factory=list)


def female_count(trials: int, model_index: int, language_index: int,
                 domain_index: int, category_index: int) -> int:
    """Designed number of female answers for one (model, language, category) cell."""
    tenths = (category_index * 7 + domain_index * 3 + model_index * 5 + language_index * 2) % 11
    return trials * tenths // 10


def probe_entries(task: ProbeTask, responses: Sequence[str]) -> list[TraceEntry]:
    """Trace lines for one task answering ``responses`` in attempt order."""
    return [TraceEntry(task_key=task.key, attempt_index=i, request_text=task.prompt.text,
                       response_text=text, latency_ms=0)
            for i, text in enumerate(responses)]


def oracle_entries(name: str, language: str, a: Gender, b: Gender,
                   confidence: float = 0.97) -> list[TraceEntry]:
    out = []
    for oracle_id, label in (("A", a), ("B", b)):
        verdict = OracleVerdict(oracle_id=oracle_id, label=label,
                                confidence=None if label == Gender.UNKNOWN else confidence)
        out.append(TraceEntry(task_key=oracle_key(oracle_id, language, name), attempt_index=0,
                              request_text=name, response_text=verdict_text(verdict),
                              latency_ms=0))
    return out


def fixture_config(trials: int, models: Sequence[str] = ("stub-alpha", "stub-beta"),
                   languages: Sequence[str] = ("fa", "en")) -> dict:
    adapters = ["openai", "gemini"]
    return {
        "models": [
            {"model_id": m, "adapter": adapters[i % 2],
             "base_url": f"{STUB_BASE}/v1" if i % 2 == 0 else f"{STUB_BASE}/v1beta",
             "decoding": {"temperature": 1.0}}
            for i, m in enumerate(models)
        ],
        "oracles": [
            {"oracle_id": "A", "adapter": "genderize", "base_url": f"{STUB_BASE}/genderize"},
            {"oracle_id": "B", "adapter": "namsor", "base_url": f"{STUB_BASE}/namsor"},
        ],
        "languages": list(languages),
        "trials_per_category": trials,
        "mode": "replay",
        "trace_path": "trace.jsonl",
        "out_dir": "report",
        "registry_path": "registry.tsv",
    }


def _responses(task: ProbeTask, female: bool, model_index: int, category_index: int,
               trials: int) -> Optional[list[str]]:
    """Attempt texts for one task; None means the task exhausts its retries."""
    lang = task.language
    t = task.trial_index
    if model_index % 2 == 1 and t == 0 and category_index % 8 == 3:
        return None
    pool = FEMALE_NAMES[lang] if female else MALE_NAMES[lang]
    name = pool[(t + category_index) % len(pool)]
    if t == trials - 1 and trials > 1 and category_index % 5 == 0:
        contested = list(CONTESTED[lang])
        name = contested[(category_index // 5) % len(contested)]
    if model_index % 2 == 1 and t == 0 and category_index % 8 == 5:
        return [REFUSAL[lang], name]
    if model_index % 2 == 0 and t == 1 and category_index % 12 == 7:
        return [WRONG_SCRIPT[lang], name]
    return [name]


def build_synthetic_fixture(
    out_dir: Union[str, Path],
    trials: int = 10,
    models: Sequence[str] = ("stub-alpha", "stub-beta"),
    languages: Sequence[str] = ("fa", "en"),
) -> SyntheticFixture:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw = fixture_config(trials, models, languages)
    config = parse_config(raw, base_dir=out)
    catalog = load_catalog(config.catalog_path)
    plan = enumerate_probes(config, catalog, load_templates(config.template_path))
    retry_limit = config.retry_limit

    domain_index = {d: i for i, d in enumerate(catalog.domain_ids)}
    category_index = {}
    for d in catalog.domain_ids:
        for i, c in enumerate(c for c in catalog.categories if c.domain == d):
            category_index[c.id] = i
    model_index = {m: i for i, m in enumerate(models)}
    language_index = {lang: i for i, lang in enumerate(languages)}

    fixture = SyntheticFixture(config_path=out / "config.json", trace_path=out / "trace.jsonl",
                               registry_path=out / "registry.tsv", plan_size=len(plan))
    entries: list[TraceEntry] = []
    names: dict[tuple[str, str], tuple[Gender, Gender]] = {}
    for task in plan:
        ci = category_index[task.category_id]
        f = female_count(trials, model_index[task.model_id], language_index[task.language],
                         domain_index[task.domain], ci)
        responses = _responses(task, task.trial_index < f, model_index[task.model_id], ci, trials)
        if responses is None:
            responses = [REFUSAL[task.language]] * (retry_limit + 1)
            fixture.exhausted.append(task.key)
        elif len(responses) > 1:
            fixture.retried.append(task.key)
        entries.extend(probe_entries(task, responses))
        name = responses[-1]
        if name in CONTESTED[task.language]:
            names[(name, task.language)] = CONTESTED[task.language][name]
        elif name in FEMALE_NAMES[task.language]:
            names[(name, task.language)] = (Gender.FEMALE, Gender.FEMALE)
        elif name in MALE_NAMES[task.language]:
            names[(name, task.language)] = (Gender.MALE, Gender.MALE)

    for (name, language), (a, b) in sorted(names.items()):
        entries.extend(oracle_entries(name, language, a, b))

    fixture.trace_path.write_text(trace_lines(entries), encoding="utf-8")
    fixture.registry_path.write_text(
        "# provenance: synthetic fixture registry\n"
        + "".join(f"{n}\t{g.value}\n" for n, g in REGISTRY_ROWS),
        encoding="utf-8")
    fixture.config_path.write_text(json.dumps(raw, indent=2, ensure_ascii=False) + "\n",
                                   encoding="utf-8")
    log.info("synthetic fixture: %d tasks, %d trace entries, %d exhausted, in %s",
             len(plan), len(entries), len(fixture.exhausted), out)
    return fixture
