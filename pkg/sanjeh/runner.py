"""
AuditRun — end-to-end pipeline for one run configuration.

Architecture:
    trace (Session) ←→ ProviderClients / OracleClients ←→ VerdictCache
                                    ↓
                               run log (JSONL)  →  metrics  →  report

Each run:
    1. Loads catalog, templates, registry and name rules; enumerates the plan
    2. Probes every plan task without a completed record (bounded per endpoint)
    3. Resolves each distinct (name, language) not yet resolved
    4. Scores: category stats, DS-GSI per domain, groups, language gap, coverage
    5. Writes tables and figures into ``out_dir``

Provider / oracle / replay errors abort a single task or name; everything
completed so far is already in the run log, so ``resume`` picks up the
remainder.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import httpx

from .catalog import DomainCatalog, load_catalog
from .config import RunConfig, config_hash
from .errors import OracleError, ProviderError, ReplayError, UndefinedMetricError
from .genderres import OracleClient, Registry, load_registry, oracle_accuracy, resolve_name
from .metrics import coverage_report, domain_summary, group_stats, language_gap
from .models import GenderResolution, GenerationRecord, RunMode
from .namenorm import NameRules
from .prompting import ProbeTask, enumerate_probes, load_templates
from .provider import ProviderClient, Session, open_session, run_probe
from .report import ReportBundle, build_report
from .runlog import LoadedLog, RunLog
from .verdict_cache import VerdictCache

log = logging.getLogger(__name__)

HttpFactory = Callable[[], httpx.AsyncClient]


@dataclass
class RunOutcome:
    plan_size: int
    records: dict[str, GenerationRecord] = field(default_factory=dict)
    resolutions: dict[tuple[str, str], GenderResolution] = field(default_factory=dict)
    aborted: dict[str, str] = field(default_factory=dict)      # task key → reason
    unresolved: dict[str, str] = field(default_factory=dict)   # name key → reason
    new_records: int = 0
    paths: list[Path] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.aborted and not self.unresolved and len(self.records) == self.plan_size

    def missing_keys(self, plan: list[ProbeTask]) -> list[str]:
        return [t.key for t in plan if t.key not in self.records]


class AuditRun:
    """
    Parameters:
        config         validated RunConfig
        http_factory   builds the AsyncClient for record mode
                       (tests pass one bound to an in-process ASGI app)
        cache          verdict cache; default built from ``config.redis_url``
    """

    def __init__(
        self,
        config: RunConfig,
        *,
        http_factory: Optional[HttpFactory] = None,
        cache: Optional[VerdictCache] = None,
    ):
        self.config = config
        self.http_factory = http_factory or httpx.AsyncClient
        self.cache = cache

        self.catalog: DomainCatalog = load_catalog(config.catalog_path)
        self.templates = load_templates(config.template_path)
        self.registry: Registry = load_registry(config.registry_path)
        self.rules = NameRules.from_files(config.allowlist_path, config.honorifics_path,
                                          config.max_name_tokens)
        self.plan: list[ProbeTask] = enumerate_probes(config, self.catalog, self.templates)
        self.config_hash = config_hash(config)

    # ── public entry points ──────────────────────────────────────────────

    def run(self) -> RunOutcome:
        """Fresh run: the run log is recreated once the trace session is open."""
        session = open_session(self.config.mode, self.config.trace_path)
        with session, RunLog.create(self.config.run_log_path, self.config) as runlog:
            outcome = asyncio.run(self._execute(session, runlog, None))
        return self._finish(outcome)

    def resume(self, log_path: Union[str, Path, None] = None) -> RunOutcome:
        """Continue from an existing run log; refuses on a config mismatch."""
        path = Path(log_path) if log_path is not None else self.config.run_log_path
        runlog, loaded = RunLog.reopen(path, self.config)
        with runlog, open_session(self.config.mode, self.config.trace_path) as session:
            outcome = asyncio.run(self._execute(session, runlog, loaded))
        return self._finish(outcome)

    def report_from_log(self, loaded: LoadedLog, out_dir: Union[str, Path],
                        gold: Optional[Registry] = None) -> RunOutcome:
        """Recompute metrics from logged records only; no session is opened."""
        plan_keys = {t.key for t in self.plan}
        outcome = RunOutcome(
            plan_size=len(self.plan),
            records={k: r for k, r in loaded.records.items() if k in plan_keys},
            resolutions=dict(loaded.resolutions),
        )
        for rec in outcome.records.values():
            if rec.ok and (rec.name, rec.task.language) not in outcome.resolutions:
                outcome.unresolved[f"{rec.task.language}/{rec.name}"] = "no resolution in log"
        return self._finish(outcome, out_dir=Path(out_dir), gold=gold)

    # ── pipeline ─────────────────────────────────────────────────────────

    async def _execute(self, session: Session, runlog: RunLog,
                       loaded: Optional[LoadedLog]) -> RunOutcome:
        cfg = self.config
        outcome = RunOutcome(plan_size=len(self.plan))
        if loaded is not None:
            outcome.records.update(loaded.records)
            outcome.resolutions.update(loaded.resolutions)

        todo = [t for t in self.plan if t.key not in outcome.records]
        log.info("plan: %d tasks, %d already done, %d to probe",
                 len(self.plan), len(self.plan) - len(todo), len(todo))

        cache = self.cache or VerdictCache(url=cfg.redis_url)
        http = self.http_factory() if cfg.mode == RunMode.RECORD else None
        try:
            providers = {
                m.model_id: ProviderClient(m, http, transport_retries=cfg.transport_retries,
                                           backoff_s=cfg.transport_backoff_s)
                for m in cfg.models
            }
            oracles = (
                OracleClient(cfg.oracle("A"), http, country_hint=cfg.country_hint,
                             transport_retries=cfg.transport_retries,
                             backoff_s=cfg.transport_backoff_s),
                OracleClient(cfg.oracle("B"), http, country_hint=cfg.country_hint,
                             transport_retries=cfg.transport_retries,
                             backoff_s=cfg.transport_backoff_s),
            )
            validators = {lang: self.rules.validator(lang) for lang in cfg.languages}

            async def probe(task: ProbeTask) -> None:
                try:
                    rec = await run_probe(task, providers[task.model_id],
                                          validators[task.language], session,
                                          cfg.retry_limit)
                except (ProviderError, ReplayError) as e:
                    outcome.aborted[task.key] = str(e)
                    log.warning("aborted %s: %s", task.key, e)
                    return
                outcome.records[task.key] = rec
                outcome.new_records += 1
                runlog.append_record(rec)

            await asyncio.gather(*(probe(t) for t in todo))

            # barrier: resolve every distinct accepted name still lacking a label
            pending = sorted({(r.name, r.task.language) for r in outcome.records.values()
                              if r.ok and (r.name, r.task.language) not in outcome.resolutions})

            async def resolve_one(name: str, language: str) -> None:
                try:
                    res = await resolve_name(name, language, oracles, session,
                                             self.registry, cache)
                except (OracleError, ReplayError) as e:
                    outcome.unresolved[f"{language}/{name}"] = str(e)
                    log.warning("oracle lookup failed for %s/%s: %s", language, name, e)
                    return
                outcome.resolutions[(name, language)] = res
                runlog.append_resolution(res)

            await asyncio.gather(*(resolve_one(n, lang) for n, lang in pending))
            log.info("trace: %d served, %d appended", session.served, session.appended)
        finally:
            if http is not None:
                await http.aclose()
            if self.cache is None:
                await cache.close()
        return outcome

    # ── scoring + reports ────────────────────────────────────────────────

    def _finish(self, outcome: RunOutcome, out_dir: Optional[Path] = None,
                gold: Optional[Registry] = None) -> RunOutcome:
        cfg = self.config
        summary = domain_summary(outcome.records, outcome.resolutions, self.plan)
        groups = group_stats(summary.stats, self.catalog)
        gaps = (language_gap(summary.skews, base="fa", other="en")
                if {"fa", "en"} <= set(cfg.languages) else [])
        used = {(r.name, r.task.language) for r in outcome.records.values() if r.ok}
        resolutions = [outcome.resolutions[k] for k in sorted(used)
                       if k in outcome.resolutions]

        meta = {
            "config_hash": self.config_hash,
            "trace_path": str(cfg.trace_path),
            "mode": cfg.mode.value,
            "catalog_version": self.catalog.version,
            "registry_provenance": self.registry.provenance,
            "name_policy": self.rules.describe(),
            "plan_size": len(self.plan),
            "trials_per_category": cfg.trials_per_category,
            "retry_limit": cfg.retry_limit,
            "models": [m.model_id for m in cfg.models],
            "languages": list(cfg.languages),
            "decoding": {m.model_id: m.decoding.model_dump() for m in cfg.models},
            "coverage": coverage_report(summary.stats, resolutions),
            "missing_tasks": sorted(set(outcome.missing_keys(self.plan)) | set(outcome.aborted)),
            "unresolved_names": sorted(outcome.unresolved),
        }
        if gold is not None:
            try:
                meta["oracle_accuracy"] = oracle_accuracy(resolutions, gold)
            except UndefinedMetricError as e:
                log.warning("oracle accuracy skipped: %s", e)
                meta["oracle_accuracy"] = None
        outcome.meta = meta

        bundle = ReportBundle(summary=summary, groups=groups, gaps=gaps, meta=meta)
        outcome.paths = build_report(bundle, self.catalog,
                                     [m.model_id for m in cfg.models], cfg.languages,
                                     out_dir or cfg.out_dir)
        return outcome
