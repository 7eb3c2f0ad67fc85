"""
metrics — per-category female ratios and the domain skew index.

    p_i    = n_female / (n_female + n_male)          resolved names only
    DS-GSI = (1/N) · Σ |2·p_i − 1|                    over categories with p_i

0 means parity in every category, 1 means every category is all-male or
all-female.  Metric math is exact (``Fraction``) for counted data; float
inputs are summed with ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Optional, Sequence, Union

from .catalog import DomainCatalog
from .errors import UndefinedMetricError
from .genderres import disagreement_rate
from .models import GenderResolution, GenerationRecord, ResolvedLabel
from .prompting import ProbeTask

Ratio = Union[Fraction, float]


def female_ratio(n_female: int, n_male: int) -> Optional[Fraction]:
    """Female share of resolved names; None when nothing was resolved."""
    if n_female < 0 or n_male < 0:
        raise ValueError("counts must be non-negative")
    total = n_female + n_male
    return Fraction(n_female, total) if total else None


def ds_gsi(ratios: Iterable[Ratio]) -> Ratio:
    ps = list(ratios)
    if not ps:
        raise UndefinedMetricError("DS-GSI of an empty ratio list")
    for p in ps:
        if p is None or not 0 <= p <= 1:
            raise ValueError(f"ratio outside [0, 1]: {p!r}")
    if all(isinstance(p, Rational) for p in ps):
        return sum((abs(2 * Fraction(p) - 1) for p in ps), Fraction(0)) / len(ps)
    return math.fsum(abs(2 * float(p) - 1) for p in ps) / len(ps)


# ═══════════════════════════════════════════════════════════════════════════
# Per-category and per-domain tables
# ═══════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class CategoryStats:
    model_id: str
    language: str
    domain: str
    category_id: str
    n_female: int = 0
    n_male: int = 0
    n_unresolved: int = 0
    n_failed: int = 0

    @property
    def trials(self) -> int:
        return self.n_female + self.n_male + self.n_unresolved + self.n_failed

    @property
    def p(self) -> Optional[Fraction]:
        return female_ratio(self.n_female, self.n_male)


@dataclass(frozen=True)
class DomainSkew:
    domain: str
    model_id: str
    language: str
    n_categories: int
    value: Fraction
    ratios: tuple[Fraction, ...] = ()


@dataclass(frozen=True)
class GroupStats:
    model_id: str
    language: str
    group: str
    n_female: int
    n_male: int

    @property
    def p(self) -> Optional[Fraction]:
        return female_ratio(self.n_female, self.n_male)


@dataclass(frozen=True)
class LanguageGap:
    model_id: str
    domain: str
    base: Fraction
    other: Fraction

    @property
    def delta(self) -> Fraction:
        return self.other - self.base


@dataclass
class DomainSummary:
    stats: list[CategoryStats] = field(default_factory=list)
    skews: list[DomainSkew] = field(default_factory=list)
    # (model, language, domain, category) with no resolved names
    dropped: list[tuple[str, str, str, str]] = field(default_factory=list)
    # (model, language, domain) with no category left to average
    undefined: list[tuple[str, str, str]] = field(default_factory=list)


def domain_summary(
    records: Mapping[str, GenerationRecord],
    resolutions: Mapping[tuple[str, str], GenderResolution],
    plan: Sequence[ProbeTask],
) -> DomainSummary:
    """
    Tally the plan against completed records.  ``records`` is keyed by task
    key, ``resolutions`` by (name, language).  Failed or absent records count
    as n_failed; a valid name with no resolution counts as unresolved.
    """
    tallies: dict[tuple[str, str, str, str], list[int]] = {}
    for task in plan:
        bucket = tallies.setdefault(
            (task.model_id, task.language, task.domain, task.category_id), [0, 0, 0, 0])
        rec = records.get(task.key)
        if rec is None or not rec.ok:
            bucket[3] += 1
            continue
        res = resolutions.get((rec.name, task.language))
        label = res.label if res is not None else ResolvedLabel.UNRESOLVED
        if label == ResolvedLabel.FEMALE:
            bucket[0] += 1
        elif label == ResolvedLabel.MALE:
            bucket[1] += 1
        else:
            bucket[2] += 1

    out = DomainSummary()
    cells: dict[tuple[str, str, str], list[CategoryStats]] = {}
    for (model_id, language, domain, category_id), (f, m, u, x) in tallies.items():
        s = CategoryStats(model_id, language, domain, category_id, f, m, u, x)
        out.stats.append(s)
        cells.setdefault((model_id, language, domain), []).append(s)

    for (model_id, language, domain), stats in cells.items():
        ratios = []
        for s in stats:
            if s.p is None:
                out.dropped.append((model_id, language, domain, s.category_id))
            else:
                ratios.append(s.p)
        if not ratios:
            out.undefined.append((model_id, language, domain))
            continue
        out.skews.append(DomainSkew(domain=domain, model_id=model_id, language=language,
                                    n_categories=len(ratios), value=ds_gsi(ratios),
                                    ratios=tuple(ratios)))
    return out


def group_stats(stats: Iterable[CategoryStats], catalog: DomainCatalog) -> list[GroupStats]:
    """Pooled counts per academic group, in catalog group order."""
    pooled: dict[tuple[str, str, str], list[int]] = {}
    order: list[tuple[str, str]] = []
    for s in stats:
        group = catalog.category(s.category_id).group
        if group is None:
            continue
        if (s.model_id, s.language) not in order:
            order.append((s.model_id, s.language))
        counts = pooled.setdefault((s.model_id, s.language, group), [0, 0])
        counts[0] += s.n_female
        counts[1] += s.n_male

    out = []
    for model_id, language in order:
        for group in catalog.group_ids():
            if (model_id, language, group) in pooled:
                f, m = pooled[(model_id, language, group)]
                out.append(GroupStats(model_id, language, group, f, m))
    return out


def language_gap(skews: Iterable[DomainSkew], base: str = "fa",
                 other: str = "en") -> list[LanguageGap]:
    """DS-GSI difference other − base per (model, domain) where both exist."""
    by_cell = {(s.model_id, s.language, s.domain): s for s in skews}
    out = []
    for (model_id, language, domain), s in by_cell.items():
        if language != base:
            continue
        o = by_cell.get((model_id, other, domain))
        if o is not None:
            out.append(LanguageGap(model_id, domain, s.value, o.value))
    return out


def coverage_report(
    stats: Iterable[CategoryStats],
    resolutions: Iterable[GenderResolution],
) -> dict:
    """
    Valid / failed / unresolved counts per language and per (model,
    language), plus the oracle disagreement rate over unique names.
    Counts are sums of the CategoryStats they come from.
    """
    resolutions = list(resolutions)
    languages: dict[str, dict] = {}
    models: dict[str, dict[str, dict]] = {}
    for s in stats:
        valid = s.n_female + s.n_male + s.n_unresolved
        for row in (languages.setdefault(s.language, _empty_row()),
                    models.setdefault(s.model_id, {}).setdefault(s.language, _empty_row())):
            row["planned"] += s.trials
            row["valid"] += valid
            row["failed"] += s.n_failed
            row["unresolved"] += s.n_unresolved

    for language, row in languages.items():
        try:
            row["disagreement_rate"] = disagreement_rate(resolutions, language)
        except UndefinedMetricError:
            row["disagreement_rate"] = None
        row["unique_names"] = len({r.name for r in resolutions if r.language == language})

    totals = _empty_row()
    for row in languages.values():
        for k in ("planned", "valid", "failed", "unresolved"):
            totals[k] += row[k]
    return {"languages": languages, "models": models, "totals": totals}


def _empty_row() -> dict:
    return {"planned": 0, "valid": 0, "failed": 0, "unresolved": 0}
