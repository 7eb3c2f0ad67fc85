"""
catalog — the fixed domain / category catalog, loaded from a JSON document.

Document shape (see docs/schemas.md):

    {
      "version":    "1.0.0",
      "languages":  ["fa", "en"],
      "domains":    [{"id", "display_names": {lang: str}}],
      "groups":     [{"id", "display_names": {lang: str}}],      optional
      "categories": [{"id", "domain", "group"?, "labels": {lang: str},
                      "editorial"?: bool}]
    }

The bundled catalog holds 96 categories: 66 academic fields in 10 groups,
10 professions, 10 colors, 10 sports.  Load order is document order.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from .errors import CatalogError

DATA_DIR = Path(__file__).resolve().parent / "data"
DEFAULT_CATALOG = DATA_DIR / "catalog.json"

ACADEMIC = "academic_discipline"
DOMAIN_SIZES: dict[str, int] = {
    ACADEMIC: 66,
    "profession": 10,
    "color": 10,
    "sport": 10,
}
ACADEMIC_GROUP_COUNT = 10


class Domain(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str
    display_names: dict[str, str]


class Group(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str
    display_names: dict[str, str]


class Category(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str = Field(min_length=1)
    domain: str
    labels: dict[str, str]
    group: Optional[str] = None
    editorial: bool = False


class DomainCatalog(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    version: str = "0"
    notes: str = ""
    languages: tuple[str, ...]
    domains: tuple[Domain, ...]
    groups: tuple[Group, ...] = ()
    categories: tuple[Category, ...]

    @property
    def domain_ids(self) -> list[str]:
        return [d.id for d in self.domains]

    def category(self, category_id: str) -> Category:
        for c in self.categories:
            if c.id == category_id:
                return c
        raise CatalogError(f"unknown category id: {category_id!r}")

    def group_ids(self) -> list[str]:
        """Academic groups in first-appearance order."""
        seen: list[str] = []
        for c in self.categories:
            if c.group and c.group not in seen:
                seen.append(c.group)
        return seen

    def group_name(self, group_id: str, language: str = "en") -> str:
        for g in self.groups:
            if g.id == group_id:
                return g.display_names.get(language, group_id)
        return group_id


# ── loading ──────────────────────────────────────────────────────────────

def load_catalog(source: Union[str, Path, None] = None) -> DomainCatalog:
    """Load and validate a catalog file (the bundled one when ``source`` is None)."""
    path = Path(source) if source is not None else DEFAULT_CATALOG
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CatalogError(f"cannot read catalog {path}: {e}") from e
    return parse_catalog(text, origin=str(path))


def parse_catalog(text: str, origin: str = "<catalog>") -> DomainCatalog:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise CatalogError(
            f"{origin}: line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e
    try:
        catalog = DomainCatalog.model_validate(raw)
    except PydanticValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise CatalogError(f"{origin}: field {loc}: {first['msg']}") from e
    _validate(catalog, origin)
    return catalog


def _validate(catalog: DomainCatalog, origin: str) -> None:
    problems: list[str] = []
    languages = list(catalog.languages)
    if not languages or len(set(languages)) != len(languages):
        problems.append("languages must be a non-empty list of unique codes")

    domain_ids = catalog.domain_ids
    if sorted(domain_ids) != sorted(DOMAIN_SIZES):
        problems.append(
            f"domains: expected exactly {sorted(DOMAIN_SIZES)}, found {domain_ids}"
        )
    for d in catalog.domains:
        missing = [lang for lang in languages if not d.display_names.get(lang)]
        if missing:
            problems.append(f"domain {d.id}: missing display names for {missing}")

    known_groups = {g.id for g in catalog.groups}
    seen: set[str] = set()
    for c in catalog.categories:
        if c.id in seen:
            problems.append(f"duplicate category id: {c.id}")
        seen.add(c.id)
        if c.domain not in DOMAIN_SIZES:
            problems.append(f"category {c.id}: unknown domain {c.domain!r}")
        missing = [lang for lang in languages if not c.labels.get(lang, "").strip()]
        if missing:
            problems.append(f"category {c.id}: missing labels for {missing}")
        if c.domain == ACADEMIC:
            if not c.group:
                problems.append(f"category {c.id}: academic categories need a group")
            elif known_groups and c.group not in known_groups:
                problems.append(f"category {c.id}: unknown group {c.group!r}")
        elif c.group is not None:
            problems.append(f"category {c.id}: only academic categories carry a group")

    for domain, expected in DOMAIN_SIZES.items():
        found = sum(1 for c in catalog.categories if c.domain == domain)
        if found != expected:
            problems.append(f"{domain}: expected {expected}, found {found}")

    n_groups = len({c.group for c in catalog.categories
                    if c.domain == ACADEMIC and c.group})
    if n_groups != ACADEMIC_GROUP_COUNT:
        problems.append(
            f"{ACADEMIC} groups: expected {ACADEMIC_GROUP_COUNT}, found {n_groups}"
        )

    if problems:
        raise CatalogError(f"{origin}: " + "; ".join(problems))


# ── queries ──────────────────────────────────────────────────────────────

def categories_of(catalog: DomainCatalog, domain: str) -> list[Category]:
    """Categories of one domain, in catalog order."""
    if domain not in catalog.domain_ids:
        raise CatalogError(f"unknown domain id: {domain!r}")
    return [c for c in catalog.categories if c.domain == domain]


def label_of(category: Category, language: str) -> str:
    """The exact label substituted into prompts for ``language``."""
    try:
        return category.labels[language]
    except KeyError:
        raise CatalogError(
            f"language not configured: {language!r} (category {category.id})"
        ) from None
