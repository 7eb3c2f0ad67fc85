"""
prompting — two-part probe prompts and the canonical probe plan.

A rendered prompt is the template instruction followed by the sentence,
wrapped in sentence markers:

    <instruction> <sentence> <sentence with label> </sentence>

Plan order is (model, language, domain, category, trial), following the
config's model and language lists and the catalog's domain and category
order.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Union

from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from .catalog import DATA_DIR, Category, DomainCatalog, categories_of, label_of
from .errors import TemplateError
from .models import TaskKey

if TYPE_CHECKING:
    from .config import RunConfig

DEFAULT_TEMPLATES = DATA_DIR / "templates.json"

PLACEHOLDER = "{label}"
SENTENCE_OPEN = "<sentence>"
SENTENCE_CLOSE = "</sentence>"

# "a {label}" before a vowel-initial English label
_EN_ARTICLE = re.compile(r"\b([Aa]) \{label\}")


class PromptTemplate(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    domain: str
    language: str
    instruction: str = Field(min_length=1)
    sentence_pattern: str

    def check(self) -> None:
        n = self.sentence_pattern.count(PLACEHOLDER)
        if n != 1:
            raise TemplateError(
                f"template ({self.domain}, {self.language}): sentence_pattern "
                f"must contain {PLACEHOLDER} exactly once, found {n}"
            )
        if not self.instruction.strip():
            raise TemplateError(
                f"template ({self.domain}, {self.language}): empty instruction"
            )
        for marker in (SENTENCE_OPEN, SENTENCE_CLOSE):
            if marker in self.instruction or marker in self.sentence_pattern:
                raise TemplateError(
                    f"template ({self.domain}, {self.language}): "
                    f"must not contain {marker}"
                )


class RenderedPrompt(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str
    language: str
    domain: str
    category_id: str

    @property
    def sentence(self) -> str:
        start = self.text.index(SENTENCE_OPEN) + len(SENTENCE_OPEN)
        return self.text[start:self.text.index(SENTENCE_CLOSE)].strip()


class ProbeTask(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    model_id: str
    language: str
    domain: str
    category_id: str
    trial_index: int = Field(ge=0)
    prompt: RenderedPrompt

    @property
    def task_key(self) -> TaskKey:
        return TaskKey(model_id=self.model_id, language=self.language,
                       domain=self.domain, category_id=self.category_id,
                       trial_index=self.trial_index)

    @property
    def key(self) -> str:
        return self.task_key.key


# ── templates ────────────────────────────────────────────────────────────

def load_templates(
    source: Union[str, Path, None] = None,
) -> dict[tuple[str, str], PromptTemplate]:
    """
    Load a template document.  Returns templates keyed by (domain, language)
    in document order.  Empty documents and duplicate pairs are rejected.
    """
    path = Path(source) if source is not None else DEFAULT_TEMPLATES
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise TemplateError(f"cannot read templates {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise TemplateError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e

    entries = raw.get("templates") if isinstance(raw, dict) else raw
    if not entries:
        raise TemplateError(f"{path}: no templates")
    return build_templates(entries, origin=str(path))


def build_templates(
    entries: Iterable[dict], origin: str = "<templates>",
) -> dict[tuple[str, str], PromptTemplate]:
    out: dict[tuple[str, str], PromptTemplate] = {}
    for i, entry in enumerate(entries):
        try:
            t = PromptTemplate.model_validate(entry)
        except PydanticValidationError as e:
            first = e.errors()[0]
            loc = ".".join(str(p) for p in first["loc"])
            raise TemplateError(f"{origin}: template #{i}: {loc}: {first['msg']}") from e
        t.check()
        pair = (t.domain, t.language)
        if pair in out:
            raise TemplateError(f"{origin}: duplicate template for {pair}")
        out[pair] = t
    if not out:
        raise TemplateError(f"{origin}: no templates")
    return out


def render_prompt(
    template: PromptTemplate, category: Category, catalog: DomainCatalog,
) -> RenderedPrompt:
    template.check()
    if category.domain != template.domain:
        raise TemplateError(
            f"category {category.id} belongs to {category.domain}, "
            f"template is for {template.domain}"
        )
    if template.language not in catalog.languages:
        raise TemplateError(f"language not in catalog: {template.language!r}")
    label = label_of(category, template.language)

    pattern = template.sentence_pattern
    if template.language == "en" and label[:1].lower() in "aeiou":
        pattern = _EN_ARTICLE.sub(lambda m: f"{m.group(1)}n {PLACEHOLDER}", pattern)
    sentence = pattern.replace(PLACEHOLDER, label)

    text = f"{template.instruction} {SENTENCE_OPEN} {sentence} {SENTENCE_CLOSE}"
    return RenderedPrompt(text=text, language=template.language,
                          domain=category.domain, category_id=category.id)


# ── plan ─────────────────────────────────────────────────────────────────

def enumerate_probes(
    config: "RunConfig",
    catalog: DomainCatalog,
    templates: dict[tuple[str, str], PromptTemplate],
) -> list[ProbeTask]:
    trials = config.trials_per_category
    if trials < 1:
        raise TemplateError(f"trials_per_category must be >= 1, got {trials}")
    for language in config.languages:
        for domain in catalog.domain_ids:
            if (domain, language) not in templates:
                raise TemplateError(f"missing template for ({domain}, {language})")

    # render once per (language, category); trials share the prompt
    rendered: dict[tuple[str, str], RenderedPrompt] = {}
    for language in config.languages:
        for domain in catalog.domain_ids:
            for cat in categories_of(catalog, domain):
                rendered[(language, cat.id)] = render_prompt(
                    templates[(domain, language)], cat, catalog)

    plan: list[ProbeTask] = []
    for endpoint in config.models:
        for language in config.languages:
            for domain in catalog.domain_ids:
                for cat in categories_of(catalog, domain):
                    prompt = rendered[(language, cat.id)]
                    for trial in range(trials):
                        plan.append(ProbeTask(
                            model_id=endpoint.model_id, language=language,
                            domain=domain, category_id=cat.id,
                            trial_index=trial, prompt=prompt,
                        ))
    return plan
