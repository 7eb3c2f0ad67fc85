"""
namenorm — turn a raw model response into one normalized given name.

Pipeline (``validate_name``):

    extract_name       strip quotes / punctuation / honorifics, reject
                       sentences, long answers, non-letters, wrong script
    normalize_unicode  NFC, Arabic → Persian letter variants, zero-width
                       cleanup (ZWNJ kept inside words only)
    strip_surname      keep the first token unless allowlisted
    validate_script    fa: Arabic-script block letters + ZWNJ
                       en: Latin letters, apostrophe, hyphen

Rejection is a value (``rejected_reason``), never an exception: the
provider retries on any rejected candidate.  The pipeline is idempotent.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict

from .catalog import DATA_DIR

DEFAULT_ALLOWLIST = DATA_DIR / "allowlist.txt"
DEFAULT_HONORIFICS = DATA_DIR / "honorifics.txt"
DEFAULT_MAX_TOKENS = 3

Script = Literal["persian", "latin"]
RejectReason = Literal["empty", "multi_sentence", "non_name", "wrong_script"]

ZWNJ = "\u200c"
SCRIPT_OF: dict[str, Script] = {"fa": "persian", "en": "latin"}

# Arabic code points that have a distinct Persian form
ARABIC_TO_PERSIAN = {
    "\u064a": "\u06cc",     # yeh
    "\u0649": "\u06cc",     # alef maksura
    "\u0643": "\u06a9",     # kaf
}
# tatweel, zero-width space/joiner, direction marks, word joiner, BOM, soft hyphen
_DROP = re.compile("[\u0640\u200b\u200d\u200e\u200f\u2060\ufeff\u00ad]")
_ZWNJ_RUN = re.compile("\u200c+")
_ZWNJ_AT_SPACE = re.compile(r"\u200c+(?=\s)|(?<=\s)\u200c+")
_SPACES = re.compile(r"\s+")

_EDGE_CHARS = (
    " \t\r\n\u00a0" + ZWNJ
    + "\"'`*_~-"
    + "\u201c\u201d\u2018\u2019\u00ab\u00bb\u201e\u2039\u203a"
    + ".,;:!?()[]{}<>"
    + "\u060c\u061b\u061f\u06d4"
)
_SENTENCE_MARKS = re.compile("[.?!\u061f\u06d4\n\r]")
_EXTRA_NAME_CHARS = {" ", ZWNJ, "'", "\u2019", "-"}

_ARABIC_LETTERS = "\u0600-\u06ff\ufb50-\ufdff"
_LATIN_LETTERS = "A-Za-z\u00c0-\u00d6\u00d8-\u00f6\u00f8-\u024f"
_ARABIC_LETTER = re.compile(f"[{_ARABIC_LETTERS}]")
_LATIN_LETTER = re.compile(f"[{_LATIN_LETTERS}]")

_PERSIAN_NAME = re.compile(
    f"^[{_ARABIC_LETTERS}\u200c]+(?: [{_ARABIC_LETTERS}\u200c]+)*$")
_LATIN_NAME = re.compile(
    f"^[{_LATIN_LETTERS}'\u2019-]+(?: [{_LATIN_LETTERS}'\u2019-]+)*$")
_NAME_PATTERN = {"persian": _PERSIAN_NAME, "latin": _LATIN_NAME}


class NameCandidate(BaseModel):
    model_config = ConfigDict(frozen=True)

    raw: str
    language: str
    normalized: str = ""
    script: Optional[Script] = None
    rejected_reason: Optional[RejectReason] = None

    @property
    def accepted(self) -> bool:
        return self.rejected_reason is None

    def reject(self, reason: RejectReason) -> NameCandidate:
        return self.model_copy(update={"normalized": "", "rejected_reason": reason})


# ═══════════════════════════════════════════════════════════════════════════
# Rules (allowlist / honorifics / max tokens)
# ═══════════════════════════════════════════════════════════════════════════

def load_word_list(path: Union[str, Path]) -> list[str]:
    """One entry per line; blank lines and ``#`` comments skipped."""
    out: list[str] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


@dataclass(frozen=True)
class NameRules:
    allowlist: frozenset[str] = field(default_factory=frozenset)
    honorifics: frozenset[str] = field(default_factory=frozenset)
    max_tokens: int = DEFAULT_MAX_TOKENS

    @classmethod
    def build(
        cls,
        allowlist: tuple[str, ...] | list[str] = (),
        honorifics: tuple[str, ...] | list[str] = (),
        max_tokens: int = DEFAULT_MAX_TOKENS,
    ) -> NameRules:
        return cls(
            allowlist=frozenset(_casefold_key(normalize_text(a)) for a in allowlist),
            honorifics=frozenset(_honorific_key(h) for h in honorifics),
            max_tokens=max_tokens,
        )

    @classmethod
    def from_files(
        cls,
        allowlist_path: Union[str, Path, None] = DEFAULT_ALLOWLIST,
        honorifics_path: Union[str, Path, None] = DEFAULT_HONORIFICS,
        max_tokens: int = DEFAULT_MAX_TOKENS,
    ) -> NameRules:
        allow = load_word_list(allowlist_path) if allowlist_path else []
        hons = load_word_list(honorifics_path) if honorifics_path else []
        return cls.build(allow, hons, max_tokens)

    def describe(self) -> dict:
        """Policy summary recorded in run metadata."""
        return {
            "allowlist": sorted(self.allowlist),
            "honorifics": sorted(self.honorifics),
            "max_tokens": self.max_tokens,
            "surname_rule": "first_token_unless_allowlisted",
        }

    def validator(self, language: str) -> Callable[[str], NameCandidate]:
        return partial(validate_name, language=language, rules=self)


def _casefold_key(s: str) -> str:
    return s.casefold()


def _honorific_key(s: str) -> str:
    return normalize_text(s).rstrip(".").casefold()


# ═══════════════════════════════════════════════════════════════════════════
# Pipeline stages
# ═══════════════════════════════════════════════════════════════════════════

def extract_name(
    raw: str,
    language: str,
    honorifics: frozenset[str] = frozenset(),
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> NameCandidate:
    cand = NameCandidate(raw=raw, language=language, script=SCRIPT_OF.get(language))

    text = raw.strip(_EDGE_CHARS)
    if not text:
        return cand.reject("empty")

    tokens = text.split()
    while len(tokens) > 1 and _honorific_key(tokens[0]) in honorifics:
        tokens = tokens[1:]
    text = " ".join(tokens).strip(_EDGE_CHARS)
    if not text:
        return cand.reject("empty")

    if _SENTENCE_MARKS.search(text):
        return cand.reject("multi_sentence")
    if len(text.split()) > max_tokens:
        return cand.reject("non_name")
    for ch in text:
        if ch in _EXTRA_NAME_CHARS or ch.isspace():
            continue
        if unicodedata.category(ch)[0] not in "LM":
            return cand.reject("non_name")

    has_arabic = bool(_ARABIC_LETTER.search(text))
    has_latin = bool(_LATIN_LETTER.search(text))
    if has_arabic and has_latin:
        return cand.reject("wrong_script")
    script: Optional[Script] = ("persian" if has_arabic
                                else "latin" if has_latin else None)
    if script is None:
        return cand.reject("wrong_script")
    expected = SCRIPT_OF.get(language)
    if expected is not None and script != expected:
        return cand.model_copy(update={
            "script": script, "normalized": "", "rejected_reason": "wrong_script"})
    return cand.model_copy(update={"normalized": _SPACES.sub(" ", text),
                                   "script": script})


def normalize_text(s: str) -> str:
    s = unicodedata.normalize("NFC", s)
    s = "".join(ARABIC_TO_PERSIAN.get(c, c) for c in s)
    s = _DROP.sub("", s)
    s = _ZWNJ_RUN.sub(ZWNJ, s)
    s = _ZWNJ_AT_SPACE.sub("", s)
    s = _SPACES.sub(" ", s)
    return s.strip(" " + ZWNJ)


def normalize_unicode(candidate: NameCandidate) -> NameCandidate:
    if not candidate.accepted:
        return candidate
    text = normalize_text(candidate.normalized)
    if not text:
        return candidate.reject("empty")
    return candidate.model_copy(update={"normalized": text})


def strip_surname(
    candidate: NameCandidate, allowlist: frozenset[str] = frozenset(),
) -> NameCandidate:
    if not candidate.accepted:
        return candidate
    tokens = candidate.normalized.split(" ")
    if len(tokens) == 1 or _casefold_key(candidate.normalized) in allowlist:
        return candidate
    # "Anne- Marie" keeps "Anne", not "Anne-"
    return candidate.model_copy(update={"normalized": tokens[0].strip(_EDGE_CHARS)})


def validate_script(candidate: NameCandidate, language: str) -> NameCandidate:
    if not candidate.accepted:
        return candidate
    expected = SCRIPT_OF.get(language)
    if expected is None:
        return candidate
    if not _NAME_PATTERN[expected].match(candidate.normalized):
        return candidate.reject("wrong_script")
    return candidate.model_copy(update={"script": expected})


def validate_name(
    raw: str, language: str, rules: NameRules = NameRules(),
) -> NameCandidate:
    cand = extract_name(raw, language, rules.honorifics, rules.max_tokens)
    cand = normalize_unicode(cand)
    cand = strip_surname(cand, rules.allowlist)
    return validate_script(cand, language)
