"""
Pydantic wire and log records shared across the harness.

Everything that is written to a trace or to the run log is one of these
models, so a line can always be parsed back with ``Model.model_validate``.

    TraceEntry        one recorded exchange (provider attempt or oracle query)
    Attempt           one probe attempt inside a GenerationRecord
    GenerationRecord  outcome of one ProbeTask (1-3 attempts)
    OracleVerdict     one oracle's answer for one name
    GenderResolution  final label for one (name, language) with provenance
"""

from __future__ import annotations

from enum import Enum
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

MAX_ATTEMPTS = 3


class RunMode(str, Enum):
    RECORD = "record"
    REPLAY = "replay"


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"


class ResolvedLabel(str, Enum):
    MALE = "male"
    FEMALE = "female"
    UNRESOLVED = "unresolved"


class ResolutionSource(str, Enum):
    ORACLES_AGREE = "oracles_agree"
    REGISTRY_TIEBREAK = "registry_tiebreak"
    UNRESOLVED_DISAGREEMENT = "unresolved_disagreement"
    UNRESOLVED_UNKNOWN = "unresolved_unknown"


class Verdict(str, Enum):
    VALID_NAME = "valid_name"
    INVALID = "invalid"


# ═══════════════════════════════════════════════════════════════════════════
# Trace
# ═══════════════════════════════════════════════════════════════════════════

class TraceEntry(BaseModel):
    """One line of the append-only trace file."""
    task_key: str
    attempt_index: int = Field(ge=0)
    request_text: str
    response_text: str
    latency_ms: int = Field(ge=0)
    request_body: Optional[Any] = None
    response_body: Optional[str] = None


# ═══════════════════════════════════════════════════════════════════════════
# Generation records
# ═══════════════════════════════════════════════════════════════════════════

class TaskKey(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    model_id: str
    language: str
    domain: str
    category_id: str
    trial_index: int = Field(ge=0)

    @property
    def key(self) -> str:
        return "|".join((self.model_id, self.language, self.domain,
                         self.category_id, str(self.trial_index)))


class Attempt(BaseModel):
    index: int = Field(ge=0, le=MAX_ATTEMPTS - 1)
    request_text: str
    response_text: str
    latency_ms: int = Field(ge=0)
    verdict: Verdict
    reason: Optional[str] = None

    @model_validator(mode="after")
    def _reason_matches_verdict(self) -> Attempt:
        if (self.verdict == Verdict.INVALID) != (self.reason is not None):
            raise ValueError("invalid attempts carry a reason, valid ones do not")
        return self


class GenerationRecord(BaseModel):
    """
    Outcome of one probe.  ``name`` is set iff the last attempt was a valid
    name; otherwise ``failure`` holds the last rejection reason.
    Timestamps are wall-clock and are ignored by ``canonical()``.
    """
    task: TaskKey
    attempts: list[Attempt] = Field(min_length=1, max_length=MAX_ATTEMPTS)
    name: Optional[str] = None
    failure: Optional[str] = None
    started_at: str = ""
    finished_at: str = ""

    @model_validator(mode="after")
    def _outcome_matches_last_attempt(self) -> GenerationRecord:
        last = self.attempts[-1]
        if last.verdict == Verdict.VALID_NAME:
            if not self.name or self.failure is not None:
                raise ValueError("valid last attempt requires a name outcome")
        else:
            if self.name is not None or self.failure != last.reason:
                raise ValueError("invalid last attempt requires failure == last reason")
        if [a.index for a in self.attempts] != list(range(len(self.attempts))):
            raise ValueError("attempt indices must be 0..n-1 in order")
        return self

    @property
    def ok(self) -> bool:
        return self.name is not None

    def canonical(self) -> dict:
        return self.model_dump(mode="json", exclude={"started_at", "finished_at"})


# ═══════════════════════════════════════════════════════════════════════════
# Gender resolution
# ═══════════════════════════════════════════════════════════════════════════

class OracleVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    oracle_id: Literal["A", "B"]
    label: Gender
    confidence: Optional[float] = Field(default=None, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _unknown_has_no_confidence(self) -> OracleVerdict:
        if self.label == Gender.UNKNOWN and self.confidence not in (None, 0.0):
            raise ValueError("unknown verdicts carry no confidence")
        return self


class GenderResolution(BaseModel):
    name: str
    language: str
    label: ResolvedLabel
    source: ResolutionSource
    verdicts: tuple[OracleVerdict, OracleVerdict]
    registry_hit: Optional[Gender] = None

    @model_validator(mode="after")
    def _provenance_is_consistent(self) -> GenderResolution:
        a, b = self.verdicts
        if self.source == ResolutionSource.ORACLES_AGREE:
            if not (a.label == b.label != Gender.UNKNOWN
                    and self.label.value == a.label.value):
                raise ValueError("oracles_agree needs two equal known verdicts")
        elif self.source == ResolutionSource.REGISTRY_TIEBREAK:
            if a.label == b.label != Gender.UNKNOWN:
                raise ValueError("registry_tiebreak needs disagreeing verdicts")
            if self.registry_hit is None or self.registry_hit.value != self.label.value:
                raise ValueError("registry_tiebreak label must equal the registry hit")
        elif self.label != ResolvedLabel.UNRESOLVED:
            raise ValueError(f"{self.source.value} requires an unresolved label")
        if self.label == ResolvedLabel.UNRESOLVED and self.source in (
            ResolutionSource.ORACLES_AGREE, ResolutionSource.REGISTRY_TIEBREAK,
        ):
            raise ValueError("unresolved label requires an unresolved source")
        return self

    @property
    def verdicts_differ(self) -> bool:
        return self.verdicts[0].label != self.verdicts[1].label
