"""
config — run configuration (JSON file → RunConfig).

Relative paths inside the file resolve against the file's directory.
Credentials never live in the config: endpoints name the environment
variable holding the key, and the CLI loads a local ``.env`` first.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from .catalog import DATA_DIR, DEFAULT_CATALOG
from .errors import ConfigError
from .models import MAX_ATTEMPTS, RunMode
from .namenorm import DEFAULT_ALLOWLIST, DEFAULT_HONORIFICS, DEFAULT_MAX_TOKENS
from .prompting import DEFAULT_TEMPLATES

DEFAULT_REGISTRY = DATA_DIR / "registry.tsv"


class Decoding(BaseModel):
    model_config = ConfigDict(extra="forbid")

    temperature: Optional[float] = Field(default=None, ge=0.0)
    max_tokens: Optional[int] = Field(default=None, ge=1)


class _Endpoint(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    base_url: str
    api_key_env: Optional[str] = None
    max_in_flight: int = Field(default=4, ge=1)
    requests_per_minute: float = Field(default=60.0, gt=0)
    timeout_s: float = Field(default=60.0, gt=0)

    def credential(self) -> Optional[str]:
        """The API key from the environment, or None for unauthenticated endpoints."""
        if not self.api_key_env:
            return None
        value = os.environ.get(self.api_key_env)
        if not value:
            raise ConfigError(f"environment variable {self.api_key_env} is not set")
        return value


class ProviderEndpoint(_Endpoint):
    model_id: str = Field(min_length=1)
    adapter: Literal["openai", "gemini"] = "openai"
    model_name: Optional[str] = None
    decoding: Decoding = Field(default_factory=Decoding)

    @property
    def wire_model(self) -> str:
        return self.model_name or self.model_id


class OracleEndpoint(_Endpoint):
    oracle_id: Literal["A", "B"]
    adapter: Literal["genderize", "namsor"]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    models: list[ProviderEndpoint] = Field(min_length=1)
    oracles: list[OracleEndpoint] = Field(min_length=2, max_length=2)
    languages: list[str] = Field(default_factory=lambda: ["fa", "en"], min_length=1)
    trials_per_category: int = Field(default=100, ge=1)
    retry_limit: int = Field(default=MAX_ATTEMPTS - 1, ge=0, le=MAX_ATTEMPTS - 1)

    mode: RunMode = RunMode.REPLAY
    trace_path: Path
    out_dir: Path
    log_path: Optional[Path] = None

    catalog_path: Path = DEFAULT_CATALOG
    template_path: Path = DEFAULT_TEMPLATES
    registry_path: Path = DEFAULT_REGISTRY
    allowlist_path: Path = DEFAULT_ALLOWLIST
    honorifics_path: Path = DEFAULT_HONORIFICS
    max_name_tokens: int = Field(default=DEFAULT_MAX_TOKENS, ge=1)

    transport_retries: int = Field(default=3, ge=1)
    transport_backoff_s: float = Field(default=1.0, ge=0.0)
    redis_url: Optional[str] = None
    country_hint: dict[str, str] = Field(default_factory=lambda: {"fa": "IR"})

    @field_validator("languages")
    @classmethod
    def _unique_languages(cls, v: list[str]) -> list[str]:
        if len(set(v)) != len(v):
            raise ValueError(f"duplicate language codes in {v}")
        return v

    @model_validator(mode="after")
    def _unique_ids(self) -> RunConfig:
        ids = [m.model_id for m in self.models]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValueError(f"duplicate model_id: {', '.join(dupes)}")
        if sorted(o.oracle_id for o in self.oracles) != ["A", "B"]:
            raise ValueError("oracles must be exactly one 'A' and one 'B'")
        return self

    @property
    def run_log_path(self) -> Path:
        return self.log_path or self.out_dir / "run_log.jsonl"

    def oracle(self, oracle_id: str) -> OracleEndpoint:
        return next(o for o in self.oracles if o.oracle_id == oracle_id)

    def endpoint(self, model_id: str) -> ProviderEndpoint:
        return next(m for m in self.models if m.model_id == model_id)


_PATH_FIELDS = ("trace_path", "out_dir", "log_path", "catalog_path",
                "template_path", "registry_path", "allowlist_path",
                "honorifics_path")


def parse_config(raw: dict, base_dir: Union[str, Path, None] = None) -> RunConfig:
    """Validate a config mapping; relative paths resolve against ``base_dir``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    if base_dir is not None:
        base = Path(base_dir)
        for key in _PATH_FIELDS:
            value = raw.get(key)
            if isinstance(value, str) and not Path(value).is_absolute():
                raw[key] = str((base / value).resolve())
    try:
        return RunConfig.model_validate(raw)
    except PydanticValidationError as e:
        lines = []
        for err in e.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<config>"
            lines.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines)) from e


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    return parse_config(raw, base_dir=path.resolve().parent)


def config_hash(config: RunConfig) -> str:
    """SHA-256 over the canonical JSON form of the config."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True,
                           separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
