"""
Append-only run log (JSONL): enables resume and offline re-scoring.

    {"kind": "run",        "config_hash": h, "config": {...}}           first line
    {"kind": "generation", "config_hash": h, "record": GenerationRecord}
    {"kind": "resolution", "config_hash": h, "resolution": GenderResolution}

The trace holds wire traffic; this log holds what was derived from it, so
reports can be recomputed without any oracle or provider access.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Union

from pydantic import ValidationError as PydanticValidationError

from .config import RunConfig, config_hash, parse_config
from .errors import ConfigError, SessionError
from .models import GenderResolution, GenerationRecord

log = logging.getLogger(__name__)


@dataclass
class LoadedLog:
    config_hash: str
    config: dict
    records: dict[str, GenerationRecord] = field(default_factory=dict)
    resolutions: dict[tuple[str, str], GenderResolution] = field(default_factory=dict)

    def run_config(self) -> RunConfig:
        return parse_config(self.config)


def _read_lines(path: Path) -> list[str]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise SessionError(f"run log not found: {path}") from None
    except (OSError, UnicodeDecodeError) as e:
        raise SessionError(f"cannot read run log {path}: {e}") from e
    lines = text.splitlines()
    if text and not text.endswith("\n"):
        log.warning("ignoring partial last line of %s", path)
        lines = lines[:-1]
    return [ln for ln in lines if ln.strip()]


def load_run_log(path: Union[str, Path]) -> LoadedLog:
    path = Path(path)
    lines = _read_lines(path)
    if not lines:
        raise SessionError(f"run log is empty: {path}")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise SessionError(f"{path}:1: {e.msg}") from e
    if head.get("kind") != "run" or "config_hash" not in head:
        raise SessionError(f"{path}: first line is not a run header")

    loaded = LoadedLog(config_hash=head["config_hash"], config=head.get("config", {}))
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            doc = json.loads(line)
            if doc.get("config_hash") != loaded.config_hash:
                raise SessionError(f"{path}:{lineno}: config hash differs from header")
            if doc["kind"] == "generation":
                rec = GenerationRecord.model_validate(doc["record"])
                loaded.records.setdefault(rec.task.key, rec)
            elif doc["kind"] == "resolution":
                res = GenderResolution.model_validate(doc["resolution"])
                loaded.resolutions.setdefault((res.name, res.language), res)
        except (json.JSONDecodeError, KeyError, AttributeError, PydanticValidationError) as e:
            raise SessionError(f"{path}:{lineno}: corrupt run log line: {e}") from e
    return loaded


class RunLog:
    """Single writer for one run log file."""

    def __init__(self, path: Path, config_hash: str, fh: IO[str]):
        self.path = path
        self.config_hash = config_hash
        self._fh = fh

    @classmethod
    def create(cls, path: Union[str, Path], config: RunConfig) -> RunLog:
        """Start a fresh log (any previous file is replaced)."""
        path = Path(path)
        h = config_hash(config)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fh = open(path, "w", encoding="utf-8")
        except OSError as e:
            raise SessionError(f"cannot write run log {path}: {e}") from e
        runlog = cls(path, h, fh)
        runlog._write({"kind": "run", "config_hash": h,
                       "config": config.model_dump(mode="json")})
        return runlog

    @classmethod
    def reopen(cls, path: Union[str, Path], config: RunConfig) -> tuple[RunLog, LoadedLog]:
        """Continue an existing log; refuses when the config changed."""
        path = Path(path)
        loaded = load_run_log(path)
        h = config_hash(config)
        if loaded.config_hash != h:
            raise ConfigError(
                f"config hash {h[:12]} does not match run log {loaded.config_hash[:12]}; "
                "refusing to resume with an edited config")
        try:
            raw = path.read_bytes()
            if raw and not raw.endswith(b"\n"):
                path.write_bytes(raw[:raw.rfind(b"\n") + 1])
            fh = open(path, "a", encoding="utf-8")
        except OSError as e:
            raise SessionError(f"cannot append to run log {path}: {e}") from e
        return cls(path, h, fh), loaded

    def _write(self, doc: dict) -> None:
        self._fh.write(json.dumps(doc, ensure_ascii=False, sort_keys=True) + "\n")
        self._fh.flush()

    def append_record(self, record: GenerationRecord) -> None:
        self._write({"kind": "generation", "config_hash": self.config_hash,
                     "record": record.model_dump(mode="json")})

    def append_resolution(self, resolution: GenderResolution) -> None:
        self._write({"kind": "resolution", "config_hash": self.config_hash,
                     "resolution": resolution.model_dump(mode="json")})

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> RunLog:
        return self

    def __exit__(self, *exc) -> None:
        self.close()
