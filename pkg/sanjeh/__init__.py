"""sanjeh — gender-bias audit of LLM name generation: exports the pipeline, metrics and errors."""

from .catalog import DomainCatalog, load_catalog
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    OracleError,
    ProviderError,
    ReplayError,
    SanjehError,
    SessionError,
    UndefinedMetricError,
    ValidationError,
)
from .genderres import resolve, resolve_name
from .metrics import domain_summary, ds_gsi, female_ratio
from .namenorm import validate_name
from .prompting import enumerate_probes, render_prompt
from .provider import open_session, run_probe
from .runner import AuditRun, RunOutcome

__all__ = [
    "AuditRun", "RunOutcome", "RunConfig", "load_config",
    "DomainCatalog", "load_catalog", "render_prompt", "enumerate_probes",
    "validate_name", "open_session", "run_probe", "resolve", "resolve_name",
    "female_ratio", "ds_gsi", "domain_summary",
    "SanjehError", "ValidationError", "ConfigError", "SessionError", "ReplayError",
    "ProviderError", "OracleError", "UndefinedMetricError",
]
