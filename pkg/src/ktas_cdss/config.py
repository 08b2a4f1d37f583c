"""Run configuration: defaults < INI file < ``KTAS_CDSS_*`` environment < command-line flags.

The config file is INI with a single ``[ktas_cdss]`` section; keys match the
:class:`RunConfig` field names. See ``config/ktas_cdss.example.ini``.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .backends import DEFAULT_MODEL_ID, HttpBackend, LlmBackend, ScriptedBackend
from .core import CdssError
from .tools import (
    RXNORM_BASE_URL,
    DuckDuckGoSearch,
    FixtureSearch,
    LocalInteractionTable,
    RecordedTransport,
    RemoteInteractionSource,
    RxNormClient,
    ToolRegistry,
    build_registry,
)

SECTION = "ktas_cdss"
ENV_PREFIX = "KTAS_CDSS_"
SCRIPTED = "scripted"
HTTP = "http"


class ConfigError(CdssError, ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    backend: str | None = None  # "scripted:<path>" or "http:<base_url>"
    model_id: str = DEFAULT_MODEL_ID
    timeout_s: float = 120.0
    max_in_flight: int = 4
    tools_enabled: bool = True
    max_tool_iterations: int = 3
    parallelism: int = 1
    temperature: float = 0.0
    max_tokens: int = 2048
    output_dir: Path = Path("runs")
    rxnorm_base_url: str = RXNORM_BASE_URL
    rxnorm_fixtures: Path | None = None
    interactions: str | None = None  # local table path, or "remote:<base_url>"
    search_fixtures: Path | None = None
    live_search: bool = False

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if self.max_tool_iterations < 1:
            raise ConfigError("max_tool_iterations must be >= 1")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")
        if self.backend is not None:
            kind, sep, target = self.backend.partition(":")
            if kind not in (SCRIPTED, HTTP) or not sep or not target:
                raise ConfigError(
                    f"backend must be 'scripted:<path>' or 'http:<base_url>', got {self.backend!r}")

    @property
    def backend_kind(self) -> str | None:
        return self.backend.partition(":")[0] if self.backend else None

    @property
    def backend_target(self) -> str | None:
        return self.backend.partition(":")[2] if self.backend else None

    def make_backend(self) -> LlmBackend:
        """Raises :class:`ConfigError` when no backend is selected."""
        if self.backend is None:
            raise ConfigError("no backend configured (use --backend scripted:<path> or http:<url>)")
        if self.backend_kind == SCRIPTED:
            return ScriptedBackend.from_path(self.backend_target)
        return HttpBackend(self.backend_target, self.model_id, timeout_s=self.timeout_s,
                           max_in_flight=self.max_in_flight)

    def make_tools(self) -> ToolRegistry:
        transport = RecordedTransport(self.rxnorm_fixtures) if self.rxnorm_fixtures else None
        rxnorm = RxNormClient(self.rxnorm_base_url, transport=transport)
        interactions = None
        if self.interactions:
            if self.interactions.startswith("remote:"):
                interactions = RemoteInteractionSource(self.interactions[len("remote:"):])
            else:
                interactions = LocalInteractionTable.from_path(self.interactions)
        search = None
        if self.search_fixtures:
            search = FixtureSearch(self.search_fixtures)
        elif self.live_search:
            search = DuckDuckGoSearch()
        return build_registry(rxnorm, interactions, search)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, raw: Any) -> Any:
    if raw is None or not isinstance(raw, str):
        return raw
    default = _FIELDS[name].default
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"invalid value for {name}: {raw!r}") from exc
    if name in ("output_dir", "rxnorm_fixtures", "search_fixtures"):
        return Path(raw)
    return raw


def _from_file(path: str | Path) -> dict[str, str]:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not parser.has_section(SECTION):
        return {}
    values = dict(parser.items(SECTION))
    unknown = set(values) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return values


def _from_env(env: Mapping[str, str]) -> dict[str, str]:
    return {name: env[ENV_PREFIX + name.upper()] for name in _FIELDS
            if ENV_PREFIX + name.upper() in env}


def load_config(config_file: str | Path | None = None,
                overrides: Mapping[str, Any] | None = None,
                env: Mapping[str, str] | None = None) -> RunConfig:
    """Merge the layers; ``None`` values in ``overrides`` mean "not given"."""
    env = os.environ if env is None else env
    if config_file is None and ENV_PREFIX + "CONFIG" in env:
        config_file = env[ENV_PREFIX + "CONFIG"]
    merged: dict[str, Any] = {}
    if config_file is not None:
        merged.update(_from_file(config_file))
    merged.update(_from_env(env))
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**{k: _coerce(k, v) for k, v in merged.items()})
