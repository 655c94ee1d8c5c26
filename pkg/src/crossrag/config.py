"""Configuration file loading for the command-line interface.

The config is a single JSON object naming the knowledge-base manifest,
the model providers, and optional retrieval and metric settings. All
relative paths inside the file resolve against the file's directory.
Unknown keys are rejected everywhere so typos fail loudly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .harness import MetricsOptions
from .llm import LlmClient, ProviderConfig, ScriptedRule
from .textsearch import RetrievalParams

_TOP_KEYS = {"manifest", "providers", "retrieval", "metrics", "output_dir"}
_PROVIDER_KEYS = {"backend", "endpoint_url", "api_key_env", "timeout_s",
                  "response_path", "replay_path", "record_path", "rules"}
_RULE_KEYS = {"response", "contains", "regex", "system_contains", "delay_s"}
_RETRIEVAL_KEYS = {"chunk_tokens", "overlap_tokens", "k", "k1", "b"}
_METRICS_KEYS = {"bleu_max_n", "synonyms"}


@dataclass(frozen=True)
class CliConfig:
    manifest: Path
    providers: dict[str, ProviderConfig]
    retrieval: RetrievalParams = field(default_factory=RetrievalParams)
    metrics: MetricsOptions = field(default_factory=MetricsOptions)
    output_dir: Path | None = None


def _fail(where: str, message: str) -> None:
    raise ConfigError(f"{where}: {message}")


def _check_keys(raw: dict, allowed: set, where: str) -> None:
    extra = raw.keys() - allowed
    if extra:
        _fail(where, f"unknown keys: {sorted(extra)}")


def _string(raw: dict, key: str, where: str, required: bool = False) -> str | None:
    value = raw.get(key)
    if value is None:
        if required:
            _fail(where, f"missing required key {key!r}")
        return None
    if not isinstance(value, str) or not value:
        _fail(where, f"{key} must be a non-empty string")
    return value


def _number(raw: dict, key: str, where: str, default):
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(where, f"{key} must be a number")
    return value


def _integer(raw: dict, key: str, where: str, default: int) -> int:
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(where, f"{key} must be an integer")
    return value


def load_synonyms(path: str | Path) -> dict[str, list[str]]:
    """Load a token synonym table: lowercase word -> list of lowercase words."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read synonyms {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"synonyms {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"synonyms {path}: top level must be an object")
    table: dict[str, list[str]] = {}
    for key, values in raw.items():
        if not isinstance(values, list) \
                or not all(isinstance(v, str) and v for v in values):
            raise ConfigError(
                f"synonyms {path}: {key!r} must map to an array of words")
        table[key.lower()] = [v.lower() for v in values]
    return table


def _parse_rule(raw: dict, where: str) -> ScriptedRule:
    if not isinstance(raw, dict):
        _fail(where, "rule must be an object")
    _check_keys(raw, _RULE_KEYS, where)
    response = _string(raw, "response", where, required=True)
    delay = _number(raw, "delay_s", where, 0.0)
    if delay < 0:
        _fail(where, "delay_s must be >= 0")
    return ScriptedRule(
        response=response,
        contains=_string(raw, "contains", where),
        regex=_string(raw, "regex", where),
        system_contains=_string(raw, "system_contains", where),
        delay_s=float(delay))


def _parse_provider(raw: dict, base: Path, where: str) -> ProviderConfig:
    if not isinstance(raw, dict):
        _fail(where, "provider must be an object")
    _check_keys(raw, _PROVIDER_KEYS, where)
    backend = _string(raw, "backend", where, required=True)
    rules_raw = raw.get("rules", [])
    if not isinstance(rules_raw, list):
        _fail(where, "rules must be an array")
    rules = tuple(_parse_rule(rule, f"{where} rule {i}")
                  for i, rule in enumerate(rules_raw))

    def path_of(key: str) -> Path | None:
        value = _string(raw, key, where)
        return None if value is None else (base / value).resolve()

    timeout = _number(raw, "timeout_s", where, 30.0)
    if timeout <= 0:
        _fail(where, "timeout_s must be > 0")
    kwargs = dict(
        backend=backend,
        endpoint_url=_string(raw, "endpoint_url", where),
        api_key_env=_string(raw, "api_key_env", where),
        timeout_s=float(timeout),
        replay_path=path_of("replay_path"),
        record_path=path_of("record_path"),
        rules=rules)
    response_path = _string(raw, "response_path", where)
    if response_path is not None:
        kwargs["response_path"] = response_path
    if backend == "replay":
        replay_path = kwargs["replay_path"]
        if replay_path is None or not replay_path.is_file():
            _fail(where, f"replay_path {replay_path} does not exist")
    try:
        return ProviderConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: str | Path) -> CliConfig:
    path = Path(path)
    base = path.parent
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    where = str(path)
    if not isinstance(raw, dict):
        _fail(where, "top level must be an object")
    _check_keys(raw, _TOP_KEYS, where)

    manifest = (base / _string(raw, "manifest", where, required=True)).resolve()
    if not manifest.is_file():
        _fail(where, f"manifest {manifest} does not exist")

    providers_raw = raw.get("providers")
    if not isinstance(providers_raw, dict) or not providers_raw:
        _fail(where, "providers must be a non-empty object of model ids")
    providers = {
        model_id: _parse_provider(p, base, f"{where} provider {model_id!r}")
        for model_id, p in providers_raw.items()}

    retrieval_raw = raw.get("retrieval", {})
    if not isinstance(retrieval_raw, dict):
        _fail(where, "retrieval must be an object")
    r_where = f"{where} retrieval"
    _check_keys(retrieval_raw, _RETRIEVAL_KEYS, r_where)
    defaults = RetrievalParams()
    retrieval = RetrievalParams(
        chunk_tokens=_integer(retrieval_raw, "chunk_tokens", r_where,
                              defaults.chunk_tokens),
        overlap_tokens=_integer(retrieval_raw, "overlap_tokens", r_where,
                                defaults.overlap_tokens),
        k=_integer(retrieval_raw, "k", r_where, defaults.k),
        k1=float(_number(retrieval_raw, "k1", r_where, defaults.k1)),
        b=float(_number(retrieval_raw, "b", r_where, defaults.b)))
    if retrieval.k < 1:
        _fail(r_where, "k must be >= 1")
    if retrieval.k1 < 0 or not 0 <= retrieval.b <= 1:
        _fail(r_where, "k1 must be >= 0 and b within [0, 1]")

    metrics_raw = raw.get("metrics", {})
    if not isinstance(metrics_raw, dict):
        _fail(where, "metrics must be an object")
    m_where = f"{where} metrics"
    _check_keys(metrics_raw, _METRICS_KEYS, m_where)
    bleu_max_n = _integer(metrics_raw, "bleu_max_n", m_where, 4)
    if bleu_max_n < 1:
        _fail(m_where, "bleu_max_n must be >= 1")
    synonyms_rel = _string(metrics_raw, "synonyms", m_where)
    synonyms = None
    if synonyms_rel is not None:
        synonyms = load_synonyms((base / synonyms_rel).resolve())
    metrics = MetricsOptions(bleu_max_n=bleu_max_n, synonyms=synonyms)

    output_rel = _string(raw, "output_dir", where)
    output_dir = None if output_rel is None else (base / output_rel).resolve()
    return CliConfig(manifest=manifest, providers=providers,
                     retrieval=retrieval, metrics=metrics,
                     output_dir=output_dir)


def client_for(config: CliConfig, model_id: str) -> LlmClient:
    try:
        provider = config.providers[model_id]
    except KeyError:
        known = ", ".join(sorted(config.providers))
        raise ConfigError(
            f"unknown model {model_id!r} (configured: {known})") from None
    return LlmClient(provider, model_id)
