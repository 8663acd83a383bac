"""
Application configuration, read from a JSON file.

Example::

    {
      "corpus_path": "data/corpus.jsonl",
      "index_path": "data/index.pvix",
      "embedder": {"provider": "local", "dimension": 256, "seed": 0},
      "generator": {"provider": "local_template"},
      "k": 5,
      "nprobe": null,
      "budget_chars": 2048,
      "host": "127.0.0.1",
      "port": 8080
    }

API keys are only ever read from EMBEDDER_API_KEY / GENERATOR_API_KEY.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .embedder import EmbedderConfig
from .errors import ConfigError
from .ragpipe import DEFAULT_BUDGET_CHARS, DEFAULT_K, GeneratorConfig

_SECRET_HINTS = ("api_key", "apikey", "secret", "token", "password")


@dataclass(frozen=True)
class AppConfig:
    corpus_path: Optional[str] = None
    index_path: Optional[str] = None
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    k: int = DEFAULT_K
    nprobe: Optional[int] = None
    budget_chars: int = DEFAULT_BUDGET_CHARS
    host: str = "127.0.0.1"
    port: int = 8080

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.nprobe is not None and self.nprobe < 1:
            raise ConfigError("nprobe must be >= 1")
        if self.budget_chars < 1:
            raise ConfigError("budget_chars must be positive")

    def with_overrides(self, **kw) -> "AppConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _reject_secrets(obj, where: str = "") -> None:
    if isinstance(obj, dict):
        for key, val in obj.items():
            if any(h in key.lower() for h in _SECRET_HINTS):
                raise ConfigError(f"secret-like key {where}{key!r} is not allowed in config files; use the environment")
            _reject_secrets(val, f"{where}{key}.")


def _build(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {where} section: {exc}") from exc


def config_from_dict(data: dict) -> AppConfig:
    _reject_secrets(data)
    data = dict(data)
    emb = _build(EmbedderConfig, data.pop("embedder", {}) or {}, "embedder")
    gen = _build(GeneratorConfig, data.pop("generator", {}) or {}, "generator")
    return _build(AppConfig, {**data, "embedder": emb, "generator": gen}, "top-level")


def load_config(path: Optional[str]) -> AppConfig:
    if path is None:
        return AppConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return config_from_dict(data)
