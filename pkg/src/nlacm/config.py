"""Run configuration read from an INI file and validated before any pipeline starts."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .catalog import get_profile
from .deploi import HOOKS
from .gateway import Gateway, LiveBackend, ReplayBackend


class ConfigError(ValueError):
    pass


@dataclass
class GatewayConfig:
    backend: str = "replay"  # replay | live
    model: str = "gpt-4o"
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    parallelism: int = 4
    temperature: float = 0.0
    max_tokens: int = 1024
    retries: int = 3


@dataclass
class CatalogConfig:
    target: str = "sandbox:"
    dialect: str = "postgres"


@dataclass
class DeploiConfig:
    feedback_rounds: int = 2
    hooks: list[str] = field(default_factory=lambda: ["hierarchy-union"])


@dataclass
class RunConfig:
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    catalog: CatalogConfig = field(default_factory=CatalogConfig)
    deploi: DeploiConfig = field(default_factory=DeploiConfig)

    def validate(self) -> RunConfig:
        if self.gateway.backend not in ("replay", "live"):
            raise ConfigError(f"gateway.backend must be replay or live, not {self.gateway.backend!r}")
        if self.gateway.parallelism < 1:
            raise ConfigError("gateway.parallelism must be at least 1")
        if self.gateway.retries < 0:
            raise ConfigError("gateway.retries must not be negative")
        if self.deploi.feedback_rounds < 0:
            raise ConfigError("deploi.feedback_rounds must not be negative")
        unknown = [h for h in self.deploi.hooks if h not in HOOKS]
        if unknown:
            raise ConfigError(f"unknown revision hooks: {', '.join(unknown)}")
        try:
            get_profile(self.catalog.dialect)
        except Exception as exc:
            raise ConfigError(str(exc)) from None
        return self

    def make_gateway(self, fixtures: list[str] | None = None, live: bool = False) -> Gateway:
        """Replay over ``fixtures`` unless live mode is both configured and requested."""
        g = self.gateway
        if live:
            if g.backend != "live":
                raise ConfigError("--live needs gateway.backend = live in the config")
            key = os.environ.get(g.api_key_env)
            if not key:
                raise ConfigError(f"environment variable {g.api_key_env} is not set")
            backend = LiveBackend(g.base_url, g.model, key, g.temperature, g.max_tokens, g.retries)
            return Gateway(backend, g.parallelism)
        replay = ReplayBackend()
        for path in fixtures or []:
            replay.load(path)
        return Gateway(replay, g.parallelism)


_SECTIONS = {"gateway": GatewayConfig, "catalog": CatalogConfig, "deploi": DeploiConfig}


def _coerce(raw: str, default: object, where: str) -> object:
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {raw!r}") from None
    if isinstance(default, list):
        return [x.strip() for x in raw.split(",") if x.strip()]
    return raw.strip()


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        target = getattr(cfg, section)
        known = {f.name for f in fields(target)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {section}.{key}")
            setattr(target, key, _coerce(raw, getattr(target, key), f"{section}.{key}"))
    return cfg.validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    return parse_config(Path(path).read_text(encoding="utf-8"))
