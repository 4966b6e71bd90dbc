"""Server configuration: JSON file plus ``TWOSTEP_*`` environment overrides."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

from .otp import MAX_OTP_LENGTH, MIN_OTP_LENGTH, Window

ENV_PREFIX = "TWOSTEP_"


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    listen: str = "127.0.0.1:8750"
    # None -> provider runs in-process and is mounted under /provider
    provider_url: Optional[str] = None
    provider_timeout: float = 5.0
    token_validity: int = 600
    token_length: int = 6
    otp_length: int = 8
    window: str = Window.TEN_MINUTES.value
    timezone: str = "UTC"
    max_attempts: int = 5
    rate_limit: int = 5
    rate_window: int = 600
    login_failure_limit: int = 10
    challenge_ttl: int = 600
    envelope_skew: int = 120
    pbkdf2_iterations: int = 200_000
    store_path: str = "twostep-data/users.json"
    outbox_path: str = "twostep-data/outbox.jsonl"
    master_key_path: str = "twostep-data/master.key"

    def __post_init__(self):
        if not MIN_OTP_LENGTH <= self.otp_length <= MAX_OTP_LENGTH:
            raise ConfigError(f"otp_length must be in {MIN_OTP_LENGTH}..{MAX_OTP_LENGTH}")
        try:
            Window(self.window)
        except ValueError:
            raise ConfigError(f"window must be 'minute' or 'ten-minutes', not {self.window!r}") from None
        if not 4 <= self.token_length <= 10:
            raise ConfigError("token_length must be in 4..10")
        self._split_listen()
        if self.provider_url == "":
            self.provider_url = None

    @property
    def host(self) -> str:
        return self._split_listen()[0]

    @property
    def port(self) -> int:
        return self._split_listen()[1]

    def _split_listen(self):
        host, sep, port = self.listen.rpartition(":")
        if not sep or not port.isdigit() or not 0 <= int(port) <= 65535:
            raise ConfigError(f"listen must be HOST:PORT with port 0-65535, got {self.listen!r}")
        return host or "127.0.0.1", int(port)

    def resolve(self, base: Path) -> "Config":
        """Make relative file paths relative to ``base`` (the config file's directory)."""
        out = dataclasses.replace(self)
        for name in ("store_path", "outbox_path", "master_key_path"):
            p = Path(getattr(out, name))
            if not p.is_absolute():
                setattr(out, name, str(base / p))
        return out


def _coerce(f: dataclasses.Field, raw):
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
    if "int" in kind and "Optional" not in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw


def load_config(path=None, env: Optional[Mapping[str, str]] = None) -> Config:
    env = os.environ if env is None else env
    values = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        base = path.parent
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        try:
            values = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(values, dict):
            raise ConfigError(f"{path}:1:1: top level must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(Config)}
    unknown = set(values) - set(fields)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    for name, f in fields.items():
        key = ENV_PREFIX + name.upper()
        if key in env:
            values[name] = env[key]
    try:
        values = {k: _coerce(fields[k], v) for k, v in values.items()}
        cfg = Config(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg.resolve(base)
