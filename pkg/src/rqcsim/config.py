"""Run configuration shared by the command-line front end.

Flat key=value text format; '#' starts a comment.  Precedence when commands
resolve a setting: explicit flag > config file > dataclass default.  The
config file path comes from --config or the RQCSIM_CONFIG environment
variable.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

CONFIG_ENV_VAR = "RQCSIM_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    max_size_log2: int = 28
    n_candidates: int = 100
    workers: int = 1
    precision: str = "single"
    batch_log2: int = 13
    resident_log2: int = 24
    open_count: int = 6
    ceiling_m: float = 20.0
    leaf_size: int = 8
    imbalance: float = 0.1
    reconfigure_size: int = 10
    out_dir: str = "."

    def __post_init__(self):
        if self.max_size_log2 < 1 or self.max_size_log2 > 48:
            raise ConfigError(f"max_size_log2 {self.max_size_log2} outside [1, 48]")
        if self.n_candidates < 1:
            raise ConfigError("n_candidates must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.precision not in ("single", "mixed"):
            raise ConfigError(f"unknown precision {self.precision!r}")
        if self.batch_log2 < 0 or self.batch_log2 > 30:
            raise ConfigError(f"batch_log2 {self.batch_log2} outside [0, 30]")
        if self.resident_log2 < 0 or self.resident_log2 > 34:
            raise ConfigError(f"resident_log2 {self.resident_log2} outside [0, 34]")
        if self.open_count < 0 or self.open_count > 16:
            raise ConfigError(f"open_count {self.open_count} outside [0, 16]")
        if self.ceiling_m <= 1:
            raise ConfigError("ceiling_m must exceed 1")
        if not 0.0 <= self.imbalance <= 0.5:
            raise ConfigError(f"imbalance {self.imbalance} outside [0, 0.5]")
        if self.leaf_size < 2 or self.leaf_size > 12:
            raise ConfigError(f"leaf_size {self.leaf_size} outside [2, 12]")
        if self.reconfigure_size < 2 or self.reconfigure_size > 12:
            raise ConfigError(
                f"reconfigure_size {self.reconfigure_size} outside [2, 12]"
            )

    def serialize(self) -> str:
        lines = [
            f"{f.name}={getattr(self, f.name)}"
            for f in dataclasses.fields(self)
        ]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.serialize())


def parse_config(text: str) -> RunConfig:
    fields = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = fields[key]
        try:
            if kind == "int":
                kwargs[key] = int(value)
            elif kind == "float":
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    try:
        return RunConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None) -> RunConfig:
    """Config from an explicit path, else $RQCSIM_CONFIG, else defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    if path is None:
        return RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
