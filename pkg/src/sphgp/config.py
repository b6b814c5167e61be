"""Flat key=value run configuration: typed parsing, canonical serialization.

A config (with defaults materialized) plus the input data bytes fully
determines a run; runs are stored under a directory named by the config
hash, so reruns land in the same place.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

KERNEL_KINDS = ("poly_decay", "composed_relu", "ntk")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    kernel: str = "poly_decay"
    beta0: float = 1.0
    depth: int = 3
    lambda0: float = 1.0
    variance0: float = 1.0
    noise0: float = 0.1
    link: str = "probit"
    max_frequency: int = 5
    phase_limit: int | None = None  # None means full phase sets
    bias: float = 1.0
    test_fraction: float = 0.2
    split_seed: int = 0
    iterations: int = 300
    batch_size: int = 256
    lr_variational: float = 0.01
    lr_hyper: float = 0.001
    log_every: int = 1
    seed: int = 0
    quad_order: int = 0  # 0 picks the default for the frequency cutoff
    max_bad_fraction: float = 0.1
    data_csv: str = ""
    schema: str = ""
    out_root: str = "runs"

    def __post_init__(self):
        if self.kernel not in KERNEL_KINDS:
            raise ConfigError(f"kernel must be one of {KERNEL_KINDS}, got {self.kernel!r}")
        if not self.beta0 > 0:
            raise ConfigError(f"beta0 must be > 0, got {self.beta0}")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if not self.variance0 > 0 or not self.noise0 > 0:
            raise ConfigError("variance0 and noise0 must be positive")
        if self.link not in ("probit", "logit"):
            raise ConfigError(f"link must be probit or logit, got {self.link!r}")
        if self.max_frequency < 0:
            raise ConfigError("max_frequency must be >= 0")
        if self.phase_limit is not None and self.phase_limit < 1:
            raise ConfigError("phase_limit must be >= 1 or 'full'")
        if not self.bias > 0:
            raise ConfigError("bias must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.iterations < 0 or self.batch_size < 1 or self.log_every < 1:
            raise ConfigError("invalid optimizer settings")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _format_value(name: str, value) -> str:
    if name == "phase_limit":
        return "full" if value is None else str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(name: str, text: str):
    field = _FIELDS[name]
    if name == "phase_limit":
        return None if text == "full" else int(text)
    kind = field.type
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def serialize_config(cfg: RunConfig) -> str:
    lines = [
        f"{f.name} = {_format_value(f.name, getattr(cfg, f.name))}"
        for f in dataclasses.fields(RunConfig)
    ]
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    values = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line is not key = value: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"duplicate config key {key!r}")
        try:
            values[key] = _parse_value(key, val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {val!r} ({exc})") from None
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_hash(cfg: RunConfig) -> str:
    """Stable 16-hex-digit name for the run directory; out_root is excluded."""
    text = "\n".join(
        f"{f.name}={_format_value(f.name, getattr(cfg, f.name))}"
        for f in dataclasses.fields(RunConfig)
        if f.name != "out_root"
    )
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
