"""Flat text configuration for training runs.

One ``key = value`` pair per line; blank lines and ``#`` comments are
skipped. Dotted keys group related settings (``denoiser.node_dim``,
``nodecount.hidden``); a ``denoiser.`` prefix is equivalent to the bare
key. Values are coerced to the declared field types, and any problem
reports the offending key and line.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .graphdata import VOCABS
from .smiles import PROPERTY_IDS


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run needs."""

    dataset: str
    out: str
    properties: tuple[str, ...]
    vocab: str = "qm9"
    T: int = 50
    seed: int = 0
    epochs: int = 30
    batch_size: int = 64
    lr: float = 2e-3
    weight_decay: float = 1e-12
    gamma: float = 2.0
    guide_dropout: float = 0.1
    n_layers: int = 2
    node_dim: int = 64
    edge_dim: int = 32
    u_dim: int = 32
    heads: int = 4
    nodecount_hidden: int = 64
    nodecount_epochs: int = 150
    nodecount_lr: float = 5e-3

    def __post_init__(self):
        if not self.properties:
            raise ConfigError("key 'properties' must name at least one property")
        for name in self.properties:
            if name not in PROPERTY_IDS:
                raise ConfigError(
                    f"key 'properties' names unknown property {name!r}; "
                    f"choose from {', '.join(PROPERTY_IDS)}")
        if self.vocab not in VOCABS:
            raise ConfigError(
                f"key 'vocab' must be one of {', '.join(sorted(VOCABS))}, "
                f"got {self.vocab!r}")
        positive = ("T", "epochs", "batch_size", "n_layers", "node_dim",
                    "edge_dim", "u_dim", "heads", "nodecount_hidden",
                    "nodecount_epochs")
        for key in positive:
            if getattr(self, key) < 1:
                raise ConfigError(f"key {key!r} must be a positive integer")
        for key in ("lr", "gamma", "nodecount_lr"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"key {key!r} must be positive")
        if not 0.0 <= self.guide_dropout <= 1.0:
            raise ConfigError("key 'guide_dropout' must lie in [0, 1]")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _canonical(key: str) -> str:
    if key.startswith("denoiser."):
        key = key[len("denoiser."):]
    return key.replace(".", "_")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        name = _canonical(key)
        if name not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if name in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        kind = _FIELD_TYPES[name]
        try:
            if kind == "int":
                values[name] = int(value)
            elif kind == "float":
                values[name] = float(value)
            elif kind.startswith("tuple"):
                values[name] = tuple(v.strip() for v in value.split(",") if v.strip())
            else:
                values[name] = value
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: key {key!r}: {exc}") from exc
    missing = [k for k in ("dataset", "out", "properties") if k not in values]
    if missing:
        raise ConfigError(f"{source}: missing required keys {', '.join(missing)}")
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))
