"""Training hyperparameters and flat key=value config files."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

TEACHER_STRATEGIES = ("same-family", "cross-model", "unsupervised", "none")

BETA_GRID_DEFAULT = (2.0, 1.0, 0.5, 0.1, 0.05, 0.01, 0.005, 0.001, 5e-4, 1e-4)


class ConfigError(ValueError):
    """Raised for unknown keys or invalid hyperparameter values."""


@dataclass
class TrainConfig:
    backbone: str = "mf"
    social_enabled: bool = False
    dim: int = 64
    learning_rate: float = 0.001
    batch_size: int = 2000
    l2_lambda: float = 0.001
    beta: float = 0.1
    social_reg_weight: float = 0.1
    trust_loss_weight: float = 0.5
    num_gcn_layers: int = 2
    epochs: int = 300
    early_stop_patience: int = 10
    distill_warmup_epochs: int = 0
    teacher_strategy: str = "same-family"
    seed: int = 0
    eval_k: int = 100

    def __post_init__(self):
        if self.dim <= 0:
            raise ConfigError("dim must be > 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.l2_lambda < 0:
            raise ConfigError("l2_lambda must be >= 0")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.backbone not in ("mf", "socialmf", "trustmf", "diffnet"):
            raise ConfigError(f"unknown backbone {self.backbone!r}")
        if self.distill_warmup_epochs < 0:
            raise ConfigError("distill_warmup_epochs must be >= 0")
        if self.teacher_strategy not in TEACHER_STRATEGIES:
            raise ConfigError(f"unknown teacher_strategy {self.teacher_strategy!r}")

    def replace(self, **kwargs) -> "TrainConfig":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(kwargs)
        return TrainConfig(**vals)


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(name, kind, raw):
    if kind is bool:
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r} as a boolean")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r} as {kind.__name__}")


def parse_config_pairs(pairs, base: TrainConfig = None) -> TrainConfig:
    """Apply (key, value-string) pairs on top of a base config."""
    base = base if base is not None else TrainConfig()
    known = {f.name: f.type for f in fields(TrainConfig)}
    kinds = {
        "backbone": str, "social_enabled": bool, "dim": int,
        "learning_rate": float, "batch_size": int, "l2_lambda": float,
        "beta": float, "social_reg_weight": float, "trust_loss_weight": float,
        "num_gcn_layers": int, "epochs": int, "early_stop_patience": int,
        "distill_warmup_epochs": int, "teacher_strategy": str, "seed": int,
        "eval_k": int,
    }
    updates = {}
    for key, raw in pairs:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, kinds[key], raw)
    return base.replace(**updates)


def read_config_file(path, base: TrainConfig = None) -> TrainConfig:
    """Flat "key value" / "key=value" text file; '#' starts a comment."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, raw = line.partition("=")
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ConfigError(f"{path}: line {lineno}: expected 'key value'")
                key, raw = parts
            pairs.append((key.strip(), raw.strip()))
    return parse_config_pairs(pairs, base)
