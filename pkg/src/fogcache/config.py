"""Experiment configuration: defaults, key=value files, and CLI merging.

Precedence is flags over file over defaults. Every resolved run writes a
manifest (the full flattened config plus the package version) from which the
run can be reproduced exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import get_type_hints

from . import __version__
from .cfl import CflConfig
from .dcnn import TrainConfig
from .errors import ConfigError
from .mobile import FtrlConfig

KNOWN_POLICIES = ("dcnn-cfl", "dcnn-fl", "dcnn-lc", "lfu", "lru")


@dataclass
class ExperimentConfig:
    # corpus
    dataset_dir: str = ""
    synthetic: str = "users=1000,contents=1000,clusters=2,requests=48"
    subset_users: int = 0      # keep only the N most active users (0 = all)
    subset_contents: int = 0   # keep only the N most requested contents (0 = all)
    train_fraction: float = 0.75
    # topology / features
    fap_count: int = 10
    neighbor_count: int = 20
    self_weight: float = 0.5
    skew_mode: str = "genre"
    # sweep axes
    policies: tuple = KNOWN_POLICIES
    capacities: tuple = (600,)
    mobile_ratios: tuple = (0.25,)
    # single-cell settings (the sweep overrides these per cell)
    capacity: int = 600
    capacity_scope: str = "total"
    mobile_ratio: float = 0.25
    windows: int = 10
    # model
    hidden_dims: tuple = (64,)
    latent_dim: int = 16
    learning_rate: float = 1e-3
    decay: float = 0.97
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs_per_round: int = 1
    batch_size: int = 64
    negative_ratio: int = 4
    # federation (thresholds compare RMS update norms)
    stop_eps: float = 0.009
    split_eps: float = 0.0155
    max_rounds: int = 60
    # mobile preference learning
    ftrl_alpha: float = 0.1
    ftrl_beta: float = 1.0
    ftrl_l1: float = 1e-3
    ftrl_l2: float = 1e-3
    ftrl_passes: int = 10
    # bookkeeping
    seed: int = 0
    out_dir: str = "results"

    def __post_init__(self):
        if self.capacity_scope not in ("total", "per-fap"):
            raise ConfigError(f"capacity_scope must be 'total' or 'per-fap', got {self.capacity_scope!r}")
        for p in self.policies:
            if p not in KNOWN_POLICIES:
                raise ConfigError(f"unknown policy {p!r}; known: {', '.join(KNOWN_POLICIES)}")
        if self.skew_mode not in ("uniform", "genre"):
            raise ConfigError(f"unknown skew_mode {self.skew_mode!r}")
        if not self.dataset_dir and not self.synthetic:
            raise ConfigError("need either dataset_dir or a synthetic corpus spec")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0,1)")
        if self.windows < 1:
            raise ConfigError("need at least one evaluation window")
        if not (self.policies and self.capacities and self.mobile_ratios):
            raise ConfigError("policies, capacities, and mobile_ratios must be non-empty")

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, decay=self.decay,
            adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps, epochs=self.epochs_per_round,
            batch_size=self.batch_size, negative_ratio=self.negative_ratio,
            seed=seed,
        )

    def cfl_config(self) -> CflConfig:
        return CflConfig(stop_eps=self.stop_eps, split_eps=self.split_eps,
                         max_rounds=self.max_rounds)

    def ftrl_config(self) -> FtrlConfig:
        return FtrlConfig(alpha=self.ftrl_alpha, beta=self.ftrl_beta,
                          l1=self.ftrl_l1, l2=self.ftrl_l2,
                          passes=self.ftrl_passes,
                          negative_ratio=self.negative_ratio)


_TUPLE_FIELDS = {
    "policies": str,
    "capacities": int,
    "mobile_ratios": float,
    "hidden_dims": int,
}


def _coerce(name: str, raw: str, target_type):
    raw = raw.strip()
    if name in _TUPLE_FIELDS:
        elem = _TUPLE_FIELDS[name]
        if not raw:
            return ()
        try:
            return tuple(elem(part.strip()) for part in raw.split(","))
        except ValueError:
            raise ConfigError(f"cannot parse list value {raw!r} for {name}") from None
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {target_type.__name__} for {name}") from None
    return raw


def parse_kv_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = body.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_config(file_values: dict[str, str] | None = None,
                   overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Defaults <- config file <- explicit overrides, with type coercion."""
    hints = get_type_hints(ExperimentConfig)
    valid = {f.name for f in fields(ExperimentConfig)}
    merged: dict[str, object] = {}
    for source in (file_values or {}, overrides or {}):
        for key, raw in source.items():
            if key not in valid:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, raw, hints[key]) if isinstance(raw, str) else raw
    return ExperimentConfig(**merged)


def parse_synthetic_spec(spec: str) -> dict[str, int]:
    """Parse 'users=N,contents=N,clusters=N,requests=N' with defaults."""
    out = {"users": 1000, "contents": 1000, "clusters": 2, "requests": 48}
    if spec:
        for part in spec.split(","):
            if "=" not in part:
                raise ConfigError(f"bad synthetic spec fragment {part!r}")
            key, value = part.split("=", 1)
            key = key.strip()
            if key not in out:
                raise ConfigError(f"unknown synthetic spec key {key!r}")
            try:
                out[key] = int(value)
            except ValueError:
                raise ConfigError(f"synthetic spec value {value!r} is not an integer") from None
    return out


def _render_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_render_value(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def render_manifest(config: ExperimentConfig) -> str:
    """Reproducible flat dump of the resolved config."""
    lines = [f"# fogcache {__version__} run manifest"]
    for f in sorted(fields(config), key=lambda f: f.name):
        lines.append(f"{f.name} = {_render_value(getattr(config, f.name))}")
    return "\n".join(lines) + "\n"
