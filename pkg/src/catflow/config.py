"""Run configuration: JSON files validated strictly against the schema below.

Unknown keys are rejected with their full path so typos fail before any work
starts. Optimizer defaults are the training recipe: AdamW, lr 2e-4, weight
decay 1e-12, EMA 0.999, cosine annealing.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

__all__ = ["RunConfig", "ConfigError", "load_config", "config_from_dict"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "community_small"  # community_small | grid | table
    n_graphs: int = 100
    n_heldout: int = 0
    path: str | None = None
    heldout_path: str | None = None
    space_K: list | None = None
    probs: list | None = None
    community_size_range: list = field(default_factory=lambda: [6, 10])
    intra_p: float = 0.7
    inter_frac: float = 0.05
    grid_side_range: list = field(default_factory=lambda: [3, 5])


@dataclass(frozen=True)
class ModelSection:
    type: str = "graph"  # graph | mlp
    n_layers: int = 4
    hidden_node: int = 64
    hidden_edge: int = 32
    hidden_global: int = 64
    n_heads: int = 4
    time_embedding_dim: int = 32
    hidden_dim: int = 128  # mlp
    n_hidden: int = 2  # mlp


@dataclass(frozen=True)
class OptimizerSection:
    lr: float = 2e-4
    weight_decay: float = 1e-12
    ema_decay: float = 0.999


@dataclass(frozen=True)
class ScheduleSection:
    kind: str = "cosine"
    total_steps: int = 20_000


@dataclass(frozen=True)
class TrainingSection:
    batch_size: int = 128
    checkpoint_every: int = 1000
    log_every: int = 0
    early_stop_plateau: int = 0  # steps without improvement; 0 disables


@dataclass(frozen=True)
class IntegratorSection:
    n_steps: int = 200
    scheme: str = "euler"
    eps_denom: float = 1e-5
    g_const: float = 0.0


@dataclass(frozen=True)
class AblationSection:
    data_fractions: list = field(default_factory=lambda: [1.0, 0.2, 0.05])
    layer_counts: list = field(default_factory=lambda: [2, 4])
    objectives: list = field(default_factory=lambda: ["catflow", "fm_baseline"])
    steps_per_cell: int = 4000
    batch_size: int = 8
    n_eval_samples: int = 64
    validity_rule: str = "two_communities"
    integrator_steps: int = 100


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/run"
    objective: str = "catflow"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelSection = field(default_factory=ModelSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    ablation: AblationSection = field(default_factory=AblationSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}; allowed: {sorted(known)}")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        value = data[name]
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.type, str) and f.type in _SECTION_TYPES
        ):
            section_cls = _SECTION_TYPES[f.type] if isinstance(f.type, str) else f.type
            value = _build(section_cls, value, f"{path}.{name}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: {err}") from err


_SECTION_TYPES = {
    "DatasetConfig": DatasetConfig,
    "ModelSection": ModelSection,
    "OptimizerSection": OptimizerSection,
    "ScheduleSection": ScheduleSection,
    "TrainingSection": TrainingSection,
    "IntegratorSection": IntegratorSection,
    "AblationSection": AblationSection,
}


def config_from_dict(data: dict) -> RunConfig:
    cfg = _build(RunConfig, data, "config")
    if cfg.objective not in ("catflow", "gaussian_vfm", "fm_baseline"):
        raise ConfigError(f"config.objective: unknown objective {cfg.objective!r}")
    if cfg.model.type not in ("graph", "mlp"):
        raise ConfigError(f"config.model.type: expected 'graph' or 'mlp', got {cfg.model.type!r}")
    if cfg.schedule.kind != "cosine":
        raise ConfigError(f"config.schedule.kind: only 'cosine' is available")
    if cfg.integrator.scheme not in ("euler", "midpoint", "rk4"):
        raise ConfigError(f"config.integrator.scheme: unknown scheme {cfg.integrator.scheme!r}")
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}") from err
    return config_from_dict(data)
