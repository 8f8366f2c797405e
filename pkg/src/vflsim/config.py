"""Run configuration: defaults, JSON files and CLI overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

# encoder hidden width, perturbation magnitude and learning rate per dataset
DATASET_DEFAULTS = {
    "bcw": {"ae_hidden": 500, "delta": 1.0, "lr": 0.005},
    "dcc": {"ae_hidden": 100, "delta": 0.6, "lr": 0.005},
    "eps5k": {"ae_hidden": 100, "delta": 0.6, "lr": 0.005},
    "har": {"ae_hidden": 500, "delta": 0.5, "lr": 0.001},
    "synthetic": {"ae_hidden": 100, "delta": 0.6, "lr": 0.005},
}


@dataclass
class RunConfig:
    dataset: str = "bcw"
    data_path: str | None = None
    mode: str = "random"
    T: int = 0
    seed: int = 0
    seeds: list[int] = field(default_factory=lambda: [0])
    folds: int = 5
    rep_dim: int = 200
    ae_hidden: int | None = None
    delta: float | None = None
    temperature: float = 2.0
    lam: float = 0.95
    lr: float | None = None
    batch_size: int = 128
    ae_epochs: int = 50
    ren_epochs: int = 50
    perturber_epochs: int = 50
    clf_epochs: int = 500
    # per-stage learning rates; None means use ``lr``
    ae_lr: float | None = None
    ren_lr: float | None = None
    perturber_lr: float | None = None
    clf_lr: float | None = None
    finetune_lr_factor: float = 0.1
    he_mode: str = "mock"
    modulus_bits: int = 512
    frac_bits: int = 32
    split_fraction: float = 0.5
    test_size: int | None = None
    class_weights: str | list[float] = "auto"
    retrain_estimator: bool = False
    strategies: list[str] = field(default_factory=lambda: ["dvfl", "retrain", "finetune", "joint"])
    synthetic_samples: int = 5000
    synthetic_features: int = 100
    synthetic_separation: float = 1.0

    def __post_init__(self):
        self.resolve()

    def resolve(self) -> "RunConfig":
        defaults = DATASET_DEFAULTS.get(self.dataset, DATASET_DEFAULTS["synthetic"])
        for name, value in defaults.items():
            if getattr(self, name) is None:
                setattr(self, name, value)
        self.validate()
        return self

    def stage_lr(self, stage: str) -> float:
        v = getattr(self, f"{stage}_lr")
        return self.lr if v is None else v

    def validate(self) -> None:
        errors = []
        if self.mode not in ("random", "asc_vs_des", "parallel", "uniform"):
            errors.append(f"mode: unknown value {self.mode!r}")
        if self.T < 0:
            errors.append("T: must be >= 0")
        if not 0 < self.split_fraction < 1:
            errors.append("split_fraction: must lie in (0, 1)")
        if self.he_mode not in ("mock", "real"):
            errors.append("he_mode: must be 'mock' or 'real'")
        if not 0 <= self.lam <= 1:
            errors.append("lam: must lie in [0, 1]")
        if self.temperature <= 0:
            errors.append("temperature: must be positive")
        if self.delta is not None and self.delta <= 0:
            errors.append("delta: must be positive")
        if self.batch_size <= 0:
            errors.append("batch_size: must be positive")
        for s in self.strategies:
            if s not in ("dvfl", "retrain", "finetune", "joint"):
                errors.append(f"strategies: unknown strategy {s!r}")
        if self.folds < 2:
            errors.append("folds: need at least 2")
        if isinstance(self.class_weights, str) and self.class_weights not in ("auto", "none"):
            errors.append("class_weights: 'auto', 'none' or a list of positive numbers")
        if errors:
            raise ConfigError("; ".join(errors))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        """File values over defaults, then ``overrides`` (CLI) over both."""
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(data)
