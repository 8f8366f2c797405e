"""Static (cross-validated) and dynamic (timeline) experiment drivers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, kfold_split, load_dataset
from .federation import Federation, _split_for_dynamic


@dataclass
class ExperimentResult:
    reports: list = field(default_factory=list)
    messages: list[dict] = field(default_factory=list)
    privacy: list[dict] = field(default_factory=list)
    ren_traces: list[list[float]] = field(default_factory=list)


def dataset_for(cfg) -> Dataset:
    return load_dataset(
        cfg.dataset,
        cfg.data_path,
        samples=cfg.synthetic_samples,
        features=cfg.synthetic_features,
        separation=cfg.synthetic_separation,
        seed=cfg.seed,
    )


def _collect(result: ExperimentResult, fed: Federation, seed: int, fold) -> None:
    result.messages.extend({"seed": seed, "fold": fold, **rec} for rec in fed.channel.records())
    result.privacy.append({"seed": seed, "fold": fold, **fed.privacy})
    result.ren_traces.append(fed.ren_trace)


def run_static(cfg, dataset: Dataset | None = None) -> ExperimentResult:
    """k-fold CV per seed: DVFL with a single arrival plus both non-federated references."""
    dataset = dataset if dataset is not None else dataset_for(cfg)
    cfg = cfg.replace(T=0)
    result = ExperimentResult()
    for seed in cfg.seeds:
        for fold, (train, test) in enumerate(kfold_split(dataset.labels, cfg.folds, seed)):
            fed = Federation(cfg, dataset, train, test, seed, fold).setup()
            result.reports.extend(fed.nonfed_reports())
            result.reports.extend(fed.run(["dvfl"]))
            _collect(result, fed, seed, fold)
    return result


def run_dynamic(cfg, dataset: Dataset | None = None) -> ExperimentResult:
    """One holdout split and timeline per seed; every strategy walks the same stream."""
    dataset = dataset if dataset is not None else dataset_for(cfg)
    result = ExperimentResult()
    for seed in cfg.seeds:
        pool, test = _split_for_dynamic(cfg, dataset, seed)
        fed = Federation(cfg, dataset, pool, test, seed).setup()
        result.reports.extend(fed.run(cfg.strategies))
        _collect(result, fed, seed, None)
    return result


def median_f1(reports, strategy: str, timestamp: int | None = None) -> float:
    vals = [r.macro_f1 for r in reports if r.strategy == strategy and (timestamp is None or r.timestamp == timestamp)]
    if not vals:
        raise KeyError(f"no reports for {strategy!r} at t={timestamp}")
    return float(np.median(vals))
