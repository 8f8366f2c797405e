"""Dataset ingestion, standardization, stratified splits and macro metrics."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.model_selection import StratifiedKFold

from .errors import IngestionError, InfeasibleTimelineError, SplitError

DATASET_URLS = {
    "bcw": "https://archive.ics.uci.edu/ml/datasets/Breast+Cancer+Wisconsin",
    "dcc": "http://archive.ics.uci.edu/ml/datasets/default+of+credit+card+clients",
    "har": "https://archive.ics.uci.edu/ml/datasets/Human+Activity+Recognition+Using+Smartphones",
}


@dataclass
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    feature_names: list[str]
    label_map: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise IngestionError("features must be N x F with one label per row")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise IngestionError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(self.features)):
            raise IngestionError("features contain missing or non-finite values")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.name, self.features[idx], self.labels[idx], self.n_classes, list(self.feature_names), dict(self.label_map))

    def write_csv(self, path, label_column: str = "label") -> None:
        inv = {v: k for k, v in self.label_map.items()} if self.label_map else {}
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*self.feature_names, label_column])
            for row, y in zip(self.features, self.labels):
                w.writerow([repr(float(v)) for v in row] + [inv.get(int(y), int(y))])


@dataclass(frozen=True)
class CsvSchema:
    label_column: str
    id_column: str | None = None
    positive_label: str | None = None
    header: bool = True
    drop_columns: tuple[str, ...] = ()
    categorical_columns: tuple[str, ...] = ()
    delimiter: str = ","
    skip_rows: int = 0


BCW_COLUMNS = ["id", "diagnosis"] + [
    f"{stat}_{feat}"
    for stat in ("mean", "se", "worst")
    for feat in (
        "radius", "texture", "perimeter", "area", "smoothness",
        "compactness", "concavity", "concave_points", "symmetry", "fractal_dimension",
    )
]

SCHEMAS = {
    # wdbc.data: no header, id, diagnosis (M/B), 30 features
    "bcw": CsvSchema(label_column="diagnosis", id_column="id", positive_label="M", header=False),
    # UCI xls exported to CSV: first line is a group header, second the column names
    "dcc": CsvSchema(
        label_column="default payment next month",
        id_column="ID",
        skip_rows=1,
        categorical_columns=("SEX", "EDUCATION", "MARRIAGE"),
    ),
    "har": CsvSchema(label_column="Activity", drop_columns=("subject",)),
    # files written by Dataset.write_csv / ``vflsim gen-synth``
    "synthetic": CsvSchema(label_column="label"),
}

# environment variables consulted when no path is configured
DATA_ENV = {"bcw": "VFLSIM_BCW_PATH", "dcc": "VFLSIM_DCC_PATH", "har": "VFLSIM_HAR_PATH"}


def load_csv(path, schema: CsvSchema, name: str | None = None) -> Dataset:
    """Parse delimited text into a :class:`Dataset` (rows kept in file order).

    Labels map to ``[0, C)``: with ``positive_label`` the positive value
    becomes 1 and everything else 0, otherwise sorted distinct values are
    numbered.  Categorical columns are one-hot encoded with their sorted
    levels.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh, delimiter=schema.delimiter))
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows[schema.skip_rows :] if any(cell.strip() for cell in r)]
    if not rows:
        raise IngestionError(f"{path}: file is empty")
    if schema.header:
        header = [h.strip() for h in rows[0]]
        body, first_line = rows[1:], schema.skip_rows + 2
    else:
        header = BCW_COLUMNS if len(rows[0]) == len(BCW_COLUMNS) else [f"c{i}" for i in range(len(rows[0]))]
        body, first_line = rows, schema.skip_rows + 1
    if not body:
        raise IngestionError(f"{path}: no data rows")
    col = {h: i for i, h in enumerate(header)}
    for needed in [schema.label_column, schema.id_column, *schema.drop_columns, *schema.categorical_columns]:
        if needed is not None and needed not in col:
            raise IngestionError(f"{path}: missing column {needed!r}")
    skip = {schema.label_column, schema.id_column, *schema.drop_columns}
    numeric = [h for h in header if h not in skip and h not in schema.categorical_columns]

    levels = {c: sorted({r[col[c]].strip() for r in body}) for c in schema.categorical_columns}
    feature_names = list(numeric) + [f"{c}={lv}" for c in schema.categorical_columns for lv in levels[c]]
    feats = np.empty((len(body), len(feature_names)))
    raw_labels = []
    for i, r in enumerate(body):
        line = first_line + i
        if len(r) != len(header):
            raise IngestionError(f"{path}:{line}: expected {len(header)} fields, got {len(r)}")
        for j, h in enumerate(numeric):
            cell = r[col[h]].strip()
            try:
                feats[i, j] = float(cell)
            except ValueError:
                raise IngestionError(f"{path}:{line}: column {h!r} has non-numeric value {cell!r}") from None
        pos = len(numeric)
        for c in schema.categorical_columns:
            onehot = [1.0 if r[col[c]].strip() == lv else 0.0 for lv in levels[c]]
            feats[i, pos : pos + len(onehot)] = onehot
            pos += len(onehot)
        raw_labels.append(r[col[schema.label_column]].strip())
    if not np.all(np.isfinite(feats)):
        bad = np.argwhere(~np.isfinite(feats))[0]
        raise IngestionError(f"{path}:{first_line + bad[0]}: column {feature_names[bad[1]]!r} is missing or non-finite")

    if schema.positive_label is not None:
        label_map = {lv: int(lv == schema.positive_label) for lv in sorted(set(raw_labels))}
        n_classes = 2
    else:
        label_map = {lv: i for i, lv in enumerate(sorted(set(raw_labels), key=_natural_key))}
        n_classes = len(label_map)
    labels = np.array([label_map[lv] for lv in raw_labels], dtype=int)
    return Dataset(name or path.stem, feats, labels, n_classes, feature_names, label_map)


def _natural_key(s: str):
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


def load_bcw(path=None) -> Dataset:
    """BCW from a UCI ``wdbc.data`` file, or scikit-learn's bundled copy."""
    if path is not None:
        return load_csv(path, SCHEMAS["bcw"], name="bcw")
    from sklearn.datasets import load_breast_cancer

    raw = load_breast_cancer()
    # sklearn codes malignant as 0; the UCI file's positive class is M
    labels = (raw.target == 0).astype(int)
    names = BCW_COLUMNS[2:]
    return Dataset("bcw", raw.data.astype(float), labels, 2, names, {"B": 0, "M": 1})


class Standardizer:
    """Zero-mean / unit-variance scaling fitted on training rows only."""

    def fit(self, x) -> "Standardizer":
        x = np.asarray(x, dtype=float)
        self.mean_ = x.mean(axis=0)
        std = x.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean_) / self.scale_


def kfold_split(labels, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    labels = np.asarray(labels, dtype=int)
    counts = np.bincount(labels)
    if np.any((counts > 0) & (counts < k)):
        raise SplitError(f"every class needs at least {k} members, got counts {counts.tolist()}")
    skf = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return [(tr, te) for tr, te in skf.split(np.zeros(len(labels)), labels)]


def stratified_holdout(labels, test_size: int, rng: np.random.Generator, balanced: bool = True):
    """Split indices into (pool, test).  With ``balanced`` the test set is
    as close to 1:1 across classes as the data allows."""
    labels = np.asarray(labels, dtype=int)
    classes = np.unique(labels)
    if balanced:
        per = [test_size // len(classes)] * len(classes)
        for i in range(test_size - sum(per)):
            per[i] += 1
    else:
        per = [int(round(test_size * np.mean(labels == c))) for c in classes]
    test = []
    for c, cnt in zip(classes, per):
        members = np.flatnonzero(labels == c)
        if cnt > len(members):
            raise SplitError(f"class {c} has {len(members)} members, {cnt} requested for test")
        test.append(rng.choice(members, size=cnt, replace=False))
    test = np.sort(np.concatenate(test))
    pool = np.setdiff1d(np.arange(len(labels)), test)
    return pool, test


def stratified_stream_sample(labels, available, pos_count: int, neg_count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw exactly ``pos_count`` positives (label 1) and ``neg_count`` negatives
    (label 0) from the ``available`` indices, without replacement."""
    labels = np.asarray(labels, dtype=int)
    available = np.asarray(available, dtype=int)
    pos = available[labels[available] == 1]
    neg = available[labels[available] == 0]
    if pos_count > len(pos) or neg_count > len(neg):
        raise InfeasibleTimelineError(
            f"requested {pos_count} pos / {neg_count} neg, only {len(pos)} / {len(neg)} remain"
        )
    chosen = np.concatenate(
        [rng.choice(pos, size=pos_count, replace=False), rng.choice(neg, size=neg_count, replace=False)]
    )
    return np.sort(chosen.astype(int))


@dataclass
class EvalReport:
    precision: list[float]
    recall: list[float]
    f1: list[float]
    macro_p: float
    macro_r: float
    macro_f1: float
    confusion: list[list[int]]
    timestamp: int = 0
    strategy: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "timestamp": self.timestamp,
            "strategy": self.strategy,
            "macro_p": self.macro_p,
            "macro_r": self.macro_r,
            "macro_f1": self.macro_f1,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": self.confusion,
        }
        d.update(self.extra)
        return d


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    predictions = np.asarray(predictions, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if predictions.shape != labels.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {labels.shape}")
    cm = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def macro_prf(predictions, labels, n_classes: int, timestamp: int = 0, strategy: str = "") -> EvalReport:
    """Per-class precision/recall/F1 and their unweighted means.

    A zero denominator gives 0 for that precision or recall, and F1 is 0 when
    precision + recall is 0.
    """
    cm = confusion_matrix(predictions, labels, n_classes)
    tp = np.diag(cm).astype(float)
    pred_tot = cm.sum(axis=0).astype(float)
    true_tot = cm.sum(axis=1).astype(float)
    p = np.divide(tp, pred_tot, out=np.zeros(n_classes), where=pred_tot > 0)
    r = np.divide(tp, true_tot, out=np.zeros(n_classes), where=true_tot > 0)
    denom = p + r
    f1 = np.divide(2 * p * r, denom, out=np.zeros(n_classes), where=denom > 0)
    return EvalReport(
        p.tolist(), r.tolist(), f1.tolist(),
        float(p.mean()), float(r.mean()), float(f1.mean()),
        cm.tolist(), timestamp, strategy,
    )


def make_synthetic(
    n_samples: int = 5000,
    n_features: int = 100,
    latent_dim: int = 8,
    separation: float = 1.0,
    pos_fraction: float = 0.5,
    noise: float = 1.0,
    seed: int = 0,
    name: str = "synthetic",
) -> Dataset:
    """Binary Gaussian-mixture data whose two feature halves share latent factors.

    Each sample draws a latent vector around a class-dependent mean (the two
    means are ``separation`` apart); every feature is a fixed random mix of the
    latent factors plus isotropic noise, so the second half of the columns is
    partly predictable from the first half.
    """
    rng = np.random.default_rng(seed)
    labels = (rng.random(n_samples) < pos_fraction).astype(int)
    direction = rng.normal(size=latent_dim)
    direction /= np.linalg.norm(direction)
    means = np.stack([-0.5 * separation * direction, 0.5 * separation * direction])
    latent = means[labels] + rng.normal(size=(n_samples, latent_dim))
    mixing = rng.normal(size=(latent_dim, n_features)) / np.sqrt(latent_dim)
    feats = latent @ mixing + noise * rng.normal(size=(n_samples, n_features))
    names = [f"x{i}" for i in range(n_features)]
    return Dataset(name, feats, labels, 2, names, {"0": 0, "1": 1})


def dataset_path(name: str, path=None):
    """Configured path, else the dataset's environment variable, else None."""
    if path:
        return path
    env = DATA_ENV.get(name)
    return os.environ.get(env) or None if env else None


def load_dataset(name: str, path=None, *, samples: int = 5000, features: int = 100, separation: float = 1.0, seed: int = 0):
    """Load a named dataset.

    ``bcw`` falls back to scikit-learn's copy; ``synthetic`` is generated
    unless a CSV is given; ``dcc`` and ``har`` need a local file.
    """
    path = dataset_path(name, path)
    if name == "bcw":
        return load_bcw(path)
    if name == "synthetic":
        if path:
            return load_csv(path, SCHEMAS["synthetic"], name="synthetic")
        return make_synthetic(samples, features, separation=separation, seed=seed)
    if name in SCHEMAS:
        if not path:
            raise IngestionError(
                f"dataset {name!r} needs a local CSV (set data_path or {DATA_ENV[name]}); source: {DATASET_URLS[name]}"
            )
        return load_csv(path, SCHEMAS[name], name=name)
    raise IngestionError(f"unknown dataset {name!r}")
