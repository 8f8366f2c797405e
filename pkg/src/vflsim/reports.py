"""Results directory layout, tabular outputs and figures."""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CSV_COLUMNS = ["dataset", "fold", "seed", "mode", "timestamp", "class_ratio", "strategy", "macro_p", "macro_r", "macro_f1"]


def make_run_dir(root="runs", stamp: str | None = None) -> Path:
    """``root/<timestamp>``; a numeric suffix keeps concurrent runs apart."""
    stamp = stamp or time.strftime("%Y%m%d-%H%M%S")
    base = Path(root) / stamp
    path, i = base, 1
    while path.exists():
        path = base.with_name(f"{stamp}-{i}")
        i += 1
    path.mkdir(parents=True)
    return path


def rows(reports) -> list[dict]:
    out = []
    for r in reports:
        d = r.to_dict()
        out.append({c: d.get(c, "") for c in CSV_COLUMNS})
    return out


def write_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        w.writerows(rows(reports))


def write_json(reports, path, summary: dict | None = None) -> None:
    doc = {"reports": [r.to_dict() for r in reports]}
    if summary is not None:
        doc["summary"] = summary
    Path(path).write_text(json.dumps(doc, indent=2, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def median_table(reports, keys=("strategy",)) -> dict:
    """Median macro-P/R/F1 grouped by ``keys`` (joined with '/')."""
    groups: dict[str, list] = {}
    for r in reports:
        d = r.to_dict()
        groups.setdefault("/".join(str(d[k]) for k in keys), []).append(r)
    return {
        k: {m: float(np.median([getattr(r, m) for r in v])) for m in ("macro_p", "macro_r", "macro_f1")}
        for k, v in groups.items()
    }


STATIC_LABELS = {"nonfed_without_b": "Non-Fed without B", "nonfed_with_b": "Non-Fed with B", "dvfl": "DVFL"}


def plot_static(reports, path) -> None:
    table = median_table(reports)
    names = [s for s in STATIC_LABELS if s in table]
    metrics = ("macro_p", "macro_r", "macro_f1")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.8 / len(names)
    x = np.arange(len(metrics))
    for i, s in enumerate(names):
        ax.bar(x + i * width, [table[s][m] for m in metrics], width, label=STATIC_LABELS[s])
    ax.set_xticks(x + width * (len(names) - 1) / 2, ["macro-P", "macro-R", "macro-F1"])
    ax.set_ylim(0, 1)
    ax.set_ylabel("median over folds")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_dynamic(reports, path) -> None:
    table = median_table(reports, ("strategy", "timestamp"))
    strategies = sorted({r.strategy for r in reports})
    ts = sorted({r.timestamp for r in reports})
    ratios = {}
    for r in reports:
        ratios.setdefault(r.timestamp, r.extra.get("class_ratio", ""))
    fig, ax = plt.subplots(figsize=(6.5, 3.8))
    for s in strategies:
        ax.plot(ts, [table[f"{s}/{t}"]["macro_f1"] for t in ts], marker="o", label=s)
    ax.set_xticks(ts, [f"{t}\n{ratios[t].split('(')[-1].rstrip(')')}" for t in ts])
    ax.set_xlabel("timestamp (pos:neg of arrival)")
    ax.set_ylabel("median macro-F1")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
