import csv
import json

import pytest

from vflsim import cli
from vflsim.config import RunConfig
from vflsim.errors import ConfigError

TINY = [
    "--dataset", "synthetic", "--synthetic-samples", "300", "--synthetic-features", "8", "--rep-dim", "6",
    "--ae-hidden", "10", "--ae-epochs", "1", "--ren-epochs", "1", "--perturber-epochs", "1", "--clf-epochs", "2",
    "--batch-size", "64",
]


def test_defaults_resolve_per_dataset():
    cfg = RunConfig(dataset="har")
    assert (cfg.ae_hidden, cfg.delta, cfg.lr) == (500, 0.5, 0.001)
    assert RunConfig(dataset="bcw", delta=0.3).delta == 0.3


def test_config_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"dataset": "dcc", "lam": 0.5, "T": 3}))
    cfg = RunConfig.load(path, {"lam": 0.7, "mode": None})
    assert (cfg.dataset, cfg.lam, cfg.T, cfg.mode) == ("dcc", 0.7, 3, "random")


def test_unknown_field_rejected(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"lamda": 0.5}))
    with pytest.raises(ConfigError, match="lamda"):
        RunConfig.load(path)


def test_validation_names_every_bad_field():
    with pytest.raises(ConfigError) as info:
        RunConfig(mode="sideways", lam=2.0, split_fraction=1.0)
    msg = str(info.value)
    for name in ("mode", "lam", "split_fraction"):
        assert name in msg


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.json")


def test_stage_lr_fallback():
    cfg = RunConfig(dataset="bcw", ren_lr=0.1)
    assert cfg.stage_lr("ren") == 0.1 and cfg.stage_lr("ae") == cfg.lr


def test_cli_static_layout(tmp_path, capsys):
    code = cli.main(["static", *TINY, "--folds", "2", "--out", str(tmp_path)])
    assert code == 0
    (run_dir,) = list(tmp_path.iterdir())
    for name in ("config.json", "report.json", "report.csv", "messages.jsonl", "static.png"):
        assert (run_dir / name).stat().st_size > 0
    report = json.loads((run_dir / "report.json").read_text())
    assert len(report["summary"]["privacy"]) == 2
    assert all(p["messages"] > 0 for p in report["summary"]["privacy"])
    rows = list(csv.DictReader(open(run_dir / "report.csv")))
    assert {r["strategy"] for r in rows} == {"nonfed_without_b", "nonfed_with_b", "dvfl"}
    assert {r["fold"] for r in rows} == {"0", "1"}
    out = capsys.readouterr().out
    assert "DVFL" in out and "F1=" in out


def test_cli_dynamic_layout(tmp_path, capsys):
    code = cli.main(["dynamic", *TINY, "--T", "3", "--mode", "uniform", "--out", str(tmp_path)])
    assert code == 0
    (run_dir,) = list(tmp_path.iterdir())
    assert (run_dir / "dynamic.png").exists()
    cfg = json.loads((run_dir / "config.json").read_text())
    assert cfg["mode"] == "uniform" and cfg["T"] == 3
    rows = list(csv.DictReader(open(run_dir / "report.csv")))
    assert len(rows) == 4 * 4
    first = json.loads(open(run_dir / "messages.jsonl").readline())
    assert first["type"] == "EstimatedReps"
    assert "(1:1)" in capsys.readouterr().out


def test_cli_deterministic(tmp_path):
    args = ["dynamic", *TINY, "--T", "2", "--seeds", "3"]
    assert cli.main([*args, "--out", str(tmp_path / "a")]) == 0
    assert cli.main([*args, "--out", str(tmp_path / "b")]) == 0

    def f1s(root):
        (d,) = list(root.iterdir())
        return [r["macro_f1"] for r in csv.DictReader(open(d / "report.csv"))]

    assert f1s(tmp_path / "a") == f1s(tmp_path / "b")


def test_cli_config_file_and_flag(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"T": 1, "lam": 0.5}))
    assert cli.main(["dynamic", *TINY, "--config", str(path), "--lam", "0.9", "--out", str(tmp_path / "r")]) == 0
    (d,) = list((tmp_path / "r").iterdir())
    cfg = json.loads((d / "config.json").read_text())
    assert (cfg["T"], cfg["lam"]) == (1, 0.9)


def test_cli_gen_synth(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["gen-synth", str(out), "--samples", "50", "--features", "4"]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 51


@pytest.mark.parametrize(
    "argv, code",
    [
        (["dynamic", "--mode", "bogus"], 2),
        (["dynamic", "--class-weights", "a,b"], 2),
        (["static", "--dataset", "dcc", "--data-path", "/nonexistent/dcc.csv"], 3),
        (["dynamic", *TINY, "--ae-lr", "1e6", "--ae-epochs", "3"], 4),
    ],
)
def test_cli_exit_codes(tmp_path, argv, code):
    assert cli.main([*argv, "--out", str(tmp_path)]) == code


def test_cli_verify_quick(tmp_path):
    out = tmp_path / "v.json"
    assert cli.main(["verify", "claim1", "--quick", "--json", str(out)]) == 0
    assert json.loads(out.read_text())[0]["passed"]
