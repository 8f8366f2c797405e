"""Command-line entry point: ``vflsim {static,dynamic,verify,gen-synth}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import reports as rep
from .config import RunConfig
from .data import make_synthetic
from .errors import (
    ConfigError,
    InfeasibleTimelineError,
    IngestionError,
    SplitError,
    StageError,
    TrainingError,
)
from .experiments import run_dynamic, run_static
from .verify import SUITES

log = logging.getLogger("vflsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_VERIFY = 5


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out", default="runs", help="results root (default: runs)")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in ("seeds", "strategies"):
            kind = int if f.name == "seeds" else str
            p.add_argument(flag, nargs="+", type=kind, default=None)
        elif f.name == "retrain_estimator":
            p.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        elif f.name == "class_weights":
            p.add_argument(flag, default=None, help="'auto', 'none' or comma-separated weights")
        else:
            default = RunConfig.__dataclass_fields__[f.name].default
            kind = {int: int, float: float}.get(type(default), str)
            if f.name in ("ae_hidden", "test_size"):
                kind = int
            elif f.name in ("delta", "lr", "ae_lr", "ren_lr", "perturber_lr", "clf_lr"):
                kind = float
            p.add_argument(flag, type=kind, default=None)


def _config_from_args(args, **forced) -> RunConfig:
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig)}
    cw = overrides.get("class_weights")
    if cw is not None and cw not in ("auto", "none"):
        try:
            overrides["class_weights"] = [float(v) for v in cw.split(",")]
        except ValueError:
            raise ConfigError(f"class_weights: cannot parse {cw!r}") from None
    overrides.update(forced)
    return RunConfig.load(args.config, overrides)


def _write_run(run_dir: Path, cfg: RunConfig, result, summary: dict) -> None:
    (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    rep.write_json(result.reports, run_dir / "report.json", {**summary, "privacy": result.privacy})
    rep.write_csv(result.reports, run_dir / "report.csv")
    with open(run_dir / "messages.jsonl", "w") as fh:
        for m in result.messages:
            fh.write(json.dumps(m) + "\n")


def cmd_static(args) -> int:
    cfg = _config_from_args(args, T=0)
    result = run_static(cfg)
    table = rep.median_table(result.reports)
    run_dir = rep.make_run_dir(args.out)
    _write_run(run_dir, cfg.replace(T=0), result, {"median_over_folds": table})
    rep.plot_static(result.reports, run_dir / "static.png")
    for name in ("nonfed_without_b", "nonfed_with_b", "dvfl"):
        m = table[name]
        print(f"{rep.STATIC_LABELS[name]:<18} P={m['macro_p']:.4f} R={m['macro_r']:.4f} F1={m['macro_f1']:.4f}")
    print(f"results: {run_dir}")
    return EXIT_OK


def cmd_dynamic(args) -> int:
    cfg = _config_from_args(args)
    result = run_dynamic(cfg)
    table = rep.median_table(result.reports, ("strategy", "timestamp"))
    run_dir = rep.make_run_dir(args.out)
    _write_run(run_dir, cfg, result, {"median_over_seeds": table})
    rep.plot_dynamic(result.reports, run_dir / "dynamic.png")
    ratios = {r.timestamp: r.extra.get("class_ratio", "") for r in result.reports}
    strategies = list(dict.fromkeys(r.strategy for r in result.reports))
    print("t  " + f"{'class ratio':<24}" + "".join(f"{s:>10}" for s in strategies))
    for t in sorted(ratios):
        print(f"{t:<3}{ratios[t]:<24}" + "".join(f"{table[f'{s}/{t}']['macro_f1']:>10.4f}" for s in strategies))
    print(f"results: {run_dir}")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in names:
        kwargs = {}
        if name in ("he", "protocol"):
            kwargs["modulus_bits"] = args.modulus_bits
        if args.quick and name == "he":
            kwargs["trials"] = 500
        if args.quick and name == "gradcheck":
            kwargs["include_default"] = False
        res = SUITES[name](**kwargs)
        results.append(res)
        print(res.line())
    if args.json:
        Path(args.json).write_text(json.dumps([dataclasses.asdict(r) for r in results], indent=2, default=str))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_gen_synth(args) -> int:
    ds = make_synthetic(args.samples, args.features, separation=args.separation, pos_fraction=args.pos_fraction, seed=args.seed)
    ds.write_csv(args.output)
    print(f"wrote {len(ds)} rows x {ds.n_features} features to {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vflsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("static", help="cross-validated static scenario with non-federated references")
    _add_config_flags(p)
    p.set_defaults(func=cmd_static)

    p = sub.add_parser("dynamic", help="timeline of arrivals, every update strategy")
    _add_config_flags(p)
    p.set_defaults(func=cmd_dynamic)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", choices=[*SUITES, "all"])
    p.add_argument("--modulus-bits", type=int, default=512)
    p.add_argument("--quick", action="store_true", help="fewer trials")
    p.add_argument("--json", help="also write results to this file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-synth", help="write a synthetic Gaussian-mixture CSV")
    p.add_argument("output")
    p.add_argument("--samples", type=int, default=5000)
    p.add_argument("--features", type=int, default=100)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--pos-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synth)
    return parser


def _root_cause(exc: BaseException) -> BaseException:
    return exc.cause if isinstance(exc, StageError) else exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestionError, SplitError, InfeasibleTimelineError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StageError as exc:
        cause = _root_cause(exc)
        print(f"error in stage {exc.stage}: {cause}", file=sys.stderr)
        if isinstance(cause, TrainingError):
            return EXIT_DIVERGED
        if isinstance(cause, (IngestionError, SplitError, InfeasibleTimelineError)):
            return EXIT_DATA
        return 1
    except TrainingError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
