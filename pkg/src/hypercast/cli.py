"""Command-line entry points; all numerics live in the library modules."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import torch

from .baselines import last_value_forecast, tod_average_forecast
from .config import ConfigError, RunConfig, load_run_config
from .data import (PatternSpec, generate_synthetic, load_corpus, prepare,
                   write_corpus)
from .metrics import compute_metrics
from .model import ABLATION_VARIANTS, HypergraphForecaster, ModelConfig
from .training import (TrainingDiverged, evaluate_model, load_checkpoint,
                       save_checkpoint, train)
from .verify import run_checks


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _make_run_dir(root: str, tag: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(root) / f"{stamp}-{tag}"
    path, suffix = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}-{suffix}")
        suffix += 1
    path.mkdir(parents=True)
    return path


def _model_config(cfg: RunConfig, num_nodes: int, slots_per_day: int) -> ModelConfig:
    try:
        return ModelConfig(
            num_nodes=num_nodes,
            input_len=cfg.input_len,
            horizon=cfg.horizon,
            slots_per_day=slots_per_day,
            **dataclasses.asdict(cfg.model),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _run_training(cfg: RunConfig, tag: str, variant: str | None = None) -> Path:
    if not cfg.data:
        raise ConfigError("config must set 'data' to a dataset descriptor path")
    corpus = load_corpus(cfg.data)
    bundle = prepare(corpus, cfg.input_len, cfg.horizon)
    model_cfg = _model_config(cfg, bundle.num_nodes, bundle.slots_per_day)

    run_dir = _make_run_dir(cfg.output_dir, tag)
    snapshot = cfg.as_dict()
    snapshot["resolved_model"] = dataclasses.asdict(model_cfg)
    if variant:
        snapshot["variant"] = variant
    _write_text(run_dir / "config.json", json.dumps(snapshot, indent=2) + "\n")

    torch.manual_seed(cfg.seed)
    model = HypergraphForecaster(model_cfg)
    result = train(model, bundle, cfg.train)

    _write_text(run_dir / "history.jsonl",
                "".join(json.dumps(r) + "\n" for r in result.history))
    save_checkpoint(run_dir / "checkpoint.pt", model, bundle.normalizer,
                    extra={"run_config": snapshot, "best_epoch": result.best_epoch,
                           "best_val_mae": result.best_val_mae})
    reports = {
        split: evaluate_model(model, getattr(bundle, split), bundle.normalizer).as_dict()
        for split in ("val", "test")
    }
    _write_text(run_dir / "metrics.json", json.dumps(reports, indent=2) + "\n")
    print(f"run directory: {run_dir}")
    print(f"best epoch {result.best_epoch}: val MAE {result.best_val_mae:.4f}, "
          f"test MAE {reports['test']['mae']:.4f}")
    return run_dir


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.set, args.seed)
    _run_training(cfg, cfg.tag or "train")
    return 0


def cmd_ablate(args) -> int:
    if args.variant not in ABLATION_VARIANTS:
        raise ConfigError(
            f"unknown variant '{args.variant}'; valid variants: "
            + ", ".join(sorted(ABLATION_VARIANTS))
        )
    cfg = load_run_config(args.config, args.set, args.seed)
    for flag, value in ABLATION_VARIANTS[args.variant].items():
        setattr(cfg.model, flag, value)
    _run_training(cfg, cfg.tag or args.variant, variant=args.variant)
    return 0


def _format_report(report: dict) -> str:
    lines = [f"MAE {report['mae']:.4f}  RMSE {report['rmse']:.4f}  MAPE {report['mape']:.2f}%"]
    if report.get("per_horizon"):
        lines.append("horizon     MAE      RMSE     MAPE")
        for row in report["per_horizon"]:
            lines.append(f"{row['horizon']:>7d} {row['mae']:>9.4f} {row['rmse']:>9.4f} "
                         f"{row['mape']:>7.2f}%")
    return "\n".join(lines)


def cmd_eval(args) -> int:
    model, normalizer, _ = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.data)
    if corpus.num_nodes != model.cfg.num_nodes:
        raise ValueError(
            f"node-count mismatch: checkpoint expects {model.cfg.num_nodes} nodes, "
            f"dataset has {corpus.num_nodes}"
        )
    bundle = prepare(corpus, model.cfg.input_len, model.cfg.horizon)
    windows = getattr(bundle, args.split)
    report = evaluate_model(model, windows, normalizer, per_horizon=True).as_dict()
    print(_format_report(report))
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / f"metrics-{args.split}.json"
    _write_text(out, json.dumps(report, indent=2) + "\n")
    print(f"wrote {out}")
    return 0


def cmd_export_embeddings(args) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    table = model.spatial_embedding().detach().numpy()
    lines = [",".join(["node_id"] + [f"e{i}" for i in range(table.shape[1])])]
    for node_id, row in enumerate(table):
        lines.append(",".join([str(node_id)] + [repr(float(v)) for v in row]))
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "embeddings.csv"
    _write_text(out, "\n".join(lines) + "\n")
    print(f"wrote {out} ({table.shape[0]} nodes x {table.shape[1]} dims)")
    return 0


def cmd_synth(args) -> int:
    spec = PatternSpec(num_groups=args.groups, noise_std=args.noise,
                       period_minutes=args.period)
    corpus = generate_synthetic(args.nodes, args.steps, args.seed, spec)
    descriptor = write_corpus(corpus, args.out, name=args.name)
    print(f"wrote {descriptor}")
    return 0


def cmd_verify(args) -> int:
    results = run_checks()
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name:<28s} {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_baselines(args) -> int:
    corpus = load_corpus(args.data)
    bundle = prepare(corpus)
    for name, fn in (("last_value", last_value_forecast),
                     ("tod_average", tod_average_forecast)):
        pred, target = fn(bundle, getattr(bundle, args.split))
        report = compute_metrics(pred, target)
        print(f"{name:<12s} MAE {report.mae:.4f}  RMSE {report.rmse:.4f}  "
              f"MAPE {report.mape:.2f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypercast",
        description="Prototype-guided hypergraph forecasting for traffic corpora",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")

    p = sub.add_parser("train", help="train a model and write a run directory")
    add_config_args(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset descriptor path")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", help="metrics file (default: next to the checkpoint)")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("ablate", help="train one named ablation variant")
    add_config_args(p)
    p.add_argument("--variant", required=True,
                   help="one of: " + ", ".join(sorted(ABLATION_VARIANTS)))
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("export-embeddings",
                       help="dump the per-node embedding table as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_export_embeddings)

    p = sub.add_parser("synth", help="generate a deterministic synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--nodes", type=int, default=6)
    p.add_argument("--steps", type=int, default=600)
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--noise", type=float, default=8.0)
    p.add_argument("--period", type=int, default=5)
    p.add_argument("--name", default="synthetic")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("baselines", help="score the naive baselines on one split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(handler=cmd_baselines)

    p = sub.add_parser("verify", help="run the oracle/invariant/gradient suite")
    p.set_defaults(handler=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main(argv=sys.argv[1:]))
