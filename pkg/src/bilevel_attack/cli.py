"""Command-line entry point.

Subcommands: gen-data, train, attack, eval, landscape, report. All
randomness flows from explicit --seed flags; nothing reads environment
variables. Usage errors exit with status 2, runtime failures with 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import experiment as exp_mod
from .attacks import AttackerSpec
from .config import AttackConfig, load_config
from .errors import ConfigurationError
from .evaluate import (
    evaluate_atr_many,
    landscape_grid,
    rademacher_direction,
    save_landscape,
)
from .models import FeedForwardModel


def _cmd_gen_data(args: argparse.Namespace) -> int:
    ds = data_mod.generate_dataset(
        classes=args.classes,
        dim=args.dim,
        per_class=args.per_class,
        margin=args.margin,
        seed=args.seed,
        noise=args.noise,
        eval_fraction=args.eval_fraction,
    )
    data_mod.save_dataset(ds, args.out)
    print(f"wrote {args.out}: {ds.train_features.shape[0]} train / "
          f"{ds.eval_features.shape[0]} eval samples, {ds.num_classes} classes, dim {ds.dim}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    ds = data_mod.load_dataset(args.dataset)
    results = exp_mod.train_roster(ds, seed=args.seed, learning_rate=args.learning_rate)
    exp_mod.save_models({mid: r.model for mid, r in results.items()}, args.out)
    for mid, r in results.items():
        print(f"{mid}: kind={r.model.kind} train_accuracy={r.final_accuracy:.4f}")
    return 0


def _config_from_args(args: argparse.Namespace) -> AttackConfig:
    cfg = load_config(args.config)
    for name in ("dataset", "models_dir", "output", "seed", "epsilon", "alpha", "beta"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if args.lower_steps is not None:
        cfg.lower_steps = args.lower_steps
    if args.upper_steps is not None:
        cfg.upper_steps = args.upper_steps
    if args.dynamic_truncation is not None:
        cfg.dynamic_truncation = args.dynamic_truncation == "on"
    return cfg


def _cmd_attack(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    cfg.validate()
    if args.dry_run:
        print("config ok")
        return 0
    result = exp_mod.run_experiment(cfg)
    print(exp_mod.results_table_text(result), end="")
    print(f"average_truncation={result.average_truncation:.3f} hvp_total={result.hvp_total}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    ds = data_mod.load_dataset(args.dataset)
    model_ids = [s for s in args.model_ids.split(",") if s]
    models = exp_mod.load_models(args.models, model_ids)
    phis = exp_mod.read_phi_table(args.phi)
    if phis.shape != ds.eval_features.shape:
        raise ConfigurationError("perturbation table does not match the eval split")
    targets = None
    if args.targeted:
        targets = (
            np.full_like(ds.eval_labels, args.target_label)
            if args.target_label is not None
            else (ds.eval_labels + 1) % ds.num_classes
        )
    rates = evaluate_atr_many(
        models, ds.eval_features, ds.eval_features + phis, ds.eval_labels,
        targeted=args.targeted, target_labels=targets,
    )
    print("model_id,atr")
    for mid in model_ids:
        print(f"{mid},{rates[mid]:.6f}")
    return 0


def _cmd_landscape(args: argparse.Namespace) -> int:
    ds = data_mod.load_dataset(args.dataset)
    model = FeedForwardModel.load(args.model)
    idx = args.sample_index
    if not 0 <= idx < ds.eval_features.shape[0]:
        raise ConfigurationError(f"sample index {idx} outside the eval split")
    base = ds.eval_features[idx]
    label = int(ds.eval_labels[idx])
    rng = np.random.Generator(np.random.PCG64(args.seed))
    dir_x = np.sign(model.grad_input(base, label))
    dir_y = rademacher_direction(base.shape, rng)
    grid = landscape_grid(
        model, base, label, dir_x, dir_y,
        grid_range=(-args.range, args.range), resolution=args.resolution,
    )
    save_landscape(grid, args.out, model_id=model.model_id)
    print(f"wrote {args.out}: max={grid.max_point[2]:.6g} min={grid.min_point[2]:.6g}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    results_dir = Path(args.results)
    table = results_dir / "results.csv"
    meta_path = results_dir / "run_meta.json"
    if not table.exists() or not meta_path.exists():
        raise FileNotFoundError(f"no results found under {results_dir}")
    print(table.read_text(), end="")
    meta = json.loads(meta_path.read_text())
    print(f"fingerprint: {meta['fingerprint']}")
    print(f"mean victim atr: {meta['mean_victim_atr']}")
    print(f"average truncation: {meta['truncation']['average']:.3f} "
          f"of max {meta['truncation']['max_steps']}")
    print(f"hvp total: {meta['hvp']['total']}")
    print(f"reverse-pass seconds: {meta['timing']['reverse_pass_seconds']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bilevel-attack",
        description="Transfer attacks with bilevel-optimized perturbation initializations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--per-class", type=int, default=60)
    p.add_argument("--margin", type=float, default=0.32)
    p.add_argument("--noise", type=float, default=data_mod.DEFAULT_NOISE)
    p.add_argument("--eval-fraction", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train the reference model roster")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--learning-rate", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("attack", help="run the configured experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--dataset")
    p.add_argument("--models-dir", dest="models_dir")
    p.add_argument("--output")
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lower-steps", dest="lower_steps", type=int)
    p.add_argument("--upper-steps", dest="upper_steps", type=int)
    p.add_argument("--dynamic-truncation", dest="dynamic_truncation", choices=("on", "off"))
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("eval", help="score a saved perturbation table")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--model-ids", required=True)
    p.add_argument("--phi", required=True)
    p.add_argument("--targeted", action="store_true")
    p.add_argument("--target-label", type=int)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("landscape", help="loss values over a 2-d input slice")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--sample-index", type=int, default=0)
    p.add_argument("--resolution", type=int, default=21)
    p.add_argument("--range", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_landscape)

    p = sub.add_parser("report", help="summarize a results directory")
    p.add_argument("--results", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
