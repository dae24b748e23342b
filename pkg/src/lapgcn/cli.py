"""Command-line interface.

Exit codes: 0 success, 2 usage/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, NumericalError
from .harness import run_ablate, run_eval, run_spectral, run_sweep, run_train


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not values:
        raise ConfigError("empty list of masking ratios")
    return values


def _str_list(text: str) -> list[str]:
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise ConfigError("empty list of perturbation kinds")
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lapgcn",
        description="Train and stress-test the graph-spectral sequence classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("eval", help="evaluate a checkpoint under corruptions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mr", default="0,0.2,0.4,0.6,0.8", help="comma list of masking ratios")
    p.add_argument("--kinds", default="black,background", help="comma list of kinds")
    p.add_argument("--out", default=None)

    p = sub.add_parser("ablate", help="train and compare the component ablations")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", default=None)

    p = sub.add_parser("sweep", help="hyperparameter grid sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("spectral", help="eigenvalue / smoothness diagnostics")
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            paths = run_train(args.config, out_dir=args.out, seed_override=args.seed)
            print(f"checkpoint: {paths['checkpoint']}")
            print(f"manifest:   {paths['manifest']}")
            print(f"history:    {paths['history']}")
            print(f"final train accuracy: {paths['train_accuracy']:.4f}")
        elif args.command == "eval":
            path = run_eval(
                args.checkpoint, _float_list(args.mr), _str_list(args.kinds), out_dir=args.out
            )
            print(f"eval results: {path}")
        elif args.command == "ablate":
            if args.seeds < 1:
                raise ConfigError("--seeds must be >= 1")
            path = run_ablate(args.config, args.seeds, out_dir=args.out)
            print(f"ablation results: {path}")
        elif args.command == "sweep":
            path = run_sweep(args.config, args.grid, out_dir=args.out)
            print(f"sweep results: {path}")
        elif args.command == "spectral":
            if not args.config and not args.checkpoint:
                raise ConfigError("spectral needs --config or --checkpoint")
            spectrum, smoothness = run_spectral(
                config_path=args.config, checkpoint_path=args.checkpoint, out_dir=args.out
            )
            print(f"spectrum:   {spectrum}")
            print(f"smoothness: {smoothness}")
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
