"""Command-line front end.

    crop train-generic --config cfg.yaml [--seed N] [--out DIR]
    crop personalize   --config cfg.yaml --method {conventional,crop}
                       [--seed N] [--out DIR] [--variant NAME]
                       [--strategy S] [--regularizer R]
                       [--iterative-passes N] [--partial-finetune]
    crop evaluate      --config cfg.yaml [--seed N] [--out DIR]
    crop diagnose      --config cfg.yaml [--seed N] [--out DIR] [--layer N]

Exit codes: 0 success, 2 usage/config error, 3 numeric failure (NaN/Inf).
``CROP_THREADS`` caps the (user, seed) fan-out of personalize.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import harness
from .config import load_config
from .errors import NumericError, StructureError, UsageError
from .pruning import STRATEGIES
from .training import REGULARIZERS

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crop", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment YAML")
        p.add_argument("--seed", type=int, default=None,
                       help="run a single seed instead of every configured seed")
        p.add_argument("--out", default=None, help="override output_dir")

    common(sub.add_parser("train-generic", help="train the generic model per seed"))

    p = sub.add_parser("personalize", help="personalize per (user, seed)")
    common(p)
    p.add_argument("--method", required=True, choices=("conventional", "crop"))
    p.add_argument("--variant", default=None,
                   help="state label for the outputs (default: the method name)")
    p.add_argument("--strategy", default=None, choices=STRATEGIES)
    p.add_argument("--regularizer", default=None, choices=REGULARIZERS)
    p.add_argument("--iterative-passes", type=int, default=None)
    p.add_argument("--partial-finetune", action="store_true", default=None)

    common(sub.add_parser("evaluate", help="write evaluation and summary CSVs"))

    p = sub.add_parser("diagnose", help="write gradient-alignment/FIM/heatmap CSVs")
    common(p)
    p.add_argument("--layer", type=int, default=None, help="heatmap layer index")

    return parser


def _setup_logging(output_dir: Path) -> None:
    logs = output_dir / "logs"
    logs.mkdir(parents=True, exist_ok=True)
    root = logging.getLogger("crop")
    root.setLevel(logging.INFO)
    root.handlers.clear()
    fh = logging.FileHandler(logs / "crop.log")
    fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    sh = logging.StreamHandler(sys.stderr)
    sh.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(fh)
    root.addHandler(sh)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, output_dir=Path(args.out))
        seeds = None if args.seed is None else [args.seed]
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        _setup_logging(Path(cfg.output_dir))

        if args.command == "train-generic":
            harness.run_train_generic(cfg, seeds)
        elif args.command == "personalize":
            harness.run_personalize(
                cfg,
                method=args.method,
                seeds=seeds,
                variant=args.variant,
                strategy=args.strategy,
                regularizer=args.regularizer,
                iterative_passes=args.iterative_passes,
                partial_finetune=args.partial_finetune,
            )
        elif args.command == "evaluate":
            harness.run_evaluate(cfg, seeds)
        elif args.command == "diagnose":
            harness.run_diagnose(cfg, seeds, layer_index=args.layer)
        return EXIT_OK
    except (UsageError, StructureError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
