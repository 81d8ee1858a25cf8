"""Command line front end.

    python -m causaltransport verify-props   [--config F] [--out DIR]
    python -m causaltransport verify-theorem [--config F] [--out DIR]
    python -m causaltransport run            --config F [--seed N ...] [--method M] [--threads N] [--out DIR]
    python -m causaltransport sweep-nj       --config F [--seed N ...] [--threads N] [--out DIR]
    python -m causaltransport report         --out DIR

Exit status is 0 on success and otherwise depends on the error category.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import ExperimentConfig, load_config
from .errors import CausalTransportError
from .harness import emit_report, markdown_summary, read_metrics, run_experiment, sweep_nj, verify_propositions, verify_theorem

EXIT_CODES = {
    "error": 1,
    "config": 2,
    "model": 3,
    "query": 4,
    "resource": 5,
    "verification": 6,
    "numeric": 7,
    "data": 8,
    "io": 9,
}
CHECK_FAILED = 10


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causaltransport", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("verify-props", "transport checks and the non-identifiability witness"),
        ("verify-theorem", "estimand equality over random decomposed models"),
        ("run", "train and evaluate ERM, Ablation and Ours"),
        ("sweep-nj", "OOD accuracy of the same trained models over an n_j grid"),
        ("report", "rebuild report.md from an output directory's metrics.csv"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--seed", type=int, action="append", help="seed (repeatable); overrides the config")
        p.add_argument("--out", help="output directory; overrides the config")
        p.add_argument("--threads", type=int, default=1, help="worker processes for independent seeds")
        p.add_argument("--method", choices=["erm", "ablation", "ours", "all"], default="all")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config(args, default_kind: str) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig(kind=default_kind)
    if args.seed:
        cfg = replace(cfg, seeds=tuple(args.seed))
    if args.out:
        cfg = replace(cfg, out=args.out)
    if args.method != "all":
        cfg = replace(cfg, methods=(args.method,))
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            if not args.out:
                raise SystemExit("report needs --out DIR")
            from pathlib import Path

            record = read_metrics(Path(args.out) / "metrics.csv")
            text = markdown_summary(record)
            (Path(args.out) / "report.md").write_text(text)
            print(text, end="")
            return 0
        if args.command == "verify-props":
            cfg = _config(args, "verify-props")
            result = verify_propositions(cfg, cfg.out)
        elif args.command == "verify-theorem":
            cfg = _config(args, "verify-theorem")
            result = verify_theorem(cfg, cfg.out)
        else:
            cfg = _config(args, "cmnist")
            record = sweep_nj(cfg, threads=args.threads) if args.command == "sweep-nj" else run_experiment(cfg, args.threads)
            paths = emit_report(record, cfg.out)
            print(paths["report"].read_text(), end="")
            return 0
        for row in result["rows"]:
            print(f"{'pass' if row['passed'] else 'FAIL'}  {row['check']}: {row['value']}")
        return 0 if result["passed"] else CHECK_FAILED
    except CausalTransportError as exc:
        print(f"error ({exc.category}): {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    sys.exit(main())
