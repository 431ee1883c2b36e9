"""Command line entry point: ``frontier-sampler {run,coverage,qq}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, FrontierError
from .harness import ExperimentConfig, run_coverage, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("frontier_sampler")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frontier-sampler", description="Exact and asymptotic sampling of frontier estimators.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="draw a batch and write diagnostics")
    run.add_argument("--config", required=True)
    run.add_argument("--out-dir", default=".")
    run.add_argument("--oracle", action="store_true", help="also draw the brute-force batch")
    run.add_argument("--seed", type=int)

    cov = sub.add_parser("coverage", help="coverage and size of confidence regions")
    cov.add_argument("--config", required=True)
    cov.add_argument("--reps", type=int, required=True)
    cov.add_argument("--out-dir", default=".")
    cov.add_argument("--seed", type=int)

    qq = sub.add_parser("qq", help="write QQ data only")
    qq.add_argument("--config", required=True)
    qq.add_argument("--out-dir", default=".")
    qq.add_argument("--seed", type=int)
    return ap


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        out = Path(args.out_dir)
        if args.command == "run":
            report = run_experiment(cfg, out, oracle=args.oracle)
            for r in report.records:
                print(f"{r.name:14s} ks={r.ks_statistic_vs_asymptotic:.4f} qq_slope={r.qq_slope:.4f} bias={r.mean_bias:+.4f}")
            print(f"worst: {report.worst_quantity}  runtime: {report.runtime_seconds:.2f}s")
        elif args.command == "coverage":
            if args.reps < 1:
                raise ConfigError("--reps must be >= 1")
            table = run_coverage(cfg, args.reps, out_dir=out)
            for row in table.rows:
                print(f"{row['portfolio']:6s} level={row['level']:.3f} coverage={row['coverage']:.4f} size={row['size']:.4f}")
        else:
            cfg = cfg.replace(outputs=("qq",))
            run_experiment(cfg, out)
            print(out / "qq.csv")
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except FrontierError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
