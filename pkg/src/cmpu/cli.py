"""Command-line experiment runner.

Exit codes: 0 success, 1 validation error, 2 runtime error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .experiments import (
    CorpusConfig,
    ExperimentConfig,
    PipelineError,
    load_config,
    rerun_manifest,
    run_coverage_ablation,
    run_dsner,
    run_eval,
    run_gen,
    run_label,
    run_lambda_sweep,
    run_verify_suite,
)
from .model import NumericalDivergenceError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_VERIFY_FAILED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValueError(message)


def _float_list(raw: str) -> list[float]:
    return [float(v) for v in raw.split(",") if v]


def _int_list(raw: str) -> list[int]:
    return [int(v) for v in raw.split(",") if v]


def _resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seeds=(args.seed,))
    if getattr(args, "estimator", None) is not None:
        config = replace(config, estimator=args.estimator)
    if getattr(args, "lam", None) is not None:
        config = replace(config, lam=args.lam)
    if getattr(args, "coverage", None) is not None:
        config = replace(config, corpus=replace(config.corpus, coverage=args.coverage))
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cmpu", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, coverage=True, estimator=True):
        p.add_argument("--config", help="JSON experiment config; defaults built in")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="replace the config seed list with one seed")
        if estimator:
            p.add_argument("--estimator", choices=["mpn", "mpu", "mpu-nn", "cmpu"])
            p.add_argument("--lambda", dest="lam", type=float)
        if coverage:
            p.add_argument("--coverage", type=float, help="dictionary coverage in (0, 1]")

    common(sub.add_parser("gen", help="generate the synthetic corpus"), estimator=False)
    common(sub.add_parser("label", help="distantly label the corpus"), estimator=False)
    common(sub.add_parser("train", help="run the training pipeline and score it"))

    p_eval = sub.add_parser("eval", help="score a saved model on the held-out split")
    common(p_eval, estimator=False, coverage=False)
    p_eval.add_argument("--model", required=True, help="path to a saved model")

    p_sweep = sub.add_parser("sweep-lambda", help="F1 versus the constraint factor")
    common(p_sweep, estimator=False)
    p_sweep.add_argument("--lambdas", type=_float_list,
                         default=[0.05, 0.1, 0.2, 0.5, 1.0, 2.0])

    p_abl = sub.add_parser("ablate-coverage", help="P/R/F1 versus dictionary coverage")
    common(p_abl, estimator=False, coverage=False)
    p_abl.add_argument("--coverages", type=_float_list,
                       default=[0.2, 0.4, 0.6, 0.8, 1.0])
    p_abl.add_argument("--estimators", default="mpn,cmpu",
                       help="comma-separated estimator names")

    p_verify = sub.add_parser("verify", help="statistical checks of the estimators")
    p_verify.add_argument("--out", required=True)
    p_verify.add_argument("--seeds", type=_int_list, default=[0])
    p_verify.add_argument("--resamples", type=int, default=10_000)
    p_verify.add_argument("--oracle-samples", type=int, default=1_000_000)
    p_verify.add_argument("--rate-trials", type=int, default=200)
    p_verify.add_argument("--probe-sentences", type=int, default=3000)

    p_rerun = sub.add_parser("rerun", help="re-execute a recorded manifest")
    p_rerun.add_argument("--manifest", required=True)
    p_rerun.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "gen":
            path = run_gen(_resolve_config(args), args.out)
            print(f"wrote {path}")
        elif args.command == "label":
            path = run_label(_resolve_config(args), args.out,
                             coverage=getattr(args, "coverage", None))
            print(f"wrote {path}")
        elif args.command == "train":
            summary = run_dsner(_resolve_config(args), args.out)
            print(json.dumps({"f1": summary["f1"], "recall": summary["recall"]},
                             sort_keys=True))
        elif args.command == "eval":
            result = run_eval(_resolve_config(args), args.model, args.out,
                              run_seed=args.seed)
            print(json.dumps({"precision": result.precision, "recall": result.recall,
                              "f1": result.f1}, sort_keys=True))
        elif args.command == "sweep-lambda":
            summary = run_lambda_sweep(_resolve_config(args), args.lambdas, args.out)
            print(json.dumps({str(k): v["f1_mean"] for k, v in summary.items()},
                             sort_keys=True))
        elif args.command == "ablate-coverage":
            run_coverage_ablation(
                _resolve_config(args), args.coverages,
                [e for e in args.estimators.split(",") if e], args.out,
            )
            print(f"wrote {args.out}/ablation.csv")
        elif args.command == "verify":
            summary = run_verify_suite(
                args.seeds, args.out,
                num_resamples=args.resamples,
                oracle_samples=args.oracle_samples,
                rate_trials=args.rate_trials,
                probe_sentences=args.probe_sentences,
            )
            print(json.dumps({"passed": summary["passed"]}))
            if not summary["passed"]:
                return EXIT_VERIFY_FAILED
        elif args.command == "rerun":
            rerun_manifest(args.manifest, args.out)
            print(f"re-ran manifest into {args.out}")
        return EXIT_OK
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (PipelineError, NumericalDivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
