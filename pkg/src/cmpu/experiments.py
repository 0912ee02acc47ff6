"""End-to-end experiment pipelines with reproducible, manifest-backed runs.

A run is fully determined by its JSON config: corpus generation,
dictionary labeling, template-level train/test split, prior resolution,
training and strict entity-level evaluation all derive their seeds from
the config plus the run seed.  Sweep cells (estimator x lambda x
coverage x seed) are independent jobs executed by a worker pool bounded
by the ``CMPU_WORKERS`` environment variable; aggregation order is
fixed by sorting on the cell key, so outputs are byte-identical
regardless of parallelism.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import ClassPriors, estimate_priors_from_labels, make_priors
from .model import SgdConfig, SoftmaxModel, init_linear, init_mlp, save_model
from .nereval import (
    EvalResult,
    decode_corpus_bio,
    decode_spans_from_classes,
    eval_csv_header,
    eval_csv_row,
    eval_result_to_json,
    predict_token_classes,
    score,
)
from .risk import CmpuConfig, EstimatorKind, TraceRow, train, write_trace_csv
from .synthgen import (
    TaggedCorpus,
    annotation_quality,
    build_dictionary,
    corpus_to_pu,
    default_corpus_spec,
    distant_label,
    generate_corpus,
    write_conll,
)
from .verify import check_consistency_rate, check_unbiasedness, overfit_probe

__all__ = [
    "PipelineError",
    "CorpusConfig",
    "PriorsConfig",
    "ModelConfig",
    "SplitConfig",
    "ExperimentConfig",
    "RunArtifacts",
    "load_config",
    "config_to_dict",
    "config_hash",
    "single_run",
    "run_dsner",
    "run_lambda_sweep",
    "run_coverage_ablation",
    "run_verify_suite",
    "write_manifest",
    "rerun_manifest",
]


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message carries the stage tag."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class CorpusConfig:
    num_classes: int = 2
    lexicon_size: int = 60
    num_templates: int = 40
    num_sentences: int = 3000
    coverage: float = 0.2
    feature_dim: int = 256
    seed: int = 11


@dataclass(frozen=True)
class PriorsConfig:
    mode: str = "explicit"  # "explicit" | "estimate"
    values: tuple[float, ...] = (0.12, 0.12)
    gamma: float = 1.0

    def __post_init__(self):
        if self.mode not in ("explicit", "estimate"):
            raise ValueError(f"priors mode must be explicit or estimate, got {self.mode!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "linear"  # "linear" | "mlp"
    hidden: int = 32

    def __post_init__(self):
        if self.arch not in ("linear", "mlp"):
            raise ValueError(f"model arch must be linear or mlp, got {self.arch!r}")


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.2
    seed: int = 1234

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must be in (0, 1)")


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: CorpusConfig = CorpusConfig()
    priors: PriorsConfig = PriorsConfig()
    model: ModelConfig = ModelConfig()
    estimator: str = "cmpu"
    lam: float = 0.2
    sgd_learning_rate: float = 1.5
    sgd_batch_size: int = 256
    sgd_epochs: int = 6
    sgd_l2: float = 1e-3
    sgd_seed: int = 3
    split: SplitConfig = SplitConfig()
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)

    def __post_init__(self):
        EstimatorKind.from_string(self.estimator)
        if not self.lam > 0:
            raise ValueError("lambda must be > 0")
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def sgd(self, run_seed: int) -> SgdConfig:
        return SgdConfig(
            learning_rate=self.sgd_learning_rate,
            batch_size=self.sgd_batch_size,
            epochs=self.sgd_epochs,
            l2=self.sgd_l2,
            seed=self.sgd_seed + run_seed,
        )


def config_to_dict(config: ExperimentConfig) -> dict:
    payload = {
        "corpus": asdict(config.corpus),
        "priors": {
            "mode": config.priors.mode,
            "values": list(config.priors.values),
            "gamma": config.priors.gamma,
        },
        "model": asdict(config.model),
        "estimator": config.estimator,
        "lambda": config.lam,
        "sgd": {
            "learning_rate": config.sgd_learning_rate,
            "batch_size": config.sgd_batch_size,
            "epochs": config.sgd_epochs,
            "l2": config.sgd_l2,
            "seed": config.sgd_seed,
        },
        "split": asdict(config.split),
        "seeds": list(config.seeds),
    }
    return payload


def config_from_dict(payload: dict) -> ExperimentConfig:
    try:
        sgd = payload.get("sgd", {})
        return ExperimentConfig(
            corpus=CorpusConfig(**payload.get("corpus", {})),
            priors=PriorsConfig(**payload.get("priors", {})),
            model=ModelConfig(**payload.get("model", {})),
            estimator=payload.get("estimator", "cmpu"),
            lam=payload.get("lambda", 0.2),
            sgd_learning_rate=sgd.get("learning_rate", 1.5),
            sgd_batch_size=sgd.get("batch_size", 256),
            sgd_epochs=sgd.get("epochs", 6),
            sgd_l2=sgd.get("l2", 1e-3),
            sgd_seed=sgd.get("seed", 3),
            split=SplitConfig(**payload.get("split", {})),
            seeds=tuple(payload.get("seeds", (1, 2, 3, 4, 5))),
        )
    except TypeError as exc:
        raise ValueError(f"invalid config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Single pipeline run
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunArtifacts:
    seed: int
    evaluation: EvalResult
    quality: EvalResult
    trace: tuple[TraceRow, ...]
    model: SoftmaxModel
    priors: ClassPriors
    priors_clamped: bool


def _split_by_template(corpus: TaggedCorpus, test_fraction: float, seed: int):
    ids = sorted(set(corpus.template_ids))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    n_test = max(1, round(test_fraction * len(ids)))
    held_out = {ids[i] for i in order[:n_test]}
    train_idx = [i for i, t in enumerate(corpus.template_ids) if t not in held_out]
    test_idx = [i for i, t in enumerate(corpus.template_ids) if t in held_out]
    if not train_idx or not test_idx:
        raise ValueError("template holdout produced an empty split")
    return corpus.subset(train_idx), corpus.subset(test_idx)


def _resolve_priors(config: ExperimentConfig, train_corpus: TaggedCorpus):
    if config.priors.mode == "explicit":
        return make_priors(config.priors.values), False
    estimate = estimate_priors_from_labels(train_corpus, gamma=config.priors.gamma)
    return estimate.priors, estimate.clamped


def _evaluate(model: SoftmaxModel, test: TaggedCorpus) -> EvalResult:
    pred_classes = predict_token_classes(model, test)
    pred_spans = []
    for s, classes in enumerate(pred_classes):
        pred_spans.extend(decode_spans_from_classes(classes, s))
    gold_spans, _ = decode_corpus_bio(test.gold_labels, test.class_names)
    return score(
        pred_spans,
        gold_spans,
        test.num_tokens,
        np.concatenate(pred_classes),
        np.concatenate(test.gold_token_classes()),
        num_classes=test.num_classes,
    )


def single_run(
    config: ExperimentConfig,
    run_seed: int,
    estimator: Optional[str] = None,
    lam: Optional[float] = None,
    coverage: Optional[float] = None,
) -> RunArtifacts:
    """One pipeline execution: generate, label, split, train, score.

    All stage randomness derives from the config seeds plus
    ``run_seed``; re-running is bit-reproducible.  Optional arguments
    override the config cell-wise (used by sweeps).
    """
    kind = EstimatorKind.from_string(estimator or config.estimator)
    lam = config.lam if lam is None else float(lam)
    rho = config.corpus.coverage if coverage is None else float(coverage)

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, str(exc)) from exc

    spec = stage(
        "generate",
        default_corpus_spec,
        num_classes=config.corpus.num_classes,
        lexicon_size=config.corpus.lexicon_size,
        num_templates=config.corpus.num_templates,
        num_sentences=config.corpus.num_sentences,
        coverage=rho,
        feature_dim=config.corpus.feature_dim,
        seed=config.corpus.seed + run_seed,
    )
    corpus = stage("generate", generate_corpus, spec)
    labeled = stage("distant-label", distant_label, corpus, build_dictionary(spec, rho))
    train_corpus, test_corpus = stage(
        "split", _split_by_template, labeled,
        config.split.test_fraction, config.split.seed + run_seed,
    )
    priors, clamped = stage("priors", _resolve_priors, config, train_corpus)
    dataset = stage("to-pu", corpus_to_pu, train_corpus)
    quality = stage("annotation-quality", annotation_quality, train_corpus)
    if config.model.arch == "linear":
        model0 = init_linear(dataset.dim, dataset.num_classes, seed=config.sgd_seed + run_seed)
    else:
        model0 = init_mlp(dataset.dim, dataset.num_classes, config.model.hidden,
                          seed=config.sgd_seed + run_seed)
    model, trace = stage(
        "train", train, model0, dataset, priors, kind, CmpuConfig(lam),
        config.sgd(run_seed),
    )
    evaluation = stage("evaluate", _evaluate, model, test_corpus)
    return RunArtifacts(
        seed=run_seed,
        evaluation=evaluation,
        quality=quality,
        trace=tuple(trace),
        model=model,
        priors=priors,
        priors_clamped=clamped,
    )


# ---------------------------------------------------------------------------
# Output writing
# ---------------------------------------------------------------------------


def _write_json(payload: dict, path: Path, created: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    created.append(path)


def _write_text(text: str, path: Path, created: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    created.append(path)


def _cleanup(created: list) -> None:
    for path in created:
        try:
            Path(path).unlink()
        except OSError:
            pass


def write_manifest(out_dir: Path, command: str, config: ExperimentConfig,
                   params: dict, outputs: Sequence[str], created: list) -> None:
    payload = {
        "command": command,
        "config": config_to_dict(config),
        "config_hash": config_hash(config),
        "params": params,
        "version": __version__,
        "outputs": sorted(str(o) for o in outputs),
    }
    _write_json(payload, Path(out_dir) / "manifest.json", created)


def _run_summary(artifacts: Sequence[RunArtifacts]) -> dict:
    def agg(yields):
        values = np.asarray(list(yields), dtype=np.float64)
        return {"mean": float(values.mean()),
                "std": float(values.std(ddof=1)) if values.size > 1 else 0.0}

    return {
        "per_seed": {
            str(a.seed): eval_result_to_json(a.evaluation) for a in artifacts
        },
        "f1": agg(a.evaluation.f1 for a in artifacts),
        "precision": agg(a.evaluation.precision for a in artifacts),
        "recall": agg(a.evaluation.recall for a in artifacts),
        "token_accuracy": agg(a.evaluation.token_accuracy for a in artifacts),
    }


def run_dsner(config: ExperimentConfig, out_dir) -> dict:
    """Full pipeline for every config seed, with per-seed artifacts.

    Writes seed_<s>/{eval.json, eval.csv, trace.csv, quality.json,
    model.bin}, a summary pair and the manifest.  Any stage error aborts
    the run and removes everything written so far.
    """
    out = Path(out_dir)
    created: list = []
    try:
        artifacts = [single_run(config, s) for s in config.seeds]
        outputs = []
        for art in artifacts:
            sub = out / f"seed_{art.seed}"
            _write_json(eval_result_to_json(art.evaluation), sub / "eval.json", created)
            _write_text(eval_csv_header() + "\n" + eval_csv_row(art.evaluation) + "\n",
                        sub / "eval.csv", created)
            _write_json(eval_result_to_json(art.quality), sub / "quality.json", created)
            sub.mkdir(parents=True, exist_ok=True)
            trace_path = sub / "trace.csv"
            write_trace_csv(art.trace, trace_path)
            created.append(trace_path)
            model_path = sub / "model.bin"
            save_model(art.model, model_path)
            created.append(model_path)
            outputs.extend(
                f"seed_{art.seed}/{name}"
                for name in ("eval.json", "eval.csv", "quality.json", "trace.csv", "model.bin")
            )
        summary = _run_summary(artifacts)
        _write_json(summary, out / "summary.json", created)
        rows = ["seed," + eval_csv_header()]
        rows += [f"{a.seed}," + eval_csv_row(a.evaluation) for a in artifacts]
        _write_text("\n".join(rows) + "\n", out / "summary.csv", created)
        outputs += ["summary.json", "summary.csv"]
        write_manifest(out, "train", config, {}, outputs, created)
        return summary
    except Exception:
        _cleanup(created)
        raise


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _workers() -> int:
    raw = os.environ.get("CMPU_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"CMPU_WORKERS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError("CMPU_WORKERS must be >= 1")
    return n


def _cell_worker(payload: tuple) -> tuple:
    config_dict, estimator, lam, coverage, seed = payload
    config = config_from_dict(config_dict)
    art = single_run(config, seed, estimator=estimator, lam=lam, coverage=coverage)
    e = art.evaluation
    return (estimator, lam, coverage, seed,
            e.precision, e.recall, e.f1, e.token_accuracy)


def _run_cells(config: ExperimentConfig, cells: list[tuple]) -> list[tuple]:
    payloads = [(config_to_dict(config), *cell) for cell in cells]
    workers = _workers()
    if workers == 1 or len(payloads) <= 1:
        results = [_cell_worker(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_worker, payloads))

    def key(row):
        est, lam, coverage, seed = row[:4]
        return (str(est),
                -1.0 if lam is None else float(lam),
                -1.0 if coverage is None else float(coverage),
                int(seed))

    return sorted(results, key=key)


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), (float(arr.std(ddof=1)) if arr.size > 1 else 0.0)


def run_lambda_sweep(config: ExperimentConfig, lambdas: Sequence[float], out_dir) -> dict:
    """F1 against the constraint factor, aggregated over the config seeds."""
    lambdas = [float(v) for v in lambdas]
    if len(lambdas) < 1:
        raise ValueError("need at least one lambda")
    if any(v <= 0 for v in lambdas):
        raise ValueError("lambda values must be > 0")
    if sorted(set(lambdas)) != lambdas:
        raise ValueError("lambda values must be strictly increasing")
    out = Path(out_dir)
    created: list = []
    cells = [("cmpu", lam, None, seed) for lam in lambdas for seed in config.seeds]
    try:
        results = _run_cells(config, cells)
        runs_rows = ["lambda,seed,precision,recall,f1,token_accuracy"]
        for _, lam, _, seed, p, r, f1, acc in results:
            runs_rows.append(f"{lam!r},{seed},{p!r},{r!r},{f1!r},{acc!r}")
        summary_rows = ["lambda,n_seeds,f1_mean,f1_std,precision_mean,recall_mean,token_accuracy_mean"]
        summary = {}
        for lam in lambdas:
            cell = [row for row in results if row[1] == lam]
            f1_mean, f1_std = _mean_std([c[6] for c in cell])
            p_mean, _ = _mean_std([c[4] for c in cell])
            r_mean, _ = _mean_std([c[5] for c in cell])
            a_mean, _ = _mean_std([c[7] for c in cell])
            summary[lam] = {"f1_mean": f1_mean, "f1_std": f1_std,
                            "precision_mean": p_mean, "recall_mean": r_mean,
                            "token_accuracy_mean": a_mean, "n_seeds": len(cell)}
            summary_rows.append(
                f"{lam!r},{len(cell)},{f1_mean!r},{f1_std!r},{p_mean!r},{r_mean!r},{a_mean!r}"
            )
        _write_text("\n".join(runs_rows) + "\n", out / "lambda_sweep_runs.csv", created)
        _write_text("\n".join(summary_rows) + "\n", out / "lambda_sweep.csv", created)
        write_manifest(out, "sweep-lambda", config, {"lambdas": lambdas},
                       ["lambda_sweep_runs.csv", "lambda_sweep.csv"], created)
        return summary
    except Exception:
        _cleanup(created)
        raise


def run_coverage_ablation(
    config: ExperimentConfig,
    coverages: Sequence[float],
    estimators: Sequence[str] = ("mpn", "cmpu"),
    out_dir=None,
) -> dict:
    """P/R/F1 per (estimator, dictionary coverage), seeds aggregated.

    Coverages must be strictly increasing; prefix dictionaries make them
    nested by construction.
    """
    coverages = [float(v) for v in coverages]
    if len(coverages) < 1:
        raise ValueError("need at least one coverage")
    if any(not 0 < v <= 1 for v in coverages):
        raise ValueError("coverages must lie in (0, 1]")
    if sorted(set(coverages)) != coverages:
        raise ValueError("coverages must be strictly increasing (nested dictionaries)")
    estimators = list(estimators)
    for name in estimators:
        EstimatorKind.from_string(name)
    out = Path(out_dir)
    created: list = []
    cells = [(est, None, rho, seed)
             for est in estimators for rho in coverages for seed in config.seeds]
    try:
        results = _run_cells(config, cells)
        runs_rows = ["estimator,coverage,seed,precision,recall,f1,token_accuracy"]
        for est, _, rho, seed, p, r, f1, acc in results:
            runs_rows.append(f"{est},{rho!r},{seed},{p!r},{r!r},{f1!r},{acc!r}")
        summary_rows = [
            "estimator,coverage,n_seeds,precision_mean,recall_mean,f1_mean,"
            "precision_std,recall_std,f1_std,token_accuracy_mean"
        ]
        summary: dict = {}
        for est in sorted(estimators):
            for rho in coverages:
                cell = [c for c in results if c[0] == est and c[2] == rho]
                p_mean, p_std = _mean_std([c[4] for c in cell])
                r_mean, r_std = _mean_std([c[5] for c in cell])
                f1_mean, f1_std = _mean_std([c[6] for c in cell])
                a_mean, _ = _mean_std([c[7] for c in cell])
                summary[(est, rho)] = {
                    "precision_mean": p_mean, "recall_mean": r_mean,
                    "f1_mean": f1_mean, "precision_std": p_std,
                    "recall_std": r_std, "f1_std": f1_std,
                    "token_accuracy_mean": a_mean, "n_seeds": len(cell),
                }
                summary_rows.append(
                    f"{est},{rho!r},{len(cell)},{p_mean!r},{r_mean!r},{f1_mean!r},"
                    f"{p_std!r},{r_std!r},{f1_std!r},{a_mean!r}"
                )
        _write_text("\n".join(runs_rows) + "\n", out / "ablation_runs.csv", created)
        _write_text("\n".join(summary_rows) + "\n", out / "ablation.csv", created)
        write_manifest(out, "ablate-coverage", config,
                       {"coverages": coverages, "estimators": estimators},
                       ["ablation_runs.csv", "ablation.csv"], created)
        return summary
    except Exception:
        _cleanup(created)
        raise


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------


def run_verify_suite(
    seeds: Sequence[int],
    out_dir,
    num_resamples: int = 10_000,
    oracle_samples: int = 1_000_000,
    rate_sizes: Sequence[int] = (100, 400, 1600, 6400),
    rate_trials: int = 200,
    probe_sentences: int = 3000,
    lam: float = 0.2,
) -> dict:
    """Unbiasedness, consistency-rate and overfit-probe checks per seed.

    Returns the summary payload; ``passed`` is True only when every
    check passes for every seed.
    """
    from .synthgen import default_mixture_spec

    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    out = Path(out_dir)
    created: list = []
    reports: dict = {}
    try:
        for seed in seeds:
            spec = default_mixture_spec()
            fixed_model = init_linear(spec.dim, spec.num_classes, seed=42 + seed)
            unbiased = check_unbiasedness(
                spec, fixed_model, num_resamples=num_resamples,
                n_p=(20, 20), n_u=60, seed=seed, oracle_samples=oracle_samples,
            )
            rate = check_consistency_rate(
                spec, fixed_model, sizes=rate_sizes, trials_per_size=rate_trials,
                lam=lam, seed=seed, oracle_samples=oracle_samples,
            )
            corpus_spec = default_corpus_spec(num_sentences=probe_sentences, seed=11 + seed)
            corpus = generate_corpus(corpus_spec)
            labeled = distant_label(corpus, build_dictionary(corpus_spec, 0.2))
            dataset = corpus_to_pu(labeled)
            probe = overfit_probe(
                dataset, make_priors((0.12, 0.12)),
                SgdConfig(learning_rate=1.0, batch_size=256, epochs=10, seed=seed),
                lam=lam,
            )
            reports[seed] = {
                "unbiasedness": unbiased.to_json_dict(),
                "consistency_rate": rate.to_json_dict(),
                "overfit_probe": probe.to_json_dict(),
            }
            _write_json(reports[seed], out / f"verify_seed_{seed}.json", created)
        passed = all(
            all(check["passed"] for check in report.values())
            for report in reports.values()
        )
        summary = {"seeds": seeds, "passed": passed, "reports": {str(s): reports[s] for s in seeds}}
        _write_json(summary, out / "verify_summary.json", created)
        return summary
    except Exception:
        _cleanup(created)
        raise


# ---------------------------------------------------------------------------
# gen / label / eval entry points and manifest re-runs
# ---------------------------------------------------------------------------


def run_gen(config: ExperimentConfig, out_dir) -> Path:
    """Write the generated gold corpus (distant column all-O) to disk."""
    out = Path(out_dir)
    created: list = []
    try:
        spec = default_corpus_spec(
            num_classes=config.corpus.num_classes,
            lexicon_size=config.corpus.lexicon_size,
            num_templates=config.corpus.num_templates,
            num_sentences=config.corpus.num_sentences,
            coverage=config.corpus.coverage,
            feature_dim=config.corpus.feature_dim,
            seed=config.corpus.seed,
        )
        corpus = generate_corpus(spec)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "corpus.conll"
        write_conll(corpus, path)
        created.append(path)
        write_manifest(out, "gen", config, {}, ["corpus.conll"], created)
        return path
    except Exception:
        _cleanup(created)
        raise


def run_label(config: ExperimentConfig, out_dir, coverage: Optional[float] = None) -> Path:
    """Distantly label the config corpus and report annotation quality."""
    rho = config.corpus.coverage if coverage is None else float(coverage)
    out = Path(out_dir)
    created: list = []
    try:
        spec = default_corpus_spec(
            num_classes=config.corpus.num_classes,
            lexicon_size=config.corpus.lexicon_size,
            num_templates=config.corpus.num_templates,
            num_sentences=config.corpus.num_sentences,
            coverage=rho,
            feature_dim=config.corpus.feature_dim,
            seed=config.corpus.seed,
        )
        corpus = generate_corpus(spec)
        labeled = distant_label(corpus, build_dictionary(spec, rho))
        out.mkdir(parents=True, exist_ok=True)
        path = out / "labeled.conll"
        write_conll(labeled, path)
        created.append(path)
        _write_json(eval_result_to_json(annotation_quality(labeled)),
                    out / "quality.json", created)
        write_manifest(out, "label", config, {"coverage": rho},
                       ["labeled.conll", "quality.json"], created)
        return path
    except Exception:
        _cleanup(created)
        raise


def run_eval(config: ExperimentConfig, model_path, out_dir,
             run_seed: Optional[int] = None) -> EvalResult:
    """Score a saved model on the config's held-out gold split."""
    from .model import load_model

    seed = config.seeds[0] if run_seed is None else int(run_seed)
    out = Path(out_dir)
    created: list = []
    try:
        spec = default_corpus_spec(
            num_classes=config.corpus.num_classes,
            lexicon_size=config.corpus.lexicon_size,
            num_templates=config.corpus.num_templates,
            num_sentences=config.corpus.num_sentences,
            coverage=config.corpus.coverage,
            feature_dim=config.corpus.feature_dim,
            seed=config.corpus.seed + seed,
        )
        corpus = generate_corpus(spec)
        labeled = distant_label(corpus, build_dictionary(spec, config.corpus.coverage))
        _, test_corpus = _split_by_template(
            labeled, config.split.test_fraction, config.split.seed + seed,
        )
        model = load_model(model_path)
        result = _evaluate(model, test_corpus)
        _write_json(eval_result_to_json(result), out / "eval.json", created)
        _write_text(eval_csv_header() + "\n" + eval_csv_row(result) + "\n",
                    out / "eval.csv", created)
        write_manifest(out, "eval", config, {"seed": seed},
                       ["eval.json", "eval.csv"], created)
        return result
    except Exception:
        _cleanup(created)
        raise


def rerun_manifest(manifest_path, out_dir) -> dict:
    """Re-execute the command recorded in a manifest into a new directory."""
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    config = config_from_dict(manifest["config"])
    command = manifest["command"]
    params = manifest.get("params", {})
    if command == "train":
        return {"summary": run_dsner(config, out_dir)}
    if command == "sweep-lambda":
        return {"summary": run_lambda_sweep(config, params["lambdas"], out_dir)}
    if command == "ablate-coverage":
        run_coverage_ablation(config, params["coverages"], params["estimators"], out_dir)
        return {}
    if command == "gen":
        run_gen(config, out_dir)
        return {}
    if command == "label":
        run_label(config, out_dir, params.get("coverage"))
        return {}
    raise ValueError(f"manifest command {command!r} cannot be re-run")
