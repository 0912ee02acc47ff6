"""Monte Carlo verification of the risk estimators' statistical behavior.

Three checks, all deterministic given their seeds:

* unbiasedness: over many independent PU resamples, the mean of the
  naive estimator matches a giant-sample supervised evaluation of the
  same fixed model; reported as a z-score against the Monte Carlo
  standard error.
* consistency rate: the rms deviation of the constrained estimator from
  the true risk shrinks like n^(-1/2); the log-log slope across a grid
  of sample sizes should sit near -0.5.
* overfit probe: with a flexible (one-hidden-layer) model, naive
  training drives its unlabeled-minus-positive term negative, while the
  constrained estimator's clamp keeps its reported lower bound intact
  at every minibatch.

Oracle values come from giant-sample plug-in estimates rather than
closed-form integration: dimension-agnostic, and the residual sampling
error is far below the acceptance bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ClassPriors, PuDataset
from .model import SgdConfig, SoftmaxModel, forward_batch, init_mlp, mae_loss_batch
from .risk import (
    Branch,
    CmpuConfig,
    EstimatorKind,
    RiskComponents,
    TraceRow,
    cmpu_risk,
    mpn_risk,
    mpu_naive_risk,
    train,
)
from .synthgen import MixtureSpec, sample_pu_dataset

__all__ = [
    "UnbiasednessResult",
    "RateCheckResult",
    "OverfitProbeResult",
    "oracle_risk",
    "check_unbiasedness",
    "check_consistency_rate",
    "overfit_probe",
]

Z_BAND = 3.0
SLOPE_BAND = (-0.65, -0.35)


def oracle_risk(
    spec: MixtureSpec,
    model: SoftmaxModel,
    n_per_term: int = 1_000_000,
    seed: int = 0,
    batch: int = 200_000,
) -> float:
    """Supervised risk of a fixed model, by giant-sample plug-in.

    Each class-conditional expectation is estimated with ``n_per_term``
    fresh draws; the total follows the supervised decomposition
    (weighted positive risks plus the negative-class risk).
    """
    rng = np.random.default_rng(seed)
    means = spec.means

    def conditional_mean_loss(class_index: int, label: int) -> float:
        remaining = n_per_term
        acc = 0.0
        while remaining > 0:
            m = min(batch, remaining)
            x = means[class_index] + spec.scale * rng.standard_normal((m, spec.dim))
            acc += float(mae_loss_batch(forward_batch(model, x), label).sum())
            remaining -= m
        return acc / n_per_term

    rp_plus = tuple(
        conditional_mean_loss(i, i) for i in range(1, spec.num_classes + 1)
    )
    negative = conditional_mean_loss(0, 0)
    components = RiskComponents(rp_plus, tuple(0.0 for _ in rp_plus), 0.0)
    return mpn_risk(components, spec.priors, negative)


@dataclass(frozen=True)
class UnbiasednessResult:
    mc_mean: float
    mc_std: float
    stderr: float
    oracle: float
    z_score: float
    num_resamples: int
    n_p: tuple[int, ...]
    n_u: int
    seed: int

    @property
    def passed(self) -> bool:
        return abs(self.z_score) < Z_BAND

    def to_json_dict(self) -> dict:
        return {
            "check": "unbiasedness",
            "mc_mean": self.mc_mean,
            "mc_std": self.mc_std,
            "stderr": self.stderr,
            "oracle": self.oracle,
            "z_score": self.z_score,
            "z_band": Z_BAND,
            "num_resamples": self.num_resamples,
            "n_p": list(self.n_p),
            "n_u": self.n_u,
            "seed": self.seed,
            "passed": self.passed,
        }


def check_unbiasedness(
    spec: MixtureSpec,
    fixed_model: SoftmaxModel,
    num_resamples: int,
    n_p: Sequence[int],
    n_u: int,
    seed: int = 0,
    oracle_samples: int = 1_000_000,
    priors: Optional[ClassPriors] = None,
) -> UnbiasednessResult:
    """Monte Carlo mean of the naive estimator vs the oracle risk.

    ``priors`` defaults to the spec's true priors; passing different
    values deliberately corrupts the estimator, which pushes the
    z-score far outside the band (used by the fault-injection test).
    """
    if num_resamples < 2:
        raise ValueError("need num_resamples >= 2: stderr undefined otherwise")
    use_priors = spec.priors if priors is None else priors
    rng = np.random.default_rng(seed)
    totals = np.empty(num_resamples, dtype=np.float64)
    for k in range(num_resamples):
        ds, _ = sample_pu_dataset(spec, n_p, n_u, seed=rng)
        from .risk import risk_components

        totals[k] = mpu_naive_risk(risk_components(fixed_model, ds), use_priors).total
    oracle = oracle_risk(spec, fixed_model, n_per_term=oracle_samples, seed=seed + 1)
    mean = float(totals.mean())
    std = float(totals.std(ddof=1))
    stderr = std / math.sqrt(num_resamples)
    z = (mean - oracle) / stderr if stderr > 0 else math.inf * np.sign(mean - oracle)
    return UnbiasednessResult(
        mc_mean=mean,
        mc_std=std,
        stderr=stderr,
        oracle=oracle,
        z_score=float(z),
        num_resamples=num_resamples,
        n_p=tuple(int(n) for n in n_p),
        n_u=int(n_u),
        seed=seed,
    )


@dataclass(frozen=True)
class RateCheckResult:
    sample_sizes: tuple[int, ...]
    rms_errors: tuple[float, ...]
    loglog_slope: float
    slope_ci: tuple[float, float]
    trials_per_size: int
    lam: float
    seed: int

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sample_sizes)
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("sample_sizes must be strictly increasing")
        if any(r < 0 for r in self.rms_errors):
            raise ValueError("rms errors must be nonnegative")
        object.__setattr__(self, "sample_sizes", sizes)
        object.__setattr__(self, "rms_errors", tuple(float(r) for r in self.rms_errors))

    @property
    def passed(self) -> bool:
        return SLOPE_BAND[0] <= self.loglog_slope <= SLOPE_BAND[1]

    def to_json_dict(self) -> dict:
        return {
            "check": "consistency_rate",
            "sample_sizes": list(self.sample_sizes),
            "rms_errors": list(self.rms_errors),
            "loglog_slope": self.loglog_slope,
            "slope_ci": list(self.slope_ci),
            "slope_band": list(SLOPE_BAND),
            "trials_per_size": self.trials_per_size,
            "lambda": self.lam,
            "seed": self.seed,
            "passed": self.passed,
        }


def check_consistency_rate(
    spec: MixtureSpec,
    fixed_model: SoftmaxModel,
    sizes: Sequence[int] = (100, 400, 1600, 6400),
    trials_per_size: int = 200,
    lam: float = 0.2,
    seed: int = 0,
    oracle_samples: int = 1_000_000,
) -> RateCheckResult:
    """rms |constrained estimate - true risk| vs n, with a log-log slope fit.

    Positive-class counts scale proportionally with the pool size
    (n_P_i = max(1, round(pi_i * n)), n_U = n), matching the joint
    growth regime of the n^(-1/2) deviation bound.
    """
    sizes = tuple(int(n) for n in sizes)
    if len(sizes) < 4:
        raise ValueError("need at least 4 sample sizes")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sample sizes must be strictly increasing")
    if trials_per_size < 2:
        raise ValueError("need at least 2 trials per size")
    cfg = CmpuConfig(lam)
    truth = oracle_risk(spec, fixed_model, n_per_term=oracle_samples, seed=seed + 1)
    rng = np.random.default_rng(seed)
    rms = []
    from .risk import risk_components

    for n in sizes:
        n_p = tuple(
            max(1, round(pi * n)) for pi in spec.priors.pi
        )
        errors = np.empty(trials_per_size, dtype=np.float64)
        for t in range(trials_per_size):
            ds, _ = sample_pu_dataset(spec, n_p, n, seed=rng)
            estimate = cmpu_risk(risk_components(fixed_model, ds), spec.priors, cfg).total
            errors[t] = estimate - truth
        rms.append(float(np.sqrt(np.mean(errors ** 2))))

    log_n = np.log(np.asarray(sizes, dtype=np.float64))
    log_r = np.log(np.asarray(rms, dtype=np.float64))
    slope, intercept = np.polyfit(log_n, log_r, 1)
    residuals = log_r - (slope * log_n + intercept)
    dof = max(1, len(sizes) - 2)
    s2 = float(residuals @ residuals) / dof
    se = math.sqrt(s2 / float(((log_n - log_n.mean()) ** 2).sum()))
    ci = (float(slope - 1.96 * se), float(slope + 1.96 * se))
    return RateCheckResult(
        sample_sizes=sizes,
        rms_errors=tuple(rms),
        loglog_slope=float(slope),
        slope_ci=ci,
        trials_per_size=trials_per_size,
        lam=lam,
        seed=seed,
    )


@dataclass(frozen=True)
class OverfitProbeResult:
    traces: dict[EstimatorKind, tuple[TraceRow, ...]]
    min_naive_gap: float
    naive_went_negative: bool
    cmpu_bound_ok: bool
    lam: float

    @property
    def passed(self) -> bool:
        return self.naive_went_negative and self.cmpu_bound_ok

    def to_json_dict(self) -> dict:
        return {
            "check": "overfit_probe",
            "min_naive_gap": self.min_naive_gap,
            "naive_went_negative": self.naive_went_negative,
            "cmpu_bound_ok": self.cmpu_bound_ok,
            "lambda": self.lam,
            "batches_per_kind": {k.value: len(v) for k, v in self.traces.items()},
            "passed": self.passed,
        }


def _gap(row: TraceRow) -> float:
    return row.ru_minus - row.sum_pi_rp_minus


def cmpu_bound_holds(rows: Sequence[TraceRow], lam: float) -> bool:
    """Structural lower bound of the constrained total on every batch.

    On the LOWER branch total = wp + lam*wp bitwise; on the UPPER branch
    the reported tau must sit at or above lambda and the same float
    expression bounds the total from below.
    """
    for row in rows:
        wp = row.sum_pi_rp_plus
        if row.branch == Branch.LOWER.value:
            if row.tau is None or not row.tau < lam:
                return False
        elif row.tau is not None and row.tau < lam:
            return False
        if not row.total >= wp + lam * wp:
            return False
    return True


def overfit_probe(
    dataset: PuDataset,
    priors: ClassPriors,
    sgd: SgdConfig,
    lam: float = 0.2,
    kinds: Sequence[EstimatorKind] = (
        EstimatorKind.MPU_NAIVE,
        EstimatorKind.MPU_NN,
        EstimatorKind.CMPU,
    ),
    hidden: int = 32,
    model_seed: Optional[int] = None,
) -> OverfitProbeResult:
    """Train a flexible model under several estimators from one shared init.

    The probe exposes the overfitting signature the clamps exist to
    stop: the naive estimator's unlabeled-minus-positive term dives
    below zero, while the constrained run keeps its branch bookkeeping
    and lower bound intact on every batch.
    """
    cfg = CmpuConfig(lam)
    model0 = init_mlp(dataset.dim, dataset.num_classes, hidden,
                      sgd.seed if model_seed is None else model_seed)
    traces: dict[EstimatorKind, tuple[TraceRow, ...]] = {}
    for kind in kinds:
        _, rows = train(model0, dataset, priors, kind, cfg, sgd)
        traces[kind] = tuple(rows)
    naive_rows = traces.get(EstimatorKind.MPU_NAIVE, ())
    min_gap = min((_gap(r) for r in naive_rows), default=math.inf)
    cmpu_rows = traces.get(EstimatorKind.CMPU, ())
    return OverfitProbeResult(
        traces=traces,
        min_naive_gap=float(min_gap),
        naive_went_negative=min_gap < 0.0,
        cmpu_bound_ok=cmpu_bound_holds(cmpu_rows, lam) if cmpu_rows else False,
        lam=lam,
    )
