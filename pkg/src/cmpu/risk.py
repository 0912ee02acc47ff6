"""Empirical risk estimators for multi-class positive-unlabeled training.

Four estimators over the same empirical components:

* ``MPN``        fully supervised risk; the pool field of the dataset is
                 treated as a labeled negative sample.
* ``MPU_NAIVE``  plug-in PU risk; its unlabeled-minus-positive term can
                 go negative, which is the overfitting signature.
* ``MPU_NN``     non-negative variant that clamps that term at zero.
* ``CMPU``       constrained variant that clamps it at lambda times the
                 weighted positive risk, so the unlabeled-data risk
                 cannot collapse faster than the positive risk shrinks.

With wp = sum_i pi_i * Rp_plus_i, wm = sum_i pi_i * Rp_minus_i and
u = Ru_minus - wm:

    naive total = wp + u
    nn total    = wp + max(0, u)
    cmpu total  = wp + max(lambda * wp, u)

For CMPU the branch is decided through tau = u / wp (when wp > 0):
LOWER iff tau < lambda, ties go UPPER.  Training descends the
subgradient of the winning branch, evaluated per minibatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, TextIO

import numpy as np

from .core import ClassPriors, PuDataset
from .model import (
    GradientBuffer,
    NumericalDivergenceError,
    SgdConfig,
    SoftmaxModel,
    accumulate_mean_loss_grad,
    forward_batch,
    mae_loss_batch,
    sgd_step,
)

__all__ = [
    "EstimatorKind",
    "Branch",
    "RiskComponents",
    "RiskReport",
    "CmpuConfig",
    "TraceRow",
    "TRACE_COLUMNS",
    "risk_components",
    "weighted_positive_risk",
    "weighted_negative_on_positives",
    "unlabeled_gap",
    "mpn_risk",
    "mpu_naive_risk",
    "mpu_nn_risk",
    "cmpu_risk",
    "risk_report",
    "risk_gradient",
    "risk_gradient_with_report",
    "train",
    "format_trace_row",
    "write_trace_csv",
]


class EstimatorKind(Enum):
    MPN = "mpn"
    MPU_NAIVE = "mpu"
    MPU_NN = "mpu-nn"
    CMPU = "cmpu"

    @classmethod
    def from_string(cls, name: str) -> "EstimatorKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown estimator {name!r}; choose from "
                         f"{[k.value for k in cls]}")


class Branch(Enum):
    UPPER = "UPPER"
    LOWER = "LOWER"
    NA = "N/A"


@dataclass(frozen=True)
class RiskComponents:
    """Empirical risk components on one batch.

    ``rp_plus[i]``  mean loss of class-(i+1) positives against their own label,
    ``rp_minus[i]`` mean loss of the same samples against the negative label,
    ``ru_minus``    mean loss of the unlabeled pool against the negative label.

    Every component is an average of losses bounded by 2/(C+1).
    """

    rp_plus: tuple[float, ...]
    rp_minus: tuple[float, ...]
    ru_minus: float

    def __post_init__(self):
        rp_plus = tuple(float(v) for v in self.rp_plus)
        rp_minus = tuple(float(v) for v in self.rp_minus)
        if len(rp_plus) != len(rp_minus) or len(rp_plus) < 1:
            raise ValueError("rp_plus and rp_minus must have equal nonzero length")
        bound = 2.0 / (len(rp_plus) + 1) + 1e-12
        for name, values in (("rp_plus", rp_plus), ("rp_minus", rp_minus),
                             ("ru_minus", (float(self.ru_minus),))):
            for v in values:
                if not math.isfinite(v):
                    raise NumericalDivergenceError(
                        f"numerical divergence: non-finite {name} component {v}"
                    )
                if not 0.0 <= v <= bound:
                    raise ValueError(f"{name} component {v} outside [0, 2/(C+1)]")
        object.__setattr__(self, "rp_plus", rp_plus)
        object.__setattr__(self, "rp_minus", rp_minus)
        object.__setattr__(self, "ru_minus", float(self.ru_minus))

    @property
    def num_classes(self) -> int:
        return len(self.rp_plus)


@dataclass(frozen=True)
class CmpuConfig:
    """Constraint factor lambda > 0 for the CMPU estimator."""

    lam: float = 0.2

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be > 0")


@dataclass(frozen=True)
class RiskReport:
    """Total risk of one estimator on one batch, plus branch metadata."""

    kind: EstimatorKind
    components: RiskComponents
    branch: Branch
    tau: Optional[float]
    total: float


def risk_components(model: SoftmaxModel, batch: PuDataset) -> RiskComponents:
    """Mean MAE losses of a model on each positive set and the pool."""
    if model.num_positive_classes != batch.num_classes:
        raise ValueError(
            f"model has {model.num_positive_classes} positive classes, "
            f"dataset has {batch.num_classes}"
        )
    rp_plus = []
    rp_minus = []
    for i, block in enumerate(batch.positives, start=1):
        probs = forward_batch(model, block)
        rp_plus.append(float(mae_loss_batch(probs, i).mean()))
        rp_minus.append(float(mae_loss_batch(probs, 0).mean()))
    pool_probs = forward_batch(model, batch.unlabeled)
    ru_minus = float(mae_loss_batch(pool_probs, 0).mean())
    return RiskComponents(tuple(rp_plus), tuple(rp_minus), ru_minus)


def weighted_positive_risk(components: RiskComponents, priors: ClassPriors) -> float:
    """sum_i pi_i * rp_plus_i."""
    _check_class_count(components, priors)
    return float(np.dot(priors.as_array(), components.rp_plus))


def weighted_negative_on_positives(components: RiskComponents, priors: ClassPriors) -> float:
    """sum_i pi_i * rp_minus_i."""
    _check_class_count(components, priors)
    return float(np.dot(priors.as_array(), components.rp_minus))


def unlabeled_gap(components: RiskComponents, priors: ClassPriors) -> float:
    """ru_minus - sum_i pi_i * rp_minus_i, the term the clamps act on."""
    return components.ru_minus - weighted_negative_on_positives(components, priors)


def _check_class_count(components: RiskComponents, priors: ClassPriors) -> None:
    if components.num_classes != priors.num_classes:
        raise ValueError(
            f"components have {components.num_classes} classes, priors have {priors.num_classes}"
        )


def mpn_risk(components: RiskComponents, priors: ClassPriors,
             supervised_negatives_risk: float) -> float:
    """Supervised risk: weighted positive risks plus the true-negative risk.

    The caller supplies the negative-class risk computed on genuinely
    labeled negatives, which exist only in oracle or synthetic settings.
    """
    return (weighted_positive_risk(components, priors)
            + priors.pi_negative * float(supervised_negatives_risk))


def mpu_naive_risk(components: RiskComponents, priors: ClassPriors) -> RiskReport:
    """Plug-in PU risk; the second term may be negative."""
    total = weighted_positive_risk(components, priors) + unlabeled_gap(components, priors)
    return RiskReport(EstimatorKind.MPU_NAIVE, components, Branch.NA, None, total)


def mpu_nn_risk(components: RiskComponents, priors: ClassPriors) -> RiskReport:
    """Non-negative PU risk: the unlabeled gap is clamped at zero.

    UPPER means the gap itself won the max (ties included); LOWER means
    the zero clamp won.
    """
    wp = weighted_positive_risk(components, priors)
    gap = unlabeled_gap(components, priors)
    if gap >= 0.0:
        return RiskReport(EstimatorKind.MPU_NN, components, Branch.UPPER, None, wp + gap)
    return RiskReport(EstimatorKind.MPU_NN, components, Branch.LOWER, None, wp)


def cmpu_risk(components: RiskComponents, priors: ClassPriors, cfg: CmpuConfig) -> RiskReport:
    """Constrained PU risk: the unlabeled gap is clamped at lambda * wp.

    tau = gap / wp is reported whenever wp > 0; the LOWER branch wins
    exactly when tau < lambda (ties go UPPER).  When wp == 0 tau is
    undefined, the branch is reported UPPER and the total falls back to
    wp + max(0, gap).
    """
    wp = weighted_positive_risk(components, priors)
    gap = unlabeled_gap(components, priors)
    if wp > 0.0:
        tau = gap / wp
        if tau < cfg.lam:
            return RiskReport(EstimatorKind.CMPU, components, Branch.LOWER, tau, wp + cfg.lam * wp)
        return RiskReport(EstimatorKind.CMPU, components, Branch.UPPER, tau, wp + gap)
    return RiskReport(EstimatorKind.CMPU, components, Branch.UPPER, None, wp + max(0.0, gap))


def risk_report(kind: EstimatorKind, components: RiskComponents, priors: ClassPriors,
                cfg: Optional[CmpuConfig] = None) -> RiskReport:
    """Total risk for any estimator kind.

    For ``MPN`` the pool of the batch is interpreted as a labeled
    negative sample, so ``ru_minus`` plays the role of the supervised
    negative risk.  That is exactly the naive-supervised baseline when
    the pool holds distantly-unlabeled tokens, and the true supervised
    risk when the pool holds oracle negatives.
    """
    if kind is EstimatorKind.MPN:
        total = mpn_risk(components, priors, components.ru_minus)
        return RiskReport(EstimatorKind.MPN, components, Branch.NA, None, total)
    if kind is EstimatorKind.MPU_NAIVE:
        return mpu_naive_risk(components, priors)
    if kind is EstimatorKind.MPU_NN:
        return mpu_nn_risk(components, priors)
    if kind is EstimatorKind.CMPU:
        return cmpu_risk(components, priors, cfg if cfg is not None else CmpuConfig())
    raise ValueError(f"unknown estimator kind {kind!r}")


def _gradient_terms(kind: EstimatorKind, report: RiskReport, priors: ClassPriors,
                    cfg: Optional[CmpuConfig], nnpu_flip: bool):
    """(set index, label, weight) triples for the winning-branch subgradient.

    Set index -1 denotes the unlabeled pool, i >= 0 the positives of
    class i+1.  The max is differentiated as the gradient of whichever
    argument won on this batch.
    """
    pi = priors.pi
    positive_terms = [(i, i + 1, pi[i]) for i in range(len(pi))]
    naive_terms = positive_terms + [(-1, 0, 1.0)] + [(i, 0, -pi[i]) for i in range(len(pi))]
    if kind is EstimatorKind.MPN:
        return positive_terms + [(-1, 0, priors.pi_negative)]
    if kind is EstimatorKind.MPU_NAIVE:
        return naive_terms
    if kind is EstimatorKind.MPU_NN:
        if report.branch is Branch.UPPER:
            return naive_terms
        if nnpu_flip:
            # Flipped update: ascend the clamped gap instead of ignoring it.
            return [(-1, 0, -1.0)] + [(i, 0, pi[i]) for i in range(len(pi))]
        return positive_terms
    if kind is EstimatorKind.CMPU:
        lam = (cfg if cfg is not None else CmpuConfig()).lam
        if report.branch is Branch.UPPER:
            return naive_terms
        if nnpu_flip:
            return ([(-1, 0, -1.0)] + [(i, 0, pi[i]) for i in range(len(pi))]
                    + [(i, i + 1, lam * pi[i]) for i in range(len(pi))])
        return [(i, i + 1, (1.0 + lam) * pi[i]) for i in range(len(pi))]
    raise ValueError(f"unknown estimator kind {kind!r}")


def risk_gradient_with_report(
    model: SoftmaxModel,
    batch: PuDataset,
    priors: ClassPriors,
    kind: EstimatorKind,
    cfg: Optional[CmpuConfig] = None,
    nnpu_flip: bool = False,
) -> tuple[GradientBuffer, RiskReport]:
    """Subgradient of the chosen estimator plus the batch risk report."""
    components = risk_components(model, batch)
    report = risk_report(kind, components, priors, cfg)
    buf = GradientBuffer.zeros_like(model)
    for set_index, label, weight in _gradient_terms(kind, report, priors, cfg, nnpu_flip):
        block = batch.unlabeled if set_index < 0 else batch.positives[set_index]
        accumulate_mean_loss_grad(model, block, label, weight, buf)
    return buf, report


def risk_gradient(
    model: SoftmaxModel,
    batch: PuDataset,
    priors: ClassPriors,
    kind: EstimatorKind,
    cfg: Optional[CmpuConfig] = None,
) -> GradientBuffer:
    return risk_gradient_with_report(model, batch, priors, kind, cfg)[0]


@dataclass(frozen=True)
class TraceRow:
    """One minibatch record of a training run."""

    epoch: int
    batch: int
    kind: str
    total: float
    ru_minus: float
    sum_pi_rp_plus: float
    sum_pi_rp_minus: float
    branch: str
    tau: Optional[float]


TRACE_COLUMNS = ("epoch", "batch", "kind", "total", "ru_minus",
                 "sum_pi_rp_plus", "sum_pi_rp_minus", "branch", "tau")


def format_trace_row(row: TraceRow) -> str:
    tau = "" if row.tau is None else repr(row.tau)
    return (f"{row.epoch},{row.batch},{row.kind},{row.total!r},{row.ru_minus!r},"
            f"{row.sum_pi_rp_plus!r},{row.sum_pi_rp_minus!r},{row.branch},{tau}")


def write_trace_csv(rows, path_or_file) -> None:
    if hasattr(path_or_file, "write"):
        _write_trace(rows, path_or_file)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="\n") as fh:
            _write_trace(rows, fh)


def _write_trace(rows, fh: TextIO) -> None:
    fh.write(",".join(TRACE_COLUMNS) + "\n")
    for row in rows:
        fh.write(format_trace_row(row) + "\n")


def _stratified_batches(dataset: PuDataset, batch_size: int, rng: np.random.Generator):
    """Per-epoch minibatch index lists.

    Every batch receives at least one sample from each positive class
    and from the pool; sources smaller than the number of batches are
    cycled.  With batch_size >= dataset size there is exactly one batch
    per epoch.
    """
    counts = list(dataset.positive_counts) + [dataset.n_unlabeled]
    total = sum(counts)
    num_batches = max(1, math.ceil(total / batch_size))
    perms = [rng.permutation(n) for n in counts]
    batches = []
    for b in range(num_batches):
        chunks = []
        for perm, n in zip(perms, counts):
            lo = (b * n) // num_batches
            hi = ((b + 1) * n) // num_batches
            if hi <= lo:
                chunks.append(perm[[b % n]])
            else:
                chunks.append(perm[lo:hi])
        batches.append(chunks)
    return batches


def _row_from_report(epoch: int, batch: int, report: RiskReport, priors: ClassPriors) -> TraceRow:
    return TraceRow(
        epoch=epoch,
        batch=batch,
        kind=report.kind.value,
        total=report.total,
        ru_minus=report.components.ru_minus,
        sum_pi_rp_plus=weighted_positive_risk(report.components, priors),
        sum_pi_rp_minus=weighted_negative_on_positives(report.components, priors),
        branch=report.branch.value,
        tau=report.tau,
    )


def train(
    model: SoftmaxModel,
    dataset: PuDataset,
    priors: ClassPriors,
    kind: EstimatorKind,
    cfg: Optional[CmpuConfig],
    sgd: SgdConfig,
    trace_sink: Optional[TextIO] = None,
    nnpu_flip: bool = False,
) -> tuple[SoftmaxModel, list[TraceRow]]:
    """Minibatch SGD on the chosen risk estimator.

    Minibatches are stratified so every component is defined in every
    batch; the branch of the clamped estimators is re-selected per
    minibatch.  Deterministic given (model, dataset, sgd.seed).
    Raises ``NumericalDivergenceError`` if the risk stops being finite.
    """
    if model.num_positive_classes != dataset.num_classes:
        raise ValueError("model and dataset disagree on the number of classes")
    if priors.num_classes != dataset.num_classes:
        raise ValueError("priors and dataset disagree on the number of classes")
    rng = np.random.default_rng(sgd.seed)
    rows: list[TraceRow] = []
    if trace_sink is not None:
        trace_sink.write(",".join(TRACE_COLUMNS) + "\n")
    for epoch in range(sgd.epochs):
        for b, chunks in enumerate(_stratified_batches(dataset, sgd.batch_size, rng)):
            sub = PuDataset(
                positives=tuple(block[idx] for block, idx in zip(dataset.positives, chunks[:-1])),
                unlabeled=dataset.unlabeled[chunks[-1]],
            )
            grads, report = risk_gradient_with_report(model, sub, priors, kind, cfg, nnpu_flip)
            if not math.isfinite(report.total):
                raise NumericalDivergenceError(
                    f"numerical divergence: risk {report.total} at epoch {epoch} batch {b}"
                )
            model = sgd_step(model, grads, sgd)
            row = _row_from_report(epoch, b, report, priors)
            rows.append(row)
            if trace_sink is not None:
                trace_sink.write(format_trace_row(row) + "\n")
    return model, rows
