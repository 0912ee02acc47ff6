"""Core domain types for multi-class positive-unlabeled (PU) learning.

The label space is {0, 1, ..., C}: label 0 is the negative class and
labels 1..C are the positive classes.  Training data consists of C
per-class positive sample sets plus one unlabeled pool; the positive
class priors are an explicit input.  All containers are immutable after
construction and safe to share across concurrent readers.  Arithmetic
is double precision throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "LabelSpace",
    "ClassPriors",
    "PuDataset",
    "PriorEstimate",
    "make_priors",
    "estimate_priors_from_labels",
    "one_hot",
    "is_one_hot",
]

# Clamp ceiling for estimated prior sums; keeps the implied negative
# prior strictly positive even for very aggressive gamma corrections.
PRIOR_SUM_CEILING = 0.99


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabelSpace:
    """The label set {0, 1, ..., C}; 0 is the negative class."""

    num_positive_classes: int

    def __post_init__(self):
        if self.num_positive_classes < 1:
            raise ValueError("need at least one positive class (C >= 1)")

    @property
    def num_labels(self) -> int:
        return self.num_positive_classes + 1

    def contains(self, label: int) -> bool:
        return 0 <= label <= self.num_positive_classes


@dataclass(frozen=True)
class ClassPriors:
    """Positive-class priors (pi_1, ..., pi_C); the negative prior is implied.

    Each pi_i must be strictly positive and the sum must stay strictly
    below 1 so that pi_0 = 1 - sum(pi) is itself a valid prior.
    """

    pi: tuple[float, ...]

    def __post_init__(self):
        pi = tuple(float(p) for p in self.pi)
        if len(pi) < 1:
            raise ValueError("need at least one positive class prior")
        if not all(np.isfinite(pi)):
            raise ValueError("prior must be finite")
        if any(p <= 0.0 for p in pi):
            raise ValueError(f"prior must be positive, got {pi}")
        if sum(pi) >= 1.0:
            raise ValueError(f"priors sum >= 1 (got {sum(pi)}); the negative class needs positive mass")
        object.__setattr__(self, "pi", pi)

    @property
    def num_classes(self) -> int:
        return len(self.pi)

    @property
    def pi_negative(self) -> float:
        """Implied negative-class prior pi_0 = 1 - sum(pi)."""
        return 1.0 - sum(self.pi)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.pi, dtype=np.float64)


def make_priors(pi: Sequence[float]) -> ClassPriors:
    """Validate and build class priors from a sequence of positive priors."""
    return ClassPriors(tuple(float(p) for p in pi))


@dataclass(frozen=True, eq=False)
class PuDataset:
    """C positive sample sets plus one unlabeled pool of feature vectors.

    ``positives[i]`` holds the samples of positive class i+1 as an
    (n_i, d) array; ``unlabeled`` is (n_u, d).  Every set must be
    nonempty and all vectors must share the same dimension d.
    """

    positives: tuple[np.ndarray, ...]
    unlabeled: np.ndarray

    def __post_init__(self):
        positives = tuple(
            _as_matrix(block, f"positives[{i}]") for i, block in enumerate(self.positives)
        )
        unlabeled = _as_matrix(self.unlabeled, "unlabeled")
        if len(positives) < 1:
            raise ValueError("need at least one positive class")
        dims = {block.shape[1] for block in positives} | {unlabeled.shape[1]}
        if len(dims) != 1:
            raise ValueError(f"feature dimensions disagree across sets: {sorted(dims)}")
        for i, block in enumerate(positives):
            if block.shape[0] < 1:
                raise ValueError(f"positive class {i + 1} is empty (n_P = 0)")
        if unlabeled.shape[0] < 1:
            raise ValueError("unlabeled pool is empty (n_U = 0)")
        object.__setattr__(self, "positives", positives)
        object.__setattr__(self, "unlabeled", unlabeled)

    @property
    def num_classes(self) -> int:
        return len(self.positives)

    @property
    def dim(self) -> int:
        return self.unlabeled.shape[1]

    @property
    def positive_counts(self) -> tuple[int, ...]:
        return tuple(block.shape[0] for block in self.positives)

    @property
    def n_unlabeled(self) -> int:
        return self.unlabeled.shape[0]


def _as_matrix(values, name: str) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{name}: ragged input, all vectors must share one dimension") from exc
    if arr.dtype == object or arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D (n, d) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite feature values")
    return _frozen_array(arr)


def one_hot(label: int, num_labels: int) -> np.ndarray:
    """Dense one-hot vector of length ``num_labels`` with a 1 at ``label``."""
    if not 0 <= label < num_labels:
        raise ValueError(f"label {label} outside [0, {num_labels})")
    vec = np.zeros(num_labels, dtype=np.float64)
    vec[label] = 1.0
    vec.setflags(write=False)
    return vec


def is_one_hot(vec: np.ndarray) -> bool:
    """True iff ``vec`` is 1-D with exactly one component equal to 1, rest 0."""
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        return False
    ones = arr == 1.0
    return bool(ones.sum() == 1 and np.all((arr == 0.0) | ones))


@dataclass(frozen=True)
class PriorEstimate:
    """Estimated priors plus bookkeeping about the estimation.

    ``clamped`` is True when the raw estimates summed above
    ``PRIOR_SUM_CEILING`` and were proportionally rescaled.
    """

    priors: ClassPriors
    clamped: bool
    token_counts: tuple[int, ...]
    total_tokens: int


def estimate_priors_from_labels(corpus, gamma: float = 1.0) -> PriorEstimate:
    """Estimate class priors from a corpus' distant labels.

    pi_hat_i = gamma * (distantly labeled tokens of class i) / (total tokens).
    ``gamma >= 1`` is an under-count correction multiplier: dictionary
    labels miss entities, so raw token fractions underestimate the true
    priors.  Estimates are proportionally clamped so their sum stays at
    or below ``PRIOR_SUM_CEILING``.

    ``corpus`` must expose ``num_classes``, ``num_tokens`` and
    ``distant_token_classes()`` (per-sentence integer class arrays), as
    ``synthgen.TaggedCorpus`` does.
    """
    if gamma < 1.0:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    num_classes = corpus.num_classes
    total = corpus.num_tokens
    if total == 0:
        raise ValueError("empty corpus")
    counts = np.zeros(num_classes, dtype=np.int64)
    for classes in corpus.distant_token_classes():
        for c in range(1, num_classes + 1):
            counts[c - 1] += int(np.count_nonzero(classes == c))
    if counts.sum() == 0:
        raise ValueError("no positive tokens in the distant labels")
    for c, n in enumerate(counts, start=1):
        if n == 0:
            raise ValueError(f"no distantly labeled tokens for class {c}")
    raw = gamma * counts.astype(np.float64) / float(total)
    clamped = False
    if raw.sum() > PRIOR_SUM_CEILING:
        raw = raw * (PRIOR_SUM_CEILING / raw.sum())
        clamped = True
    return PriorEstimate(
        priors=make_priors(raw),
        clamped=clamped,
        token_counts=tuple(int(n) for n in counts),
        total_tokens=total,
    )
