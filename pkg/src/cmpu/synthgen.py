"""Synthetic data generators with known ground truth.

Two families:

* Gaussian-mixture PU datasets: per-class positive samples drawn from
  class-conditional Gaussians and an unlabeled pool drawn from the full
  marginal (label first, then the conditional), so the PU sampling
  assumption holds by construction.  A biased mode labels only a
  coverage-controlled fraction of positives, pushing the leftover pool
  toward the negative distribution.

* A template-based tagging corpus: sentences instantiated from seeded
  templates with entity slots, gold BIO labels from the slot layout,
  and a dictionary labeler that reproduces the incomplete-annotation
  regime (high precision, recall limited by dictionary coverage).

Everything is deterministic given its seed.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .core import ClassPriors, PuDataset, make_priors
from .nereval import EvalResult, decode_corpus_bio, score

__all__ = [
    "MixtureSpec",
    "CorpusSpec",
    "TaggedCorpus",
    "sample_pu_dataset",
    "sample_pu_dataset_biased",
    "sample_marginal",
    "generate_corpus",
    "build_dictionary",
    "distant_label",
    "corpus_to_pu",
    "annotation_quality",
    "default_mixture_spec",
    "default_corpus_spec",
    "write_conll",
    "read_conll",
]

SeedLike = Union[int, np.random.Generator, None]


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    """Gaussian mixture over C+1 classes; row 0 of ``means`` is the negative class."""

    dim: int
    means: np.ndarray  # (C+1, dim)
    scale: float
    priors: ClassPriors
    seed: int

    def __post_init__(self):
        means = np.ascontiguousarray(self.means, dtype=np.float64)
        if means.ndim != 2 or means.shape != (self.priors.num_classes + 1, self.dim):
            raise ValueError(
                f"means must be ({self.priors.num_classes + 1}, {self.dim}), got {means.shape}"
            )
        for i in range(means.shape[0]):
            for j in range(i + 1, means.shape[0]):
                if np.array_equal(means[i], means[j]):
                    raise ValueError(f"means {i} and {j} coincide")
        if self.scale < 0:
            raise ValueError("scale must be >= 0")
        means.setflags(write=False)
        object.__setattr__(self, "means", means)

    @property
    def num_classes(self) -> int:
        return self.priors.num_classes

    def label_probabilities(self) -> np.ndarray:
        return np.concatenate(([self.priors.pi_negative], self.priors.as_array()))


def default_mixture_spec(seed: int = 20240001) -> MixtureSpec:
    """Well-separated C=2, d=4 mixture used by the statistical checks."""
    means = np.zeros((3, 4))
    means[1, 0] = 3.5
    means[2, 1] = 3.5
    return MixtureSpec(dim=4, means=means, scale=1.0, priors=make_priors((0.3, 0.2)), seed=seed)


def sample_pu_dataset(
    spec: MixtureSpec,
    n_p: Sequence[int],
    n_u: int,
    seed: SeedLike = None,
) -> tuple[PuDataset, np.ndarray]:
    """Draw per-class positives and an unlabeled pool from the marginal.

    Returns the dataset plus the pool's true labels (for evaluation
    only).  ``seed`` overrides the spec seed; a Generator may be passed
    to chain several draws.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    n_p = tuple(int(n) for n in n_p)
    if len(n_p) != spec.num_classes:
        raise ValueError(f"n_p must list {spec.num_classes} counts")
    if any(n < 1 for n in n_p) or n_u < 1:
        raise ValueError("all sample counts must be >= 1")
    positives = tuple(
        spec.means[i] + spec.scale * rng.standard_normal((n_p[i - 1], spec.dim))
        for i in range(1, spec.num_classes + 1)
    )
    labels = rng.choice(spec.num_classes + 1, size=n_u, p=spec.label_probabilities())
    pool = spec.means[labels] + spec.scale * rng.standard_normal((n_u, spec.dim))
    return PuDataset(positives=positives, unlabeled=pool), labels


def sample_marginal(spec: MixtureSpec, n: int, seed: SeedLike = None) -> tuple[np.ndarray, np.ndarray]:
    """n draws (x, y) from the full joint; used for oracle evaluation."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    if n < 1:
        raise ValueError("n must be >= 1")
    labels = rng.choice(spec.num_classes + 1, size=n, p=spec.label_probabilities())
    x = spec.means[labels] + spec.scale * rng.standard_normal((n, spec.dim))
    return x, labels


def sample_pu_dataset_biased(
    spec: MixtureSpec,
    n_total: int,
    coverage: float,
    seed: SeedLike = None,
) -> tuple[PuDataset, np.ndarray]:
    """Coverage-biased labeling: each positive is labeled with probability
    ``coverage``; unlabeled positives stay in the pool.

    At coverage 1 the pool contains only true negatives (maximal
    violation of the marginal-pool assumption); as coverage shrinks the
    pool approaches the full marginal.  Returns the pool's true labels.
    """
    if not 0 < coverage <= 1:
        raise ValueError("coverage must be in (0, 1]")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    x, labels = sample_marginal(spec, n_total, seed=rng)
    covered = rng.random(n_total) < coverage
    labeled = covered & (labels > 0)
    positives = []
    for i in range(1, spec.num_classes + 1):
        block = x[labeled & (labels == i)]
        if block.shape[0] < 1:
            raise ValueError(
                f"class {i} received no labeled positives; increase n_total or coverage"
            )
        positives.append(block)
    pool_mask = ~labeled
    if not pool_mask.any():
        raise ValueError("empty unlabeled pool; decrease coverage")
    return (
        PuDataset(positives=tuple(positives), unlabeled=x[pool_mask]),
        labels[pool_mask],
    )


# --------------------------------------------------------------------------
# Tagging corpus
# --------------------------------------------------------------------------

TemplateItem = Union[str, int]  # filler token, or a slot marked by its class id


@dataclass(frozen=True)
class CorpusSpec:
    """Generator settings for the synthetic tagging corpus.

    ``entity_lexicon[c]`` lists the surface forms of class c+1, each a
    tuple of tokens; dictionary subsets are order-prefixes of these
    lists.  Templates are token sequences where an integer item marks
    an entity slot of that class.
    """

    class_names: tuple[str, ...]
    entity_lexicon: tuple[tuple[tuple[str, ...], ...], ...]
    templates: tuple[tuple[TemplateItem, ...], ...]
    num_sentences: int
    dictionary_coverage: float
    feature_dim: int
    seed: int

    def __post_init__(self):
        if len(self.class_names) < 1:
            raise ValueError("need at least one entity class")
        if len(self.entity_lexicon) != len(self.class_names):
            raise ValueError("entity_lexicon must list one form set per class")
        for c, forms in enumerate(self.entity_lexicon, start=1):
            if len(forms) < 1:
                raise ValueError(f"class {c} has an empty lexicon")
            for form in forms:
                if len(form) < 1 or any(not tok for tok in form):
                    raise ValueError(f"class {c} has an empty surface form")
        if len(self.templates) < 1:
            raise ValueError("need at least one template")
        for t, template in enumerate(self.templates):
            if not any(isinstance(item, int) for item in template):
                continue
            for item in template:
                if isinstance(item, int) and not 1 <= item <= len(self.class_names):
                    raise ValueError(f"template {t} references unknown class {item}")
        if self.num_sentences < 1:
            raise ValueError("num_sentences must be >= 1")
        if not 0 < self.dictionary_coverage <= 1:
            raise ValueError("dictionary_coverage must be in (0, 1]")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def _validate_bio(rows, class_names, layer: str) -> None:
    names = set(class_names)
    for s, tags in enumerate(rows):
        previous = "O"
        for i, tag in enumerate(tags):
            if tag == "O":
                previous = tag
                continue
            if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI" or tag[2:] not in names:
                raise ValueError(f"{layer}: invalid BIO tag {tag!r} at sentence {s} token {i}")
            if tag[0] == "I":
                if previous == "O" or previous[2:] != tag[2:]:
                    raise ValueError(
                        f"{layer}: dangling {tag!r} at sentence {s} token {i}"
                    )
            previous = tag


@dataclass(frozen=True, eq=False)
class TaggedCorpus:
    """Sentences with gold BIO labels, optional distant labels and features."""

    class_names: tuple[str, ...]
    sentences: tuple[tuple[str, ...], ...]
    gold_labels: tuple[tuple[str, ...], ...]
    distant_labels: Optional[tuple[tuple[str, ...], ...]] = None
    features: Optional[tuple[np.ndarray, ...]] = None
    template_ids: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        n = len(self.sentences)
        if len(self.gold_labels) != n:
            raise ValueError("gold_labels shape disagrees with sentences")
        for s, (toks, tags) in enumerate(zip(self.sentences, self.gold_labels)):
            if len(toks) != len(tags):
                raise ValueError(f"sentence {s}: token/label count mismatch")
        _validate_bio(self.gold_labels, self.class_names, "gold")
        if self.distant_labels is not None:
            if len(self.distant_labels) != n:
                raise ValueError("distant_labels shape disagrees with sentences")
            for s, (toks, tags) in enumerate(zip(self.sentences, self.distant_labels)):
                if len(toks) != len(tags):
                    raise ValueError(f"sentence {s}: token/distant-label count mismatch")
            _validate_bio(self.distant_labels, self.class_names, "distant")
        if self.features is not None:
            if len(self.features) != n:
                raise ValueError("features shape disagrees with sentences")
            dims = {f.shape[1] for f in self.features}
            if len(dims) > 1:
                raise ValueError(f"feature dimensions disagree: {sorted(dims)}")
            for s, (toks, feats) in enumerate(zip(self.sentences, self.features)):
                if feats.shape[0] != len(toks):
                    raise ValueError(f"sentence {s}: feature row count mismatch")
        if self.template_ids is not None and len(self.template_ids) != n:
            raise ValueError("template_ids shape disagrees with sentences")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    @property
    def feature_dim(self) -> Optional[int]:
        if self.features is None:
            return None
        return int(self.features[0].shape[1])

    def _classes_of(self, rows) -> list[np.ndarray]:
        index = {name: i + 1 for i, name in enumerate(self.class_names)}
        out = []
        for tags in rows:
            out.append(
                np.asarray([0 if t == "O" else index[t[2:]] for t in tags], dtype=np.int64)
            )
        return out

    def gold_token_classes(self) -> list[np.ndarray]:
        return self._classes_of(self.gold_labels)

    def distant_token_classes(self) -> list[np.ndarray]:
        if self.distant_labels is None:
            raise ValueError("corpus has no distant labels")
        return self._classes_of(self.distant_labels)

    def subset(self, indices: Sequence[int]) -> "TaggedCorpus":
        idx = list(indices)
        pick = lambda rows: tuple(rows[i] for i in idx) if rows is not None else None
        return TaggedCorpus(
            class_names=self.class_names,
            sentences=pick(self.sentences),
            gold_labels=pick(self.gold_labels),
            distant_labels=pick(self.distant_labels),
            features=pick(self.features),
            template_ids=pick(self.template_ids),
        )


# Per-token random vectors, cached across corpora.  Keyed by the feature
# seed so different corpora never share vectors by accident.
_VECTOR_CACHE: dict[tuple, np.ndarray] = {}
_ROLE_CENTER, _ROLE_WINDOW = 1, 2
_WINDOW_WEIGHT = 0.75
# Word-shape component: capitalized tokens share one random direction per
# role, the desk-scale analog of an encoder's orthographic features.
_CAP_MARK = "<cap>"
_CAP_SCALE = 1.5
_BOS, _EOS = "<s>", "</s>"


def _token_vector(token: str, dim: int, seed: int, role: int) -> np.ndarray:
    key = (seed, dim, role, token)
    vec = _VECTOR_CACHE.get(key)
    if vec is None:
        rng = np.random.default_rng([seed, role, zlib.crc32(token.encode("utf-8"))])
        vec = rng.standard_normal(dim) / math.sqrt(dim)
        vec.setflags(write=False)
        _VECTOR_CACHE[key] = vec
    return vec


def _shaped_vector(token: str, dim: int, seed: int, role: int) -> np.ndarray:
    vec = _token_vector(token, dim, seed, role)
    if token[:1].isupper():
        vec = vec + _CAP_SCALE * _token_vector(_CAP_MARK, dim, seed, role)
    return vec


def featurize_sentence(tokens: Sequence[str], dim: int, seed: int) -> np.ndarray:
    """Seeded random projection of per-token identity and word shape.

    Each row projects (center token id + shape, bag of +-1 window token
    ids + shapes) into ``dim`` dimensions via fixed per-token random
    vectors.
    """
    padded = [_BOS, *tokens, _EOS]
    rows = np.empty((len(tokens), dim), dtype=np.float64)
    for j in range(len(tokens)):
        center = _shaped_vector(padded[j + 1], dim, seed, _ROLE_CENTER)
        left = _shaped_vector(padded[j], dim, seed, _ROLE_WINDOW)
        right = _shaped_vector(padded[j + 2], dim, seed, _ROLE_WINDOW)
        rows[j] = center + _WINDOW_WEIGHT * (left + right)
    return rows


def generate_corpus(spec: CorpusSpec) -> TaggedCorpus:
    """Instantiate sentences from templates; gold BIO follows the slot layout."""
    rng = np.random.default_rng(spec.seed)
    sentences = []
    gold = []
    template_ids = []
    for _ in range(spec.num_sentences):
        t = int(rng.integers(len(spec.templates)))
        tokens: list[str] = []
        tags: list[str] = []
        for item in spec.templates[t]:
            if isinstance(item, int):
                forms = spec.entity_lexicon[item - 1]
                form = forms[int(rng.integers(len(forms)))]
                name = spec.class_names[item - 1]
                tokens.extend(form)
                tags.append(f"B-{name}")
                tags.extend(f"I-{name}" for _ in form[1:])
            else:
                tokens.append(item)
                tags.append("O")
        sentences.append(tuple(tokens))
        gold.append(tuple(tags))
        template_ids.append(t)
    features = tuple(
        featurize_sentence(toks, spec.feature_dim, spec.seed) for toks in sentences
    )
    return TaggedCorpus(
        class_names=spec.class_names,
        sentences=tuple(sentences),
        gold_labels=tuple(gold),
        features=features,
        template_ids=tuple(template_ids),
    )


def build_dictionary(
    spec: CorpusSpec, coverage: Optional[float] = None
) -> tuple[tuple[tuple[str, ...], ...], ...]:
    """First ceil(coverage * |lexicon|) entries of each class list."""
    rho = spec.dictionary_coverage if coverage is None else coverage
    if not 0 < rho <= 1:
        raise ValueError("coverage must be in (0, 1]")
    return tuple(
        tuple(forms[: math.ceil(rho * len(forms))]) for forms in spec.entity_lexicon
    )


def _find_matches(tokens: Sequence[str], dictionary) -> list[tuple[int, int, int]]:
    """All dictionary occurrences as (start, length, class)."""
    matches = []
    for c, forms in enumerate(dictionary, start=1):
        for form in forms:
            m = len(form)
            if m == 0 or m > len(tokens):
                continue
            for start in range(len(tokens) - m + 1):
                if tuple(tokens[start:start + m]) == tuple(form):
                    matches.append((start, m, c))
    return matches


def distant_label(corpus: TaggedCorpus, dictionary) -> TaggedCorpus:
    """Exact token-sequence dictionary matching.

    Overlapping candidates are resolved longest first, ties leftmost,
    then by lowest class id; matched spans get B-X/I-X, everything else
    stays O.
    """
    if len(dictionary) != corpus.num_classes:
        raise ValueError("dictionary must list one form set per class")
    distant = []
    for tokens in corpus.sentences:
        tags = ["O"] * len(tokens)
        taken = [False] * len(tokens)
        candidates = sorted(_find_matches(tokens, dictionary),
                            key=lambda m: (-m[1], m[0], m[2]))
        for start, length, c in candidates:
            if any(taken[start:start + length]):
                continue
            name = corpus.class_names[c - 1]
            tags[start] = f"B-{name}"
            for i in range(start + 1, start + length):
                tags[i] = f"I-{name}"
            for i in range(start, start + length):
                taken[i] = True
        distant.append(tuple(tags))
    return replace(corpus, distant_labels=tuple(distant))


def corpus_to_pu(corpus: TaggedCorpus) -> PuDataset:
    """Distantly labeled tokens become positives; O tokens form the pool.

    Errors if some class has no distantly labeled token, naming it.
    """
    if corpus.distant_labels is None:
        raise ValueError("corpus has no distant labels")
    if corpus.features is None:
        raise ValueError("corpus has no features")
    all_feats = np.concatenate(corpus.features, axis=0)
    all_classes = np.concatenate(corpus.distant_token_classes())
    positives = []
    for c in range(1, corpus.num_classes + 1):
        block = all_feats[all_classes == c]
        if block.shape[0] == 0:
            raise ValueError(
                f"no distantly labeled tokens for class {c} "
                f"({corpus.class_names[c - 1]})"
            )
        positives.append(block)
    pool = all_feats[all_classes == 0]
    if pool.shape[0] == 0:
        raise ValueError("no unlabeled tokens: every token is distantly labeled")
    return PuDataset(positives=tuple(positives), unlabeled=pool)


def annotation_quality(corpus: TaggedCorpus) -> EvalResult:
    """Strict entity-level quality of the distant labels against gold."""
    if corpus.distant_labels is None:
        raise ValueError("corpus has no distant labels")
    pred, repairs = decode_corpus_bio(corpus.distant_labels, corpus.class_names)
    gold, _ = decode_corpus_bio(corpus.gold_labels, corpus.class_names)
    pred_classes = np.concatenate(corpus.distant_token_classes())
    gold_classes = np.concatenate(corpus.gold_token_classes())
    return score(
        pred,
        gold,
        corpus.num_tokens,
        pred_classes,
        gold_classes,
        num_classes=corpus.num_classes,
        repairs=repairs,
    )


# --------------------------------------------------------------------------
# Default desk-scale corpus
# --------------------------------------------------------------------------

_SYLLABLES = (
    "ba", "ce", "di", "fo", "gu", "ka", "li", "mo", "ne", "pa", "qui", "ro",
    "su", "ta", "ve", "wi", "xo", "yu", "za", "bren", "dor", "fal", "gim",
    "hul", "jas", "kel", "lom", "mer", "nir", "oth", "pel", "quor", "ril",
    "sar", "tev", "ul", "vor", "wen", "yal", "zur",
)

_FUNCTION_WORDS = (
    "the", "a", "of", "to", "in", "on", "for", "with", "at", "by", "from",
    "and", "or", "was", "were", "had", "has", "this", "that", "its", "after",
    "before", "near", "about", "into",
)

_DEFAULT_CLASS_NAMES = ("PER", "LOC", "ORG", "MISC", "TYPE5", "TYPE6")

# Default-corpus design constants: capitalized non-entity vocabulary size,
# whether those words mix into the general filler vocabulary, and the
# per-template probability of a cue trap (cue word + capitalized
# non-entity, a fake entity context).
_NUM_CAP_DISTRACTORS = 6
_DISTRACTORS_AS_FILLERS = True
_TRAP_PROB = 0.7


def _fresh_word(rng: np.random.Generator, used: set) -> str:
    while True:
        n = int(rng.integers(2, 4))
        word = "".join(_SYLLABLES[int(rng.integers(len(_SYLLABLES)))] for _ in range(n))
        if word not in used:
            used.add(word)
            return word


def default_corpus_spec(
    num_classes: int = 2,
    lexicon_size: int = 60,
    num_templates: int = 40,
    num_sentences: int = 3000,
    coverage: float = 0.2,
    feature_dim: int = 256,
    seed: int = 11,
) -> CorpusSpec:
    """Desk-scale corpus generator settings.

    Entity surface forms are 1-3 fresh pseudo-words (no form is a
    contiguous subsequence of any other, so dictionary precision is
    1.0 by construction).  Each slot is preceded by a class cue word
    and often followed by a class post-cue, which is what lets a
    classifier generalize to surface forms missing from its training
    dictionary.  Cue words also appear away from slots as distractors,
    so over-aggressive positive bias costs precision.
    """
    if not 1 <= num_classes <= len(_DEFAULT_CLASS_NAMES):
        raise ValueError(f"num_classes must be in 1..{len(_DEFAULT_CLASS_NAMES)}")
    rng = np.random.default_rng(seed)
    used: set = set(_FUNCTION_WORDS)

    pre_cues = tuple(
        tuple(_fresh_word(rng, used) for _ in range(6)) for _ in range(num_classes)
    )
    post_cues = tuple(
        tuple(_fresh_word(rng, used) for _ in range(6)) for _ in range(num_classes)
    )
    # Capitalized distractors: proper-noun-shaped words that are not
    # entities, so word shape alone cannot identify entity tokens.
    cap_distractors = tuple(
        _fresh_word(rng, used).capitalize() for _ in range(_NUM_CAP_DISTRACTORS)
    )
    fillers = tuple(_FUNCTION_WORDS) + tuple(_fresh_word(rng, used) for _ in range(30))
    if _DISTRACTORS_AS_FILLERS:
        fillers = fillers + cap_distractors

    lexicon = []
    for _ in range(num_classes):
        forms = []
        for _ in range(lexicon_size):
            length = int(rng.choice((1, 2, 3), p=(0.7, 0.25, 0.05)))
            forms.append(
                tuple(_fresh_word(rng, used).capitalize() for _ in range(length))
            )
        lexicon.append(tuple(forms))

    all_cues = tuple(w for class_cues in (pre_cues + post_cues) for w in class_cues)

    templates = []
    for _ in range(num_templates):
        n_fill = int(rng.integers(6, 11))
        body: list[TemplateItem] = [
            fillers[int(rng.integers(len(fillers)))] for _ in range(n_fill)
        ]
        num_slots = 1 + int(rng.random() < 0.5)
        # Slot insertion points, kept at least two fillers apart.
        positions = sorted(
            int(p) for p in rng.choice(n_fill - 1, size=num_slots, replace=False)
        )
        if num_slots == 2 and positions[1] - positions[0] < 2:
            positions[1] = min(positions[0] + 2, n_fill - 1)
        out: list[TemplateItem] = []
        cursor = 0
        for pos in positions:
            out.extend(body[cursor:pos])
            cursor = pos
            cls = 1 + int(rng.integers(num_classes))
            out.append(pre_cues[cls - 1][int(rng.integers(6))])
            out.append(cls)
            if rng.random() < 0.7:
                out.append(post_cues[cls - 1][int(rng.integers(6))])
        out.extend(body[cursor:])
        # Stray cue words away from slots: distractor context.
        if rng.random() < 0.5:
            for _ in range(1 + int(rng.random() < 0.5)):
                spot = int(rng.integers(len(out) + 1))
                near_slot = any(
                    isinstance(out[i], int)
                    for i in range(max(0, spot - 1), min(len(out), spot + 1))
                )
                if not near_slot:
                    out.insert(spot, all_cues[int(rng.integers(len(all_cues)))])
        # Cue traps: a cue followed by a capitalized non-entity, i.e. a
        # fake entity context that punishes positive-trigger-happy models.
        if rng.random() < _TRAP_PROB:
            spot = int(rng.integers(len(out) + 1))
            near_slot = any(
                isinstance(out[i], int)
                for i in range(max(0, spot - 2), min(len(out), spot + 2))
            )
            if not near_slot:
                cls = int(rng.integers(num_classes))
                trap = [pre_cues[cls][int(rng.integers(6))],
                        cap_distractors[int(rng.integers(len(cap_distractors)))]]
                out[spot:spot] = trap
        templates.append(tuple(out))

    return CorpusSpec(
        class_names=_DEFAULT_CLASS_NAMES[:num_classes],
        entity_lexicon=tuple(lexicon),
        templates=tuple(templates),
        num_sentences=num_sentences,
        dictionary_coverage=coverage,
        feature_dim=feature_dim,
        seed=seed,
    )


# --------------------------------------------------------------------------
# CoNLL-style file format: token<TAB>gold<TAB>distant, one token per
# line, blank line between sentences, UTF-8, LF endings.  A corpus
# without distant labels serializes the distant column as all-O.
# --------------------------------------------------------------------------


def write_conll(corpus: TaggedCorpus, path) -> None:
    distant = corpus.distant_labels
    if distant is None:
        distant = tuple(tuple("O" for _ in s) for s in corpus.sentences)
    blocks = []
    for toks, gold, dist in zip(corpus.sentences, corpus.gold_labels, distant):
        blocks.append("\n".join(f"{t}\t{g}\t{d}" for t, g, d in zip(toks, gold, dist)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n\n".join(blocks) + "\n")


def read_conll(
    path,
    class_names: Optional[Sequence[str]] = None,
    feature_dim: Optional[int] = None,
    feature_seed: int = 0,
) -> TaggedCorpus:
    """Read the three-column format back into a corpus.

    Class names default to the sorted set of names seen in the file;
    pass them explicitly to pin indices.  Features are recomputed from
    (feature_seed, feature_dim) when requested.
    """
    sentences: list[tuple[str, ...]] = []
    gold: list[tuple[str, ...]] = []
    distant: list[tuple[str, ...]] = []
    toks: list[str] = []
    gtags: list[str] = []
    dtags: list[str] = []

    def flush():
        if toks:
            sentences.append(tuple(toks))
            gold.append(tuple(gtags))
            distant.append(tuple(dtags))
            toks.clear()
            gtags.clear()
            dtags.clear()

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush()
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(
                    f"{path}:{lineno}: expected token<TAB>gold<TAB>distant, got {line!r}"
                )
            toks.append(parts[0])
            gtags.append(parts[1])
            dtags.append(parts[2])
    flush()
    if not sentences:
        raise ValueError(f"{path}: empty corpus file")

    if class_names is None:
        seen = set()
        for rows in (gold, distant):
            for tags in rows:
                for tag in tags:
                    if tag != "O":
                        seen.add(tag[2:])
        class_names = tuple(sorted(seen))
        if not class_names:
            raise ValueError(f"{path}: no entity classes present; pass class_names")

    features = None
    if feature_dim is not None:
        features = tuple(featurize_sentence(s, feature_dim, feature_seed) for s in sentences)
    return TaggedCorpus(
        class_names=tuple(class_names),
        sentences=tuple(sentences),
        gold_labels=tuple(gold),
        distant_labels=tuple(distant),
        features=features,
    )
