"""BIO decoding, span extraction and strict entity-level metrics.

A predicted entity counts as correct only when sentence, boundaries and
class all match the gold span exactly.  Overall precision/recall/F1 are
micro scores computed from pooled counts, never averages of per-class
scores.  Token accuracy is computed on collapsed class ids (B-X and
I-X both count as class X).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .model import SoftmaxModel, forward_batch

__all__ = [
    "Span",
    "PerClassScore",
    "EvalResult",
    "decode_spans_from_classes",
    "decode_spans_from_bio",
    "decode_corpus_bio",
    "spans_to_bio",
    "score",
    "predict_token_classes",
    "eval_result_to_json",
    "eval_csv_header",
    "eval_csv_row",
]


class Span(NamedTuple):
    """One entity occurrence; ``end`` is inclusive, ``cls`` in 1..C."""

    sentence: int
    start: int
    end: int
    cls: int


def decode_spans_from_classes(token_classes: Sequence[int], sentence_index: int = 0) -> list[Span]:
    """Maximal runs of one positive class become one span each; 0 breaks runs."""
    spans: list[Span] = []
    start = None
    current = 0
    for i, c in enumerate(token_classes):
        c = int(c)
        if c < 0:
            raise ValueError(f"negative class id {c} at token {i}")
        if c != current:
            if current > 0:
                spans.append(Span(sentence_index, start, i - 1, current))
            start = i if c > 0 else None
            current = c
    if current > 0:
        spans.append(Span(sentence_index, start, len(token_classes) - 1, current))
    return spans


def _split_bio(tag: str, position: int) -> tuple[str, str]:
    if tag == "O":
        return "O", ""
    if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
        raise ValueError(f"invalid BIO tag {tag!r} at token {position}")
    return tag[0], tag[2:]


def decode_spans_from_bio(
    tags: Sequence[str],
    class_names: Sequence[str],
    sentence_index: int = 0,
) -> tuple[list[Span], int]:
    """Spans per BIO semantics, plus the number of repaired tags.

    An I-X that does not continue an open X span (after O, or after a
    different class) is repaired by treating it as B-X; every repair is
    counted.
    """
    index = {name: i + 1 for i, name in enumerate(class_names)}
    spans: list[Span] = []
    repairs = 0
    start = None
    current = None  # class name of the open span

    def close(i: int) -> None:
        nonlocal start, current
        if current is not None:
            spans.append(Span(sentence_index, start, i - 1, index[current]))
        start, current = None, None

    for i, tag in enumerate(tags):
        prefix, name = _split_bio(tag, i)
        if prefix == "O":
            close(i)
            continue
        if name not in index:
            raise ValueError(f"unknown entity class {name!r} at token {i}")
        if prefix == "B":
            close(i)
            start, current = i, name
        else:  # prefix == "I"
            if current != name:
                repairs += 1
                close(i)
                start, current = i, name
    close(len(tags))
    return spans, repairs


def decode_corpus_bio(
    label_rows: Sequence[Sequence[str]],
    class_names: Sequence[str],
) -> tuple[list[Span], int]:
    """Decode every sentence of a corpus-level BIO layer."""
    spans: list[Span] = []
    repairs = 0
    for s, tags in enumerate(label_rows):
        got, fixed = decode_spans_from_bio(tags, class_names, sentence_index=s)
        spans.extend(got)
        repairs += fixed
    return spans, repairs


def spans_to_bio(spans: Sequence[Span], num_tokens: int, class_names: Sequence[str]) -> list[str]:
    """Encode non-overlapping spans of one sentence as BIO tags."""
    tags = ["O"] * num_tokens
    for span in sorted(spans, key=lambda s: s.start):
        name = class_names[span.cls - 1]
        if any(tags[i] != "O" for i in range(span.start, span.end + 1)):
            raise ValueError(f"overlapping spans at tokens {span.start}..{span.end}")
        tags[span.start] = f"B-{name}"
        for i in range(span.start + 1, span.end + 1):
            tags[i] = f"I-{name}"
    return tags


@dataclass(frozen=True)
class PerClassScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalResult:
    precision: float
    recall: float
    f1: float
    token_accuracy: float
    tp: int
    fp: int
    fn: int
    per_class: dict[int, PerClassScore]
    zero_predictions: bool
    repairs: int


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def score(
    pred_spans: Sequence[Span],
    gold_spans: Sequence[Span],
    num_tokens: int,
    pred_token_classes: Sequence[int],
    gold_token_classes: Sequence[int],
    num_classes: Optional[int] = None,
    repairs: int = 0,
) -> EvalResult:
    """Strict entity-level micro P/R/F1 plus collapsed-class token accuracy.

    ``pred_token_classes`` and ``gold_token_classes`` are the flattened
    per-token class ids over the same tokens the spans refer to.
    """
    pred_set = set(pred_spans)
    gold_set = set(gold_spans)
    if len(pred_set) != len(pred_spans):
        raise ValueError("duplicate predicted spans")
    if len(gold_set) != len(gold_spans):
        raise ValueError("duplicate gold spans")
    classes = {s.cls for s in pred_set | gold_set}
    if num_classes is None:
        num_classes = max(classes, default=1)
    if any(c > num_classes or c < 1 for c in classes):
        raise ValueError("span class id outside 1..num_classes")

    per_class: dict[int, PerClassScore] = {}
    for c in range(1, num_classes + 1):
        p_c = {s for s in pred_set if s.cls == c}
        g_c = {s for s in gold_set if s.cls == c}
        tp = len(p_c & g_c)
        fp = len(p_c - g_c)
        fn = len(g_c - p_c)
        precision, recall, f1 = _prf(tp, fp, fn)
        per_class[c] = PerClassScore(tp, fp, fn, precision, recall, f1)

    tp = sum(s.tp for s in per_class.values())
    fp = sum(s.fp for s in per_class.values())
    fn = sum(s.fn for s in per_class.values())
    precision, recall, f1 = _prf(tp, fp, fn)

    pred_arr = np.asarray(pred_token_classes, dtype=np.int64)
    gold_arr = np.asarray(gold_token_classes, dtype=np.int64)
    if pred_arr.shape != (num_tokens,) or gold_arr.shape != (num_tokens,):
        raise ValueError("token class arrays must be flat and num_tokens long")
    token_accuracy = float((pred_arr == gold_arr).mean()) if num_tokens else 0.0

    return EvalResult(
        precision=precision,
        recall=recall,
        f1=f1,
        token_accuracy=token_accuracy,
        tp=tp,
        fp=fp,
        fn=fn,
        per_class=per_class,
        zero_predictions=(tp + fp == 0),
        repairs=repairs,
    )


def predict_token_classes(model: SoftmaxModel, corpus) -> list[np.ndarray]:
    """Argmax class per token; ties resolve to the lowest class index.

    ``corpus`` must expose per-sentence feature matrices via
    ``corpus.features``.
    """
    if corpus.features is None:
        raise ValueError("corpus has no features")
    out = []
    for feats in corpus.features:
        probs = forward_batch(model, feats)
        out.append(probs.argmax(axis=1).astype(np.int64))
    return out


def eval_result_to_json(result: EvalResult) -> dict:
    return {
        "precision": result.precision,
        "recall": result.recall,
        "f1": result.f1,
        "token_accuracy": result.token_accuracy,
        "counts": {"tp": result.tp, "fp": result.fp, "fn": result.fn},
        "per_class": {
            str(c): {
                "tp": s.tp,
                "fp": s.fp,
                "fn": s.fn,
                "precision": s.precision,
                "recall": s.recall,
                "f1": s.f1,
            }
            for c, s in sorted(result.per_class.items())
        },
        "zero_predictions": result.zero_predictions,
        "repairs": result.repairs,
    }


def eval_csv_header() -> str:
    return "precision,recall,f1,token_accuracy,tp,fp,fn,repairs,zero_predictions"


def eval_csv_row(result: EvalResult) -> str:
    return (f"{result.precision!r},{result.recall!r},{result.f1!r},"
            f"{result.token_accuracy!r},{result.tp},{result.fp},{result.fn},"
            f"{result.repairs},{int(result.zero_predictions)}")
