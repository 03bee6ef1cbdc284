"""Entity-level NER F1 and normalization top-1 accuracy."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from bioann.errors import EmptyEvaluation

# A span item: (doc id, begin, end, entity type string)
SpanItem = tuple[str, int, int, str]


@dataclass(frozen=True, slots=True)
class TypeScore:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True, slots=True)
class NerScore:
    per_type: dict[str, TypeScore]
    overall: TypeScore


def _score(tp: int, fp: int, fn: int) -> TypeScore:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return TypeScore(p, r, f1, tp, fp, fn)


def ner_f1(gold: Iterable[SpanItem], pred: Iterable[SpanItem]) -> NerScore:
    """Exact-span, exact-type matching with one-to-one assignment.

    A prediction is a true positive iff an unmatched gold item with the
    identical (doc, begin, end, type) key exists.  With exact keys the
    greedy count min(gold_count, pred_count) per key equals the optimal
    assignment.  The overall row is micro-averaged.
    """
    gold_counts = Counter(gold)
    pred_counts = Counter(pred)

    types = sorted({k[3] for k in gold_counts} | {k[3] for k in pred_counts})
    per_type: dict[str, TypeScore] = {}
    total_tp = total_fp = total_fn = 0
    for t in types:
        tp = fp = fn = 0
        keys = {k for k in gold_counts if k[3] == t} | {k for k in pred_counts if k[3] == t}
        for k in keys:
            g, p = gold_counts.get(k, 0), pred_counts.get(k, 0)
            tp += min(g, p)
            fp += max(p - g, 0)
            fn += max(g - p, 0)
        per_type[t] = _score(tp, fp, fn)
        total_tp += tp
        total_fp += fp
        total_fn += fn
    return NerScore(per_type, _score(total_tp, total_fp, total_fn))


def _fold_cui(cui: str) -> str:
    # Case folding applies to the namespace part only; identifiers keep case.
    ns, sep, ident = cui.partition(":")
    return ns.lower() + sep + ident


def nen_accuracy(items: Sequence[tuple[Iterable[str], Iterable[str]]]) -> float:
    """Fraction of items where any predicted CUI is in the gold set.

    Each item is (gold cui collection, predicted cui list).  Namespace
    comparison is case-insensitive.
    """
    if not items:
        raise EmptyEvaluation("no items to evaluate")
    correct = 0
    for gold_cuis, pred_cuis in items:
        gold_set = {_fold_cui(c) for c in gold_cuis}
        if any(_fold_cui(c) in gold_set for c in pred_cuis):
            correct += 1
    return correct / len(items)
