"""Binary classification metrics and ROUGE-N.

Zero-denominator cases return 0.0 and raise the `degenerate` flag instead
of NaN, so an all-negative predictor reports precision 0 rather than
crashing the report.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    rouge1: Optional[float] = None
    rouge2: Optional[float] = None
    degenerate: bool = False

    def to_dict(self) -> dict:
        out = {"precision": self.precision, "recall": self.recall,
               "f1": self.f1, "accuracy": self.accuracy}
        if self.rouge1 is not None:
            out["rouge1"] = self.rouge1
        if self.rouge2 is not None:
            out["rouge2"] = self.rouge2
        return out


def confusion(predictions: Sequence[int], labels: Sequence[int]) -> ConfusionCounts:
    if len(predictions) != len(labels):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs {len(labels)} labels")
    if len(predictions) == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    tp = fp = fn = tn = 0
    for p, y in zip(predictions, labels):
        if p not in (0, 1) or y not in (0, 1):
            raise ValueError(f"predictions and labels must be 0/1, got ({p}, {y})")
        if p == 1 and y == 1:
            tp += 1
        elif p == 1:
            fp += 1
        elif y == 1:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def f1_from_pr(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def classification_metrics(predictions: Sequence[int],
                           labels: Sequence[int]) -> MetricsReport:
    c = confusion(predictions, labels)
    degenerate = False
    if c.tp + c.fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = c.tp / (c.tp + c.fn)
    return MetricsReport(precision=precision, recall=recall,
                         f1=f1_from_pr(precision, recall),
                         accuracy=(c.tp + c.tn) / c.total,
                         degenerate=degenerate)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(reference: Sequence[str], candidate: Sequence[str], n: int) -> float:
    """Recall-oriented n-gram overlap: clipped matches / reference n-grams.

    Returns 0.0 when the reference holds no n-grams.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    ref = _ngrams(reference, n)
    total = sum(ref.values())
    if total == 0:
        return 0.0
    cand = _ngrams(candidate, n)
    matched = sum(min(count, cand[gram]) for gram, count in ref.items())
    return matched / total
