"""Task metrics with brute-force oracles.

Macro accuracy / harmonic mean for classification, MRR / hit@k over 1-based
ranks for link prediction.  Ranking convention everywhere: descending score,
ties broken by ascending candidate index.
"""

from __future__ import annotations

import logging
from collections import Counter
from typing import Callable, Sequence

import numpy as np

from .ontology import ValidationError

logger = logging.getLogger(__name__)


def macro_accuracy(
    y_true: Sequence[str], y_pred: Sequence[str], classes: Sequence[str]
) -> float:
    """Mean of per-class accuracies — each class counts equally.

    Classes with no test samples are excluded with a warning; if none of the
    given classes has samples that's an error.
    """
    if len(y_true) != len(y_pred):
        raise ValidationError("y_true and y_pred length mismatch")
    if not classes:
        raise ValidationError("empty class list")
    totals: Counter = Counter(y_true)
    correct: Counter = Counter(
        t for t, p in zip(y_true, y_pred) if t == p
    )
    per_class = []
    for c in classes:
        if totals[c] == 0:
            logger.warning("macro_accuracy: class %r has no samples; excluded", c)
            continue
        per_class.append(correct[c] / totals[c])
    if not per_class:
        raise ValidationError("no class in the list has any test sample")
    return float(np.mean(per_class))


def harmonic_mean_accuracy(acc_seen: float, acc_unseen: float) -> float:
    """H = 2*s*u/(s+u); defined as 0 when both accuracies are 0."""
    for name, v in (("seen", acc_seen), ("unseen", acc_unseen)):
        if not 0.0 <= v <= 1.0:
            raise ValidationError(f"{name} accuracy {v} outside [0, 1]")
    if acc_seen == 0.0 and acc_unseen == 0.0:
        return 0.0
    return 2.0 * acc_seen * acc_unseen / (acc_seen + acc_unseen)


def _check_ranks(ranks: Sequence[int]) -> np.ndarray:
    arr = np.asarray(ranks)
    if arr.size == 0:
        raise ValidationError("empty rank list")
    if not np.issubdtype(arr.dtype, np.integer) or (arr < 1).any():
        raise ValidationError("ranks must be integers >= 1")
    return arr


def mean_reciprocal_rank(ranks: Sequence[int]) -> float:
    arr = _check_ranks(ranks)
    return float((1.0 / arr).mean())


def hits_at(ranks: Sequence[int], k: int) -> float:
    if k < 1:
        raise ValidationError("k must be >= 1")
    arr = _check_ranks(ranks)
    return float((arr <= k).mean())


def summarize_ranks(ranks: Sequence[int], ks: Sequence[int] = (1, 5, 10)) -> dict:
    out = {"mrr": mean_reciprocal_rank(ranks)}
    for k in ks:
        out[f"hits@{k}"] = hits_at(ranks, k)
    return out


def rank_candidates(scores: np.ndarray) -> np.ndarray:
    """Candidate indices ordered by descending score, ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ValidationError("scores must be a vector")
    return np.lexsort((np.arange(scores.size), -scores))


def rank_of(scores: np.ndarray, true_index: int) -> int:
    """1-based rank of ``true_index`` under the standard ordering."""
    order = rank_candidates(scores)
    return int(np.nonzero(order == true_index)[0][0]) + 1


def brute_force_rank_oracle(
    score_fn: Callable[[int], float], n_candidates: int, true_index: int
) -> int:
    """Independent rank computation: score every candidate one at a time and
    count, without sorting.  rank = 1 + #higher + #(equal with smaller index).
    """
    if not 0 <= true_index < n_candidates:
        raise ValidationError("true_index out of range")
    true_score = float(score_fn(true_index))
    rank = 1
    for j in range(n_candidates):
        if j == true_index:
            continue
        s = float(score_fn(j))
        if s > true_score or (s == true_score and j < true_index):
            rank += 1
    return rank
