"""Evaluation statistics: accuracy, rank-based ROC AUC (Mann-Whitney with
mid-rank tie handling), DeLong variance and 95% CI, and the paired DeLong
test for two models scored on the same cases.

The DeLong quantities follow the fast mid-rank formulation of Sun & Xu
(IEEE SPL 2014).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from .exceptions import ValidationError


@dataclass
class ScoredOutcomes:
    """Positive-class scores with binary labels."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ValidationError("scores and labels must be equal-length 1-D")
        if self.scores.size == 0:
            raise ValidationError("empty outcomes")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValidationError("labels must be 0/1")

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return int(self.labels.size - self.labels.sum())


@dataclass
class AucEstimate:
    auc: float
    variance: float
    ci95: tuple


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValidationError("predictions and labels must be equal-length, nonempty")
    return float(np.mean(predictions == labels))


def _placements(outcomes: ScoredOutcomes):
    """Mid-rank placement components V10 (per positive), V01 (per negative)."""
    scores, labels = outcomes.scores, outcomes.labels
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    m, n = len(pos), len(neg)
    all_ranks = rankdata(np.concatenate([pos, neg]))
    pos_ranks = rankdata(pos)
    neg_ranks = rankdata(neg)
    v10 = (all_ranks[:m] - pos_ranks) / n
    v01 = 1.0 - (all_ranks[m:] - neg_ranks) / m
    auc_val = float(v10.mean())
    return auc_val, v10, v01


def auc(outcomes: ScoredOutcomes) -> float:
    """Probability a random positive outscores a random negative (ties count
    half); computed from mid-ranks, identical to the pairwise statistic."""
    if outcomes.n_pos < 1 or outcomes.n_neg < 1:
        raise ValidationError("AUC needs at least one positive and one negative")
    auc_val, _, _ = _placements(outcomes)
    return auc_val


def delong_ci(outcomes: ScoredOutcomes, level: float = 0.95) -> AucEstimate:
    """DeLong variance of the AUC and a normal-approximation CI clipped to [0,1]."""
    if outcomes.n_pos < 2 or outcomes.n_neg < 2:
        raise ValidationError("DeLong CI needs >= 2 positives and >= 2 negatives")
    auc_val, v10, v01 = _placements(outcomes)
    var = v10.var(ddof=1) / len(v10) + v01.var(ddof=1) / len(v01)
    z = norm.ppf(0.5 + level / 2.0)
    half = z * np.sqrt(var)
    lo = float(np.clip(auc_val - half, 0.0, 1.0))
    hi = float(np.clip(auc_val + half, 0.0, 1.0))
    return AucEstimate(auc=auc_val, variance=float(var), ci95=(lo, hi))


def delong_paired_test(outcomes_a: ScoredOutcomes,
                       outcomes_b: ScoredOutcomes) -> float:
    """Two-sided p-value for AUC(a) != AUC(b), both models scored on the same
    cases (identical labels required)."""
    if not np.array_equal(outcomes_a.labels, outcomes_b.labels):
        raise ValidationError("paired test requires identical labels")
    if outcomes_a.n_pos < 2 or outcomes_a.n_neg < 2:
        raise ValidationError("paired test needs >= 2 positives and >= 2 negatives")
    auc_a, v10_a, v01_a = _placements(outcomes_a)
    auc_b, v10_b, v01_b = _placements(outcomes_b)
    diff = auc_a - auc_b
    s10 = np.cov(v10_a, v10_b, ddof=1)
    s01 = np.cov(v01_a, v01_b, ddof=1)
    s = s10 / len(v10_a) + s01 / len(v01_a)
    var_diff = s[0, 0] + s[1, 1] - 2.0 * s[0, 1]
    if var_diff <= 0.0:
        return 1.0 if diff == 0.0 else 0.0
    z = diff / np.sqrt(var_diff)
    return float(2.0 * norm.sf(abs(z)))
