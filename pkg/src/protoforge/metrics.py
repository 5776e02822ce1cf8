"""Evaluation: confusion matrix, ROC/AUC, accuracy, and loss breakdowns.

Manipulated is the positive class. Ties at the decision threshold predict
manipulated (conservative for forensics triage). The AUC accumulates integer
win/tie counts, which makes the trapezoid value and the pairwise
(Mann-Whitney) estimator identical, not merely close.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics
from .datagen import LABELS
from .model import (
    EncodedSample,
    LossBreakdown,
    ModelVersion,
    TrainConfig,
    _pairwise_diversity,
    label_index,
    logits_from_maxsims,
)


@dataclass
class MetricsReport:
    accuracy: float
    confusion: dict  # {"tp", "fp", "tn", "fn"}
    roc: list  # [(fpr, tpr), ...]
    auc: float
    loss: LossBreakdown
    n_samples: int
    prototype_count: int

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": dict(self.confusion),
            "roc": [[float(a), float(b)] for a, b in self.roc],
            "auc": self.auc,
            "loss": self.loss.as_dict(),
            "n_samples": self.n_samples,
            "prototype_count": self.prototype_count,
        }


def confusion_matrix(probs, labels: Sequence[str], threshold: float = 0.5):
    """Counts with manipulated = positive; predict positive iff p >= threshold.

    Returns ({"tp","fp","tn","fn"}, accuracy).
    """
    probs = np.asarray(probs, dtype=np.float64)
    if len(probs) == 0:
        raise ValueError("empty input")
    if len(probs) != len(labels):
        raise ValueError("probs and labels length mismatch")
    pred = probs[:, 1] >= threshold
    truth = np.array([label_index(lb) for lb in labels], dtype=bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    tn = int(np.sum(~pred & ~truth))
    fn = int(np.sum(~pred & truth))
    acc = (tp + tn) / len(labels)
    return {"tp": tp, "fp": fp, "tn": tn, "fn": fn}, acc


def roc_auc(scores, labels: Sequence[str]):
    """ROC points and AUC from manipulated-class scores.

    Sweeps all distinct thresholds, grouping tied scores into single steps.
    AUC is the trapezoid area, accumulated as the integer
    sum of dfp * (tp_prev + tp) and divided once at the end; this equals
    2*wins + ties of the pairwise estimator exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.array([label_index(lb) for lb in labels])
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both labels must be present")
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    t_sorted = truth[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    acc2 = 0  # twice the trapezoid area, in integer units of pos*neg
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        gp = int(t_sorted[i:j].sum())
        gn = (j - i) - gp
        acc2 += gn * (tp + (tp + gp))
        tp += gp
        fp += gn
        points.append((fp / n_neg, tp / n_pos))
        i = j
    auc = acc2 / (2 * n_pos * n_neg)
    return points, auc


def pairwise_auc(scores, labels: Sequence[str]) -> float:
    """Brute-force P(score_pos > score_neg) + 0.5 P(tie); test oracle."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.array([label_index(lb) for lb in labels], dtype=bool)
    pos = scores[truth]
    neg = scores[~truth]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both labels must be present")
    wins = int(np.sum(pos[:, None] > neg[None, :]))
    ties = int(np.sum(pos[:, None] == neg[None, :]))
    return (2 * wins + ties) / (2 * len(pos) * len(neg))


def report_from_maxsims(
    maxsims: np.ndarray,
    labels: Sequence[str],
    model: ModelVersion,
    cfg: TrainConfig | None = None,
    threshold: float = 0.5,
) -> MetricsReport:
    """Full report from an (N, P) maxsims matrix aligned to the model.

    This is the one evaluation path: the live pipeline feeds it maxsims from
    fresh forward passes, the refinement fast path feeds it cached columns.
    The cluster/separation terms are recovered from maxsims through the exact
    similarity inverse, so no latent maps or distance maps are needed.
    """
    cfg = cfg or model.train_config
    S = np.asarray(maxsims, dtype=np.float64)
    if S.shape[1] != len(model.prototypes):
        raise ValueError(
            f"maxsims width {S.shape[1]} does not match {len(model.prototypes)} prototypes"
        )
    y = np.array([label_index(lb) for lb in labels])
    probs = np.empty((len(S), 2))
    ce_sum = 0.0
    for i in range(len(S)):
        _, probs[i] = logits_from_maxsims(model.weights, S[i])
        ce_sum += -np.log(max(probs[i, y[i]], 1e-300))

    dists = numerics.inverse_similarity(S, model.sim_cfg)  # (N, P) min-cell d^2
    cls = model.class_indices()
    clus_sum = 0.0
    sep_sum = 0.0
    for i in range(len(S)):
        own = cls == y[i]
        if own.any():
            clus_sum += dists[i][own].min()
        if (~own).any():
            sep_sum += max(0.0, cfg.separation_margin - dists[i][~own].min())
    div, _ = _pairwise_diversity(model.prototypes, cfg.diversity_margin, False)
    cross = model.cross_class_mask()
    l1 = float(np.abs(model.weights.astype(np.float64)[cross]).sum())
    n = len(S)
    ce, cluster, sep = ce_sum / n, clus_sum / n, sep_sum / n
    total = (
        ce
        + cfg.lambda_clus * cluster
        + cfg.lambda_sep * sep
        + cfg.lambda_div * div
        + cfg.lambda_l1 * l1
    )
    loss = LossBreakdown(ce, cluster, sep, div, l1, total)

    confusion, acc = confusion_matrix(probs, list(labels), threshold)
    roc, auc = roc_auc(probs[:, 1], list(labels))
    return MetricsReport(
        accuracy=acc,
        confusion=confusion,
        roc=roc,
        auc=auc,
        loss=loss,
        n_samples=n,
        prototype_count=len(model.prototypes),
    )


def evaluate(
    model: ModelVersion,
    samples_or_cache,
    cfg: TrainConfig | None = None,
) -> MetricsReport:
    """Evaluate a model on encoded samples or an activation cache.

    A cache must be aligned to this model (same prototype ids in order);
    misalignment is a hard error, not a silent recompute.
    """
    if hasattr(samples_or_cache, "maxsims_for"):
        cache = samples_or_cache
        S = cache.maxsims_for(model)
        labels = cache.labels
    else:
        samples: Sequence[EncodedSample] = samples_or_cache
        from .model import maxsims_matrix

        S, _ = maxsims_matrix(model, samples)
        labels = [es.label for es in samples]
    return report_from_maxsims(S, labels, model, cfg)


# re-exported for callers that format reports
__all__ = [
    "MetricsReport",
    "confusion_matrix",
    "roc_auc",
    "pairwise_auc",
    "report_from_maxsims",
    "evaluate",
    "LABELS",
]
