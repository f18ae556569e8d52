"""Clustering and task metrics.  Entropies use natural logarithms and
0 log 0 = 0."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    """``counts[i, j]`` = items with predicted cluster i and true class j."""

    counts: np.ndarray

    @classmethod
    def from_labels(cls, pred, truth):
        pred, truth = _as_labels(pred), _as_labels(truth)
        if len(pred) != len(truth):
            raise ContractError(f"length mismatch: {len(pred)} predictions, {len(truth)} labels")
        if len(pred) == 0:
            raise ContractError("labelings must be nonempty")
        _, p = np.unique(pred, return_inverse=True)
        _, t = np.unique(truth, return_inverse=True)
        counts = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
        np.add.at(counts, (p, t), 1)
        return cls(counts)

    @property
    def total(self):
        return int(self.counts.sum())

    def entropy_pred(self):
        return _entropy(self.counts.sum(axis=1))

    def entropy_truth(self):
        return _entropy(self.counts.sum(axis=0))

    def conditional_entropy_pred_given_truth(self):
        """H(pred | truth)."""
        return math.fsum([_entropy(self.counts.ravel()), -self.entropy_truth()])

    def mutual_information(self):
        # fsum is exactly rounded, so the result does not depend on argument order
        return math.fsum([self.entropy_pred(), self.entropy_truth(), -_entropy(self.counts.ravel())])


def _as_labels(x):
    if hasattr(x, "labels") and not isinstance(x, np.ndarray):
        x = x.labels
    return np.asarray(x).ravel()


def _entropy(counts):
    counts = np.asarray(counts, dtype=np.float64)
    counts = counts[counts > 0]
    if counts.size == 0:
        return 0.0
    p = counts / counts.sum()
    return -math.fsum((p * np.log(p)).tolist())


def nmi(pred, truth) -> float:
    """Mutual information normalized by sqrt(H(pred) * H(truth)).

    Two constant labelings score 1; otherwise a zero marginal entropy
    scores 0.
    """
    table = ContingencyTable.from_labels(pred, truth)
    h_pred, h_truth = table.entropy_pred(), table.entropy_truth()
    if h_pred == 0.0 or h_truth == 0.0:
        return 1.0 if h_pred == h_truth == 0.0 else 0.0
    mi = table.mutual_information()
    return float(np.clip(mi / np.sqrt(h_pred * h_truth), 0.0, 1.0))


def completeness_score(pred, truth) -> float:
    """1 - H(pred | truth) / H(pred); 1 when pred is constant."""
    table = ContingencyTable.from_labels(pred, truth)
    h_pred = table.entropy_pred()
    if h_pred == 0.0:
        return 1.0
    return float(np.clip(1.0 - table.conditional_entropy_pred_given_truth() / h_pred, 0.0, 1.0))


def accuracy(pred, truth) -> float:
    pred, truth = _as_labels(pred), _as_labels(truth)
    if len(pred) != len(truth):
        raise ContractError(f"length mismatch: {len(pred)} vs {len(truth)}")
    if len(pred) == 0:
        raise ContractError("labelings must be nonempty")
    return float(np.mean(pred == truth))


def mse(x, y) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"mse shape mismatch: {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))
