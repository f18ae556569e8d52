"""Minimal Top-K and DiffPool pooling, used as comparison baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import value
from .errors import ParameterError, ShapeError
from .graph import NormalizedAdjacency
from .mincut import MpLayerParams, mp_forward
from .params import glorot_uniform
from .sparse import SparseMatrix


@dataclass(frozen=True, eq=False)
class TopKParams:
    p: np.ndarray  # F x 1 projection

    @classmethod
    def init(cls, rng, f_in):
        return cls(glorot_uniform(rng, f_in, 1))


@dataclass(frozen=True, eq=False)
class DiffPoolParams:
    assign: MpLayerParams  # F -> K logits
    embed: MpLayerParams  # F -> H

    @classmethod
    def init(cls, rng, f_in, k, hidden):
        return cls(MpLayerParams.init(rng, f_in, k), MpLayerParams.init(rng, f_in, hidden))

    @property
    def k(self):
        return self.assign.out_features


def topk_select(scores, k):
    """Indices of the k largest scores, ties to the lowest index, sorted ascending."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if not 1 <= k <= len(scores):
        raise ParameterError(f"k={k} must lie in [1, {len(scores)}]")
    order = np.lexsort((np.arange(len(scores)), -scores))
    return np.sort(order[:k])


def topk_pool(x, a_tilde, params: TopKParams, k):
    """Keep the k nodes with the largest projection scores X p.

    Kept rows are gated by tanh(score) so that ``p`` receives gradients.
    Returns ``(x_pooled, a_pooled, kept, scores)``; the pooled adjacency is
    the kept-node submatrix of the (constant) normalized adjacency.
    """
    if value(x).shape[1] != params.p.shape[0]:
        raise ShapeError(f"features have {value(x).shape[1]} columns, projection has {params.p.shape[0]}")
    scores = ad.matmul(x, params.p)
    kept = topk_select(value(scores), k)
    gated = ad.hadamard(x, ad.tanh(scores))
    x_pooled = ad.gather_rows(gated, kept)
    if isinstance(a_tilde, NormalizedAdjacency):
        a_pooled = a_tilde.matrix.submatrix(kept)
    elif isinstance(a_tilde, SparseMatrix):
        a_pooled = a_tilde.submatrix(kept)
    else:
        a_pooled = ad.gather_rows(ad.transpose(ad.gather_rows(a_tilde, kept)), kept)
    return x_pooled, a_pooled, kept, scores


def topk_unpool(kept, x_pooled, n):
    """Scatter pooled rows back to their original indices; dropped nodes get zeros."""
    return ad.scatter_rows(x_pooled, kept, n)


def diffpool_assign(x, a_tilde, params: DiffPoolParams, activation="relu"):
    """``(S, Z)``: row-softmax of an MP layer, and the embedding MP layer."""
    s = ad.softmax_rows(mp_forward(x, a_tilde, params.assign, "linear"))
    z = mp_forward(x, a_tilde, params.embed, activation)
    return s, z


def diffpool_losses(s, a_tilde, eps=1e-12):
    """``(link_loss, entropy_loss)``.

    link = ||A~ - S S^T||_F / N^2; entropy = mean row entropy of S, with
    ``eps`` inside the log to keep exact zeros finite.
    """
    dense = a_tilde.dense if isinstance(a_tilde, NormalizedAdjacency) else (
        a_tilde.to_dense() if isinstance(a_tilde, SparseMatrix) else a_tilde)
    n = value(s).shape[0]
    link = ad.scale(ad.frobenius_norm(ad.subtract(dense, ad.matmul(s, ad.transpose(s)))), 1.0 / n**2)
    plogp = ad.hadamard(s, ad.log(ad.add(s, eps)))
    entropy = ad.scale(ad.sum_all(plogp), -1.0 / n)
    return link, entropy
