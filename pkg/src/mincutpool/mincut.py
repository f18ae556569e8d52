"""MinCutPool: message passing, soft cluster assignments, the minCUT and
orthogonality losses, coarsening and unpooling.

Every routine accepts plain arrays or tape :class:`~mincutpool.autodiff.Var`
objects, so the same code evaluates the model and trains it.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import value
from .errors import ContractError, DegenerateInputError, ParameterError, ShapeError
from .graph import NormalizedAdjacency
from .params import glorot_uniform
from .sparse import SparseMatrix

# Counts transient events the library survives instead of raising.
diagnostics: Counter = Counter()


@dataclass(frozen=True, eq=False)
class MpLayerParams:
    theta_m: np.ndarray  # mixing weights, F_in x F_out
    theta_s: np.ndarray  # skip weights, F_in x F_out

    def __post_init__(self):
        if self.theta_m.shape != self.theta_s.shape:
            raise ShapeError(f"mixing {self.theta_m.shape} and skip {self.theta_s.shape} weights differ")

    @classmethod
    def init(cls, rng, f_in, f_out):
        return cls(glorot_uniform(rng, f_in, f_out), glorot_uniform(rng, f_in, f_out))

    @property
    def out_features(self):
        return self.theta_m.shape[1]


@dataclass(frozen=True, eq=False)
class MlpParams:
    """Dense layers ``(weight, bias)``; bias is a 1 x width row."""

    layers: list
    hidden_activation: str = "linear"

    def __post_init__(self):
        for (w0, _), (w1, _) in zip(self.layers, self.layers[1:]):
            if w0.shape[1] != w1.shape[0]:
                raise ShapeError(f"MLP layers do not chain: {w0.shape} then {w1.shape}")

    @classmethod
    def init(cls, rng, widths, hidden_activation="linear"):
        layers = [(glorot_uniform(rng, a, b), np.zeros((1, b))) for a, b in zip(widths, widths[1:])]
        return cls(layers, hidden_activation)

    @property
    def in_features(self):
        return self.layers[0][0].shape[0]

    @property
    def out_features(self):
        return self.layers[-1][0].shape[1]


@dataclass(frozen=True, eq=False)
class PoolModel:
    """GNN feature extractor followed by the assignment MLP."""

    gnn: list
    mlp: MlpParams
    k: int
    temperature: float = 1.0
    gnn_activation: str = "elu"

    def __post_init__(self):
        if self.mlp.out_features != self.k:
            raise ShapeError(f"MLP output width {self.mlp.out_features} != k={self.k}")
        if self.gnn and self.gnn[-1].out_features != self.mlp.in_features:
            raise ShapeError("GNN output width does not match MLP input width")
        if not self.temperature > 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature}")

    @classmethod
    def init(cls, in_features, k, seed=None, gnn_units=(16,), mlp_hidden=(16,),
             gnn_activation="elu", mlp_activation="linear", temperature=1.0):
        """Glorot-uniform weights, zero biases."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        widths = [in_features, *gnn_units]
        gnn = [MpLayerParams.init(rng, a, b) for a, b in zip(widths, widths[1:])]
        mlp = MlpParams.init(rng, [widths[-1], *mlp_hidden, k], mlp_activation)
        return cls(gnn, mlp, k, temperature, gnn_activation)


@dataclass(frozen=True, eq=False)
class SoftAssignment:
    """Row-stochastic N x K cluster assignment."""

    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(value(self.s), dtype=np.float64)
        if s.ndim != 2:
            raise ShapeError(f"assignment must be a matrix, got shape {s.shape}")
        if s.size and (s.min() < -1e-12 or s.max() > 1 + 1e-12):
            raise ContractError("assignment entries must lie in [0, 1]")
        if not np.allclose(s.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ContractError("assignment rows must sum to 1")
        object.__setattr__(self, "s", s)

    @property
    def k(self):
        return self.s.shape[1]

    def hard_labels(self):
        """Per-row argmax; ties go to the lowest cluster index."""
        return np.argmax(self.s, axis=1)


@dataclass(frozen=True, eq=False)
class PooledGraph:
    a_pool: object  # K x K, S^T A~ S
    a_tilde_pool: object  # K x K, zero diagonal, renormalized
    x_pool: object  # K x F, S^T X
    degenerate: bool = field(default=False)


# ---------------------------------------------------------------- building blocks

def propagate(a_tilde, x):
    """A~ X for sparse, normalized or dense (possibly taped) adjacencies."""
    if isinstance(a_tilde, NormalizedAdjacency):
        return ad.spmm(a_tilde.matrix, x)
    if isinstance(a_tilde, SparseMatrix):
        return ad.spmm(a_tilde, x)
    return ad.matmul(a_tilde, x)


def tilde_degrees(a_tilde):
    """Degree column (N x 1) of a normalized adjacency."""
    if isinstance(a_tilde, NormalizedAdjacency):
        return a_tilde.tilde_degrees[:, None]
    if isinstance(a_tilde, SparseMatrix):
        return a_tilde.row_sums()[:, None]
    return ad.row_sums(a_tilde)


def mp_forward(x, a_tilde, p: MpLayerParams, activation="relu"):
    """act(A~ X theta_m + X theta_s)."""
    x_cols = value(x).shape[1]
    if x_cols != p.theta_m.shape[0]:
        raise ShapeError(f"features have {x_cols} columns, layer expects {p.theta_m.shape[0]}")
    mixed = ad.matmul(propagate(a_tilde, x), p.theta_m)
    skip = ad.matmul(x, p.theta_s)
    return ad.activation(activation)(ad.add(mixed, skip))


def mlp_forward(h, mlp: MlpParams, temperature=1.0):
    """Hidden layers with ``mlp.hidden_activation``, row-softmax output."""
    act = ad.activation(mlp.hidden_activation)
    *hidden, (w_out, b_out) = mlp.layers
    for w, b in hidden:
        h = act(ad.add(ad.matmul(h, w), b))
    logits = ad.add(ad.matmul(h, w_out), b_out)
    return ad.softmax_rows_with_temperature(logits, temperature)


def embed(x, a_tilde, model: PoolModel):
    h = x
    for layer in model.gnn:
        h = mp_forward(h, a_tilde, layer, model.gnn_activation)
    return h


def compute_assignments(x, a_tilde, model: PoolModel):
    """S = MLP(GNN(X, A~)); returns the raw N x K matrix (array or Var)."""
    return mlp_forward(embed(x, a_tilde, model), model.mlp, model.temperature)


# ---------------------------------------------------------------- losses

def _assignment(s):
    return s.s if isinstance(s, SoftAssignment) else s


def cut_loss(s, a_tilde, sparse=True):
    """-Tr(S^T A~ S) / Tr(S^T D~ S), bounded in [-1, 0].

    With ``sparse=False`` a normalized adjacency is densified first.
    """
    s = _assignment(s)
    if not sparse and isinstance(a_tilde, NormalizedAdjacency):
        a_tilde = a_tilde.dense
    n = value(s).shape[0]
    a_shape = a_tilde.shape if not isinstance(a_tilde, NormalizedAdjacency) else (a_tilde.n,) * 2
    if a_shape[0] != n:
        raise ShapeError(f"assignment has {n} rows, adjacency is {a_shape}")
    numerator = ad.trace(ad.matmul(ad.transpose(s), propagate(a_tilde, s)))
    denominator = ad.trace(ad.matmul(ad.transpose(s), ad.hadamard(tilde_degrees(a_tilde), s)))
    if not float(value(denominator)) > 0:
        raise DegenerateInputError("Tr(S^T D~ S) is zero: the graph has no edges")
    return ad.scale(ad.divide(numerator, denominator), -1.0)


def ortho_loss(s):
    """|| S^T S / ||S^T S||_F - I_K / sqrt(K) ||_F, bounded in [0, 2]."""
    s = _assignment(s)
    ss = ad.matmul(ad.transpose(s), s)
    k = value(ss).shape[0]
    normed = ad.divide(ss, ad.frobenius_norm(ss))
    return ad.frobenius_norm(ad.subtract(normed, np.eye(k) / np.sqrt(k)))


def unsupervised_loss(s, a_tilde, sparse=True):
    return ad.add(cut_loss(s, a_tilde, sparse), ortho_loss(s))


def losses(s, a_tilde):
    """``(l_c, l_o, l_u)`` sharing one evaluation of each term."""
    l_c, l_o = cut_loss(s, a_tilde), ortho_loss(s)
    return l_c, l_o, ad.add(l_c, l_o)


def ratio_trace(s, a, d=None):
    """tr[(S^T D S)^-1 (S^T A S)] with D = diag(d) (row sums of ``a`` by default).

    The K x K inverse is Gauss-Jordan with partial pivoting; an empty or
    zero-degree cluster makes it singular and raises DegenerateInputError.
    """
    s = _assignment(s)
    if isinstance(a, NormalizedAdjacency):
        a = a.matrix
    if d is None:
        d = a.row_sums() if isinstance(a, SparseMatrix) else value(a).sum(axis=1)
    d = np.asarray(d, dtype=np.float64)
    if d.ndim == 2 and d.shape[0] == d.shape[1]:
        d = np.diag(d)
    d = d.ravel()
    sas = ad.matmul(ad.transpose(s), propagate(a, s))
    sds = ad.matmul(ad.transpose(s), ad.hadamard(d[:, None], s))
    try:
        inv = ad.inverse(sds)
    except DegenerateInputError as exc:
        raise DegenerateInputError(f"S^T D S is singular (empty or zero-degree cluster): {exc}") from None
    return ad.trace(ad.matmul(inv, sas))


def cut_loss_ratio_trace(s, a, d=None):
    """Ratio-trace counterpart of the cut loss: -ratio_trace / K (lower is better)."""
    k = value(_assignment(s)).shape[1]
    return ad.scale(ratio_trace(s, a, d), -1.0 / k)


# ---------------------------------------------------------------- pooling

def coarsen(s, a_tilde, x) -> PooledGraph:
    """A_pool = S^T A~ S and X_pool = S^T X, then zero the diagonal of A_pool
    and renormalize it symmetrically.

    If the pooled graph has no off-diagonal mass its normalized adjacency is
    all zeros and ``diagnostics['degenerate_pooled_graph']`` is incremented.
    """
    s = _assignment(s)
    st = ad.transpose(s)
    a_pool = ad.matmul(st, propagate(a_tilde, s))
    x_pool = ad.matmul(st, x)
    a_hat = ad.zero_diagonal(a_pool)
    inv_sqrt = ad.inv_sqrt_safe(ad.row_sums(a_hat))
    a_tilde_pool = ad.hadamard(a_hat, ad.matmul(inv_sqrt, ad.transpose(inv_sqrt)))
    degenerate = not np.any(value(a_hat) > 0)
    if degenerate:
        diagnostics["degenerate_pooled_graph"] += 1
    return PooledGraph(a_pool, a_tilde_pool, x_pool, degenerate)


def unpool(s, x_pool, a_pool):
    """X_rec = S X_pool and A_rec = S A_pool S^T."""
    s = _assignment(s)
    x_rec = ad.matmul(s, x_pool)
    a_rec = ad.matmul(ad.matmul(s, a_pool), ad.transpose(s))
    return x_rec, a_rec


# ---------------------------------------------------------------- checkpoints

def model_to_dict(model: PoolModel) -> dict:
    return {
        "kind": "mincut_pool_model",
        "k": model.k,
        "temperature": model.temperature,
        "gnn_activation": model.gnn_activation,
        "mlp_hidden_activation": model.mlp.hidden_activation,
        "gnn": [{"theta_m": value(p.theta_m).tolist(), "theta_s": value(p.theta_s).tolist()}
                for p in model.gnn],
        "mlp": [{"weight": value(w).tolist(), "bias": value(b).tolist()} for w, b in model.mlp.layers],
    }


def model_from_dict(data: dict) -> PoolModel:
    def arr(x):
        return np.asarray(x, dtype=np.float64)

    gnn = [MpLayerParams(arr(p["theta_m"]), arr(p["theta_s"])) for p in data["gnn"]]
    mlp = MlpParams([(arr(layer["weight"]), arr(layer["bias"])) for layer in data["mlp"]],
                    data.get("mlp_hidden_activation", "linear"))
    return PoolModel(gnn, mlp, int(data["k"]), float(data["temperature"]),
                     data.get("gnn_activation", "elu"))


def save_model(model: PoolModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path) -> PoolModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
