"""Central finite-difference checks of tape gradients.

``CASES`` registers one scalar-valued probe per differentiable operation
and per composite loss; :func:`run_all` evaluates every probe and reports
the worst relative error.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, value
from .baselines import DiffPoolParams, TopKParams, diffpool_assign, diffpool_losses, topk_pool
from .graph import Graph, normalize_adjacency
from .mincut import (PoolModel, coarsen, compute_assignments, cut_loss, cut_loss_ratio_trace,
                     ortho_loss, unpool, unsupervised_loss)
from .params import named_parameters, with_parameters
from .sparse import SparseMatrix

TOLERANCE = 1e-5


def relative_error(analytic, numeric, floor=1e-8):
    """||a - n|| / max(||a||, ||n||, floor)."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / denom)


def numerical_gradient(fn, arrays, name, h=1e-6):
    base = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}
    x = base[name]
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        plus = float(value(fn(base)))
        x[idx] = orig - h
        minus = float(value(fn(base)))
        x[idx] = orig
        grad[idx] = (plus - minus) / (2 * h)
    return grad


def check_gradients(fn: Callable, arrays: dict, h=1e-6) -> dict:
    """Relative error of the tape gradient of ``fn`` for every named input.

    ``fn`` maps a dict of inputs (arrays or Vars) to a scalar.
    """
    tape = Tape()
    leaves = {k: tape.leaf(v, k) for k, v in arrays.items()}
    grads = tape.backward(fn(leaves))
    return {k: relative_error(grads[leaf], numerical_gradient(fn, arrays, k, h))
            for k, leaf in leaves.items()}


def check_model_gradients(loss_fn: Callable, model, h=1e-6) -> dict:
    """Like :func:`check_gradients`, over every parameter of a model tree."""
    arrays = named_parameters(model)
    return check_gradients(lambda bound: loss_fn(with_parameters(model, bound)), arrays, h)


# ---------------------------------------------------------------- probes

def _weights(rng, shape):
    return rng.uniform(-1, 1, size=shape)


def _project(out, w):
    """Random linear functional to reduce a matrix output to a scalar."""
    return ad.sum_all(ad.hadamard(out, w))


def random_graph(rng, n=10, p=0.4, features=3) -> Graph:
    """Connected random graph: a ring backbone plus random chords."""
    a = np.triu(rng.random((n, n)) < p, 1)
    idx = np.arange(n)
    a[np.minimum(idx, (idx + 1) % n), np.maximum(idx, (idx + 1) % n)] = True
    a = a | a.T
    np.fill_diagonal(a, False)
    adjacency = SparseMatrix.from_dense(a.astype(float), symmetric=True)
    return Graph(adjacency, rng.uniform(-1, 1, size=(n, features)))


def random_stochastic(rng, n, k):
    s = rng.random((n, k)) + 0.05
    return s / s.sum(axis=1, keepdims=True)


def _elementwise(op, low=-1.0, high=1.0, away_from_zero=False):
    def make(rng):
        x = rng.uniform(low, high, size=(4, 3))
        if away_from_zero:
            x = np.where(np.abs(x) < 0.05, 0.05 * np.sign(x + 1e-300), x)
        w = _weights(rng, (4, 3))
        return (lambda v: _project(op(v["x"]), w)), {"x": x}
    return make


def _binary(op, shape_a=(4, 3), shape_b=(4, 3), positive_b=False):
    def make(rng):
        a = rng.uniform(-1, 1, size=shape_a)
        b = rng.uniform(0.5, 1.5, size=shape_b) if positive_b else rng.uniform(-1, 1, size=shape_b)
        w = _weights(rng, np.broadcast_shapes(shape_a, shape_b))
        return (lambda v: _project(op(v["a"], v["b"]), w)), {"a": a, "b": b}
    return make


def _case_matmul(rng):
    w = _weights(rng, (3, 2))
    return (lambda v: _project(ad.matmul(v["a"], v["b"]), w)), {
        "a": rng.uniform(-1, 1, (3, 4)), "b": rng.uniform(-1, 1, (4, 2))}


def _case_spmm(rng):
    dense = np.where(rng.random((6, 6)) < 0.3, rng.uniform(-1, 1, (6, 6)), 0.0)
    s = SparseMatrix.from_dense(dense)
    w = _weights(rng, (6, 2))
    return (lambda v: _project(ad.spmm(s, v["b"]), w)), {"b": rng.uniform(-1, 1, (6, 2))}


def _case_transpose(rng):
    w = _weights(rng, (3, 4))
    return (lambda v: _project(ad.transpose(v["m"]), w)), {"m": rng.uniform(-1, 1, (4, 3))}


def _case_scale(rng):
    w = _weights(rng, (4, 3))
    return (lambda v: _project(ad.scale(v["m"], v["c"]), w)), {
        "m": rng.uniform(-1, 1, (4, 3)), "c": np.array(rng.uniform(0.5, 2))}


def _case_trace(rng):
    return (lambda v: ad.trace(v["m"])), {"m": rng.uniform(-1, 1, (5, 5))}


def _case_frobenius(rng):
    return (lambda v: ad.frobenius_norm(v["m"])), {"m": rng.uniform(-1, 1, (4, 3))}


def _case_inverse(rng):
    m = rng.uniform(-1, 1, (3, 3)) + 3 * np.eye(3)
    w = _weights(rng, (3, 3))
    return (lambda v: _project(ad.inverse(v["m"]), w)), {"m": m}


def _case_softmax_temperature(rng):
    w = _weights(rng, (4, 3))
    return (lambda v: _project(ad.softmax_rows_with_temperature(v["x"], 0.5), w)), {
        "x": rng.uniform(-1, 1, (4, 3))}


def _case_reduction(op, shape_out):
    def make(rng):
        w = _weights(rng, shape_out)
        return (lambda v: _project(op(v["m"]), w)), {"m": rng.uniform(-1, 1, (4, 3))}
    return make


def _case_gather(rng):
    idx = np.array([0, 2, 2, 3])
    w = _weights(rng, (4, 3))
    return (lambda v: _project(ad.gather_rows(v["m"], idx), w)), {"m": rng.uniform(-1, 1, (4, 3))}


def _case_scatter(rng):
    idx = np.array([4, 0, 2])
    w = _weights(rng, (5, 3))
    return (lambda v: _project(ad.scatter_rows(v["m"], idx, 5), w)), {"m": rng.uniform(-1, 1, (3, 3))}


def _case_zero_diagonal(rng):
    w = _weights(rng, (4, 4))
    return (lambda v: _project(ad.zero_diagonal(v["m"]), w)), {"m": rng.uniform(-1, 1, (4, 4))}


def _case_cut_loss(rng):
    na = normalize_adjacency(random_graph(rng))
    return (lambda v: cut_loss(v["s"], na)), {"s": random_stochastic(rng, 10, 3)}


def _case_cut_loss_dense(rng):
    """Cut loss through a taped dense adjacency (the pooled-graph path)."""
    a = normalize_adjacency(random_graph(rng)).dense
    return (lambda v: cut_loss(v["s"], v["a"])), {"s": random_stochastic(rng, 10, 3), "a": a}


def _case_ortho_loss(rng):
    return (lambda v: ortho_loss(v["s"])), {"s": random_stochastic(rng, 10, 3)}


def _case_ratio_trace(rng):
    g = random_graph(rng)
    return (lambda v: cut_loss_ratio_trace(v["s"], g.adjacency)), {"s": random_stochastic(rng, 10, 3)}


def _case_coarsen(rng):
    na = normalize_adjacency(random_graph(rng))
    w1, w2, w3 = _weights(rng, (3, 3)), _weights(rng, (3, 3)), _weights(rng, (3, 2))

    def fn(v):
        pooled = coarsen(v["s"], na, v["x"])
        return ad.add(ad.add(_project(pooled.a_pool, w1), _project(pooled.a_tilde_pool, w2)),
                      _project(pooled.x_pool, w3))
    return fn, {"s": random_stochastic(rng, 10, 3), "x": rng.uniform(-1, 1, (10, 2))}


def _case_unpool(rng):
    w1, w2 = _weights(rng, (10, 2)), _weights(rng, (10, 10))

    def fn(v):
        x_rec, a_rec = unpool(v["s"], v["xp"], v["ap"])
        return ad.add(_project(x_rec, w1), _project(a_rec, w2))
    ap = rng.uniform(0, 1, (3, 3))
    return fn, {"s": random_stochastic(rng, 10, 3), "xp": rng.uniform(-1, 1, (3, 2)), "ap": ap + ap.T}


def _case_topk(rng):
    g = random_graph(rng)
    na = normalize_adjacency(g)
    x = g.features
    w = _weights(rng, (4, 3))

    def fn(v):
        xp, _, _, _ = topk_pool(v["x"], na, TopKParams(v["p"]), 4)
        return _project(xp, w)
    return fn, {"x": x, "p": rng.uniform(-1, 1, (3, 1))}


def _case_diffpool(rng):
    g = random_graph(rng)
    na = normalize_adjacency(g)
    params = DiffPoolParams.init(rng, 3, 3, 4)

    def loss(p):
        s, z = diffpool_assign(g.features, na, p, "elu")
        link, ent = diffpool_losses(s, na)
        return ad.add(ad.add(link, ent), ad.sum_all(ad.matmul(ad.transpose(s), z)))
    return ("model", loss, params)


def _case_unsupervised(rng):
    g = random_graph(rng)
    na = normalize_adjacency(g)
    model = PoolModel.init(3, 3, rng, gnn_units=(5,), mlp_hidden=(4,))
    return ("model", lambda m: unsupervised_loss(compute_assignments(g.features, na, m), na), model)


CASES = {
    "matmul": _case_matmul,
    "spmm": _case_spmm,
    "transpose": _case_transpose,
    "add": _binary(ad.add),
    "add_row_broadcast": _binary(ad.add, shape_b=(1, 3)),
    "subtract": _binary(ad.subtract),
    "scale": _case_scale,
    "hadamard": _binary(ad.hadamard),
    "hadamard_col_broadcast": _binary(ad.hadamard, shape_b=(4, 1)),
    "divide": _binary(ad.divide, positive_b=True),
    "trace": _case_trace,
    "frobenius_norm": _case_frobenius,
    "inverse": _case_inverse,
    "relu": _elementwise(ad.relu, away_from_zero=True),
    "elu": _elementwise(ad.elu, away_from_zero=True),
    "tanh": _elementwise(ad.tanh),
    "exp": _elementwise(ad.exp),
    "log": _elementwise(ad.log, 0.2, 2.0),
    "inv_sqrt_safe": _elementwise(ad.inv_sqrt_safe, 0.2, 2.0),
    "softmax_rows": _elementwise(ad.softmax_rows),
    "softmax_rows_with_temperature": _case_softmax_temperature,
    "log_softmax_rows": _elementwise(ad.log_softmax_rows),
    "sum_all": _case_reduction(ad.sum_all, ()),
    "mean_all": _case_reduction(ad.mean_all, ()),
    "row_sums": _case_reduction(ad.row_sums, (4, 1)),
    "col_means": _case_reduction(ad.col_means, (1, 3)),
    "zero_diagonal": _case_zero_diagonal,
    "gather_rows": _case_gather,
    "scatter_rows": _case_scatter,
    "cut_loss": _case_cut_loss,
    "cut_loss_dense_adjacency": _case_cut_loss_dense,
    "ortho_loss": _case_ortho_loss,
    "cut_loss_ratio_trace": _case_ratio_trace,
    "coarsen": _case_coarsen,
    "unpool": _case_unpool,
    "topk_pool": _case_topk,
    "diffpool": _case_diffpool,
    "unsupervised_loss_model": _case_unsupervised,
}


def run_case(name, seed, h=1e-6) -> float:
    """Worst relative error over the inputs of one probe."""
    rng = np.random.default_rng(seed)
    made = CASES[name](rng)
    if made[0] == "model":
        _, loss_fn, model = made
        errors = check_model_gradients(loss_fn, model, h)
    else:
        fn, arrays = made
        errors = check_gradients(fn, arrays, h)
    return max(errors.values())


def run_all(seed=0, h=1e-6) -> dict:
    return {name: run_case(name, seed, h) for name in CASES}
