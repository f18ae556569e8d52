"""Define-by-run reverse-mode automatic differentiation over float64 matrices.

A :class:`Tape` records every operation applied to its :class:`Var` objects.
Operations accept plain arrays as well; an operation whose inputs are all
plain arrays is evaluated eagerly and returns a plain array, so every
forward routine in the package works both with and without a tape.

Scalars are 0-d arrays.  Example::

    tape = Tape()
    w = tape.leaf(np.eye(2))
    loss = frobenius_norm(w) ** 2
    grads = tape.backward(loss)
    grads[w]            # 2 * w
"""

from __future__ import annotations

from collections import Counter
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError, NumericError, ParameterError, ShapeError
from .sparse import SparseMatrix


class Var:
    """A value recorded on a tape."""

    __slots__ = ("tape", "id", "value", "name")
    __array_ufunc__ = None  # make ndarray <op> Var defer to Var's reflected method

    def __init__(self, tape, id, value, name=None):
        self.tape = tape
        self.id = id
        self.value = value
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return hadamard(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __pow__(self, power):
        if power != 2:
            raise ParameterError("only squaring is supported")
        return hadamard(self, self)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var#{self.id}{label}(shape={self.value.shape})"


class Node(NamedTuple):
    out: int
    inputs: tuple
    backward: Callable


class Tape:
    """Append-only record of operations; confined to one thread and one step."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.leaves: list[Var] = []
        self.diagnostics: Counter = Counter()
        self._count = 0

    def _new_var(self, value, name=None):
        var = Var(self, self._count, value, name)
        self._count += 1
        return var

    def leaf(self, value, name=None) -> Var:
        value = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericError("leaf value contains NaN or Inf")
        var = self._new_var(value, name)
        self.leaves.append(var)
        return var

    def record(self, value, inputs, backward) -> Var:
        var = self._new_var(value)
        self.nodes.append(Node(var.id, tuple(inputs), backward))
        return var

    def backward(self, loss: Var) -> dict:
        """Gradient of a scalar ``loss`` with respect to every leaf.

        Leaves the loss does not depend on receive zero gradients.
        """
        if not isinstance(loss, Var) or loss.tape is not self:
            raise ContractError("loss must be a variable recorded on this tape")
        if loss.value.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")
        grads = {loss.id: np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            g = grads.get(node.out)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if isinstance(inp, Var) and gi is not None:
                    if inp.id in grads:
                        grads[inp.id] = grads[inp.id] + gi
                    else:
                        grads[inp.id] = gi
        return {leaf: grads.get(leaf.id, np.zeros_like(leaf.value)) for leaf in self.leaves}


def value(x):
    """Underlying array of a Var, or ``x`` itself as a float64 array."""
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _tape_of(inputs):
    tape = None
    for x in inputs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ContractError("operands belong to different tapes")
    return tape


def _out(result, inputs: Sequence, backward):
    if not np.all(np.isfinite(result)):
        raise NumericError("operation produced NaN or Inf")
    tape = _tape_of(inputs)
    if tape is None:
        return result
    return tape.record(result, inputs, backward)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_2d(name, m):
    if m.ndim != 2:
        raise ShapeError(f"{name} expects a matrix, got shape {m.shape}")


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    av, bv = value(a), value(b)
    _check_2d("matmul", av)
    _check_2d("matmul", bv)
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {av.shape} @ {bv.shape}")
    return _out(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def spmm(s: SparseMatrix, b):
    """Sparse-times-dense product; differentiable in ``b`` only."""
    bv = value(b)
    _check_2d("spmm", bv)
    if s.shape[1] != bv.shape[0]:
        raise ShapeError(f"spmm shape mismatch: {s.shape} @ {bv.shape}")
    st = s if s.symmetric else s.transpose()
    return _out(s.dot(bv), (b,), lambda g: (st.dot(g),))


def transpose(m):
    mv = value(m)
    _check_2d("transpose", mv)
    return _out(mv.T.copy(), (m,), lambda g: (g.T,))


def add(a, b):
    av, bv = value(a), value(b)
    try:
        out = av + bv
    except ValueError as exc:
        raise ShapeError(f"add shape mismatch: {av.shape} + {bv.shape}") from exc
    return _out(out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def subtract(a, b):
    av, bv = value(a), value(b)
    try:
        out = av - bv
    except ValueError as exc:
        raise ShapeError(f"subtract shape mismatch: {av.shape} - {bv.shape}") from exc
    return _out(out, (a, b), lambda g: (_unbroadcast(g, av.shape), -_unbroadcast(g, bv.shape)))


def scale(m, c):
    """``c * m`` where ``c`` is a float or a scalar Var."""
    mv, cv = value(m), value(c)
    if cv.size != 1:
        raise ShapeError(f"scale factor must be scalar, got shape {cv.shape}")
    cs = cv.reshape(())
    return _out(cs * mv, (m, c), lambda g: (g * cs, np.sum(g * mv).reshape(cv.shape)))


def hadamard(a, b):
    av, bv = value(a), value(b)
    try:
        out = av * bv
    except ValueError as exc:
        raise ShapeError(f"hadamard shape mismatch: {av.shape} * {bv.shape}") from exc
    return _out(out, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def divide(a, b):
    av, bv = value(a), value(b)
    try:
        out = av / bv
    except ValueError as exc:
        raise ShapeError(f"divide shape mismatch: {av.shape} / {bv.shape}") from exc
    return _out(out, (a, b), lambda g: (_unbroadcast(g / bv, av.shape),
                                        _unbroadcast(-g * av / (bv * bv), bv.shape)))


def trace(m):
    mv = value(m)
    _check_2d("trace", mv)
    if mv.shape[0] != mv.shape[1]:
        raise ShapeError(f"trace needs a square matrix, got {mv.shape}")
    n = mv.shape[0]
    return _out(np.array(np.trace(mv)), (m,), lambda g: (g * np.eye(n),))


def frobenius_norm(m):
    mv = value(m)
    norm = np.sqrt(np.sum(mv * mv))
    tape = _tape_of((m,))

    def backward(g):
        if norm == 0.0:
            tape.diagnostics["frobenius_norm_zero_gradient"] += 1
            return (np.zeros_like(mv),)
        return (g * mv / norm,)

    return _out(np.array(norm), (m,), backward)


def inverse(m):
    """Matrix inverse by Gauss-Jordan elimination with partial pivoting."""
    mv = value(m)
    inv = gauss_jordan_inverse(mv)
    return _out(inv, (m,), lambda g: (-(inv.T @ g @ inv.T),))


def gauss_jordan_inverse(m, tol=1e-12):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"inverse needs a square matrix, got {m.shape}")
    n = m.shape[0]
    aug = np.hstack([m, np.eye(n)])
    ref = max(np.abs(m).max(), 1.0) if n else 1.0
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[pivot, col]) <= tol * ref:
            raise DegenerateInputError("matrix is singular to working precision")
        if pivot != col:
            aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] /= aug[col, col]
        others = np.arange(n) != col
        aug[others] -= np.outer(aug[others, col], aug[col])
    return aug[:, n:]


# ---------------------------------------------------------------- elementwise

def relu(m):
    mv = value(m)
    mask = mv > 0
    return _out(np.where(mask, mv, 0.0), (m,), lambda g: (g * mask,))


def elu(m):
    mv = value(m)
    neg = np.expm1(np.minimum(mv, 0.0))
    out = np.where(mv > 0, mv, neg)
    return _out(out, (m,), lambda g: (g * np.where(mv > 0, 1.0, neg + 1.0),))


def tanh(m):
    out = np.tanh(value(m))
    return _out(out, (m,), lambda g: (g * (1.0 - out * out),))


def exp(m):
    with np.errstate(over="ignore"):
        out = np.exp(value(m))
    return _out(out, (m,), lambda g: (g * out,))


def log(m):
    mv = value(m)
    if np.any(mv <= 0):
        raise NumericError("log of a non-positive value")
    return _out(np.log(mv), (m,), lambda g: (g / mv,))


def inv_sqrt_safe(m):
    """Elementwise ``x ** -0.5`` with the convention ``0 -> 0`` (isolated nodes)."""
    mv = value(m)
    pos = mv > 0
    safe = np.where(pos, mv, 1.0)
    out = np.where(pos, safe ** -0.5, 0.0)
    return _out(out, (m,), lambda g: (np.where(pos, -0.5 * g * safe ** -1.5, 0.0),))


def identity(m):
    return m


ACTIVATIONS = {"relu": relu, "elu": elu, "tanh": tanh, "linear": identity}


def activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ParameterError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


# ---------------------------------------------------------------- softmax family

def softmax_rows(m):
    mv = value(m)
    _check_2d("softmax_rows", mv)
    z = np.exp(mv - mv.max(axis=1, keepdims=True))
    s = z / z.sum(axis=1, keepdims=True)
    return _out(s, (m,), lambda g: (s * (g - np.sum(g * s, axis=1, keepdims=True)),))


def softmax_rows_with_temperature(m, tau):
    if not tau > 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    if tau == 1:
        return softmax_rows(m)
    return softmax_rows(scale(m, 1.0 / tau))


def log_softmax_rows(m):
    mv = value(m)
    _check_2d("log_softmax_rows", mv)
    shifted = mv - mv.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    s = np.exp(out)
    return _out(out, (m,), lambda g: (g - s * g.sum(axis=1, keepdims=True),))


# ---------------------------------------------------------------- reductions and indexing

def sum_all(m):
    mv = value(m)
    return _out(np.array(mv.sum()), (m,), lambda g: (np.full(mv.shape, float(g)),))


def mean_all(m):
    mv = value(m)
    n = mv.size
    return _out(np.array(mv.mean()), (m,), lambda g: (np.full(mv.shape, float(g) / n),))


def row_sums(m):
    """N x F -> N x 1."""
    mv = value(m)
    _check_2d("row_sums", mv)
    return _out(mv.sum(axis=1, keepdims=True), (m,), lambda g: (np.broadcast_to(g, mv.shape).copy(),))


def col_means(m):
    """N x F -> 1 x F."""
    mv = value(m)
    _check_2d("col_means", mv)
    n = mv.shape[0]
    return _out(mv.mean(axis=0, keepdims=True), (m,),
                lambda g: (np.broadcast_to(g / n, mv.shape).copy(),))


def zero_diagonal(m):
    mv = value(m)
    _check_2d("zero_diagonal", mv)
    out = mv.copy()
    np.fill_diagonal(out, 0.0)

    def backward(g):
        g = g.copy()
        np.fill_diagonal(g, 0.0)
        return (g,)

    return _out(out, (m,), backward)


def gather_rows(m, index):
    mv = value(m)
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(mv)
        np.add.at(full, index, g)
        return (full,)

    return _out(mv[index].copy(), (m,), backward)


def scatter_rows(m, index, n_rows):
    """Place the rows of ``m`` at ``index`` in an ``n_rows``-row zero matrix."""
    mv = value(m)
    index = np.asarray(index, dtype=np.int64)
    if len(index) != mv.shape[0]:
        raise ShapeError(f"{len(index)} indices for {mv.shape[0]} rows")
    out = np.zeros((n_rows,) + mv.shape[1:])
    out[index] = mv
    return _out(out, (m,), lambda g: (g[index].copy(),))
