"""Adam, training reports, and the three task drivers: unsupervised node
clustering, graph autoencoding, and graph classification."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, value
from .baselines import (DiffPoolParams, TopKParams, diffpool_assign, diffpool_losses, topk_pool,
                        topk_unpool)
from .errors import ParameterError
from .graph import Graph, generate_community_graph, normalize_adjacency, structural_features
from .metrics import accuracy, mse, nmi
from .mincut import (MlpParams, MpLayerParams, PoolModel, SoftAssignment, coarsen,
                     compute_assignments, cut_loss, mlp_forward, mp_forward, ortho_loss, unpool)
from .params import bind, glorot_uniform, named_parameters, with_parameters


class Adam:
    """Bias-corrected Adam over a dict of named arrays."""

    def __init__(self, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict) -> dict:
        """Return updated copies of ``params``."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        out = {}
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            out[name] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _step_grads(model, loss_fn):
    """Evaluate ``loss_fn(live_model)`` on a fresh tape.

    Returns ``(outputs, grads)``; ``loss_fn`` returns the loss Var first,
    followed by anything else the caller wants back.
    """
    tape = Tape()
    live, leaves = bind(model, tape)
    outputs = loss_fn(live)
    loss = outputs[0] if isinstance(outputs, tuple) else outputs
    grads = tape.backward(loss)
    return outputs, {name: grads[leaf] for name, leaf in leaves.items()}


# ---------------------------------------------------------------- reports

@dataclass
class IterationRecord:
    iteration: int
    l_c: float | None = None
    l_o: float | None = None
    l_u: float | None = None
    task_loss: float | None = None
    nmi: float | None = None
    seconds: float = 0.0


REPORT_COLUMNS = ["iter", "l_c", "l_o", "l_u", "task_loss", "nmi", "seconds"]


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def last(self) -> IterationRecord:
        return self.records[-1]

    def column(self, name):
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records])

    def rows(self):
        for r in self.records:
            d = asdict(r)
            d["iter"] = d.pop("iteration")
            yield ["" if d[c] is None else d[c] for c in REPORT_COLUMNS]

    def to_csv(self) -> str:
        """One row per iteration; ``meta`` entries become leading ``# key=value`` lines."""
        buf = io.StringIO()
        for key, val in self.meta.items():
            buf.write(f"# {key}={val}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        writer.writerows(self.rows())
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).write_text(self.to_csv(), encoding="utf-8")


# ---------------------------------------------------------------- clustering

@dataclass
class ClusteringConfig:
    k: int
    gnn_units: tuple = (16,)
    mlp_hidden: tuple = (16,)
    gnn_activation: str = "elu"
    mlp_activation: str = "linear"
    lr: float = 5e-4
    temperature: float = 1.0
    early_stop_patience: int | None = 500  # None disables early stopping
    early_stop_tol: float = 1e-6

    def __post_init__(self):
        if self.k < 2:
            raise ParameterError(f"k must be at least 2, got {self.k}")


def train_clustering(g: Graph, config: ClusteringConfig, iterations=10000, seed=None):
    """Full-graph Adam on the unsupervised minCUT + orthogonality loss.

    Returns ``(model, assignment, report)``.  Training stops early when the
    loss has not improved by ``early_stop_tol`` for ``early_stop_patience``
    iterations.
    """
    if iterations < 1:
        raise ParameterError("iterations must be at least 1")
    rng = _rng(seed)
    na = normalize_adjacency(g)
    x = g.features
    model = PoolModel.init(x.shape[1], config.k, rng, config.gnn_units, config.mlp_hidden,
                           config.gnn_activation, config.mlp_activation, config.temperature)
    opt = Adam(config.lr)
    report = TrainReport(meta={"iterations": iterations, "lr": config.lr})
    start = time.perf_counter()
    best, since_best = math.inf, 0

    def loss_fn(live):
        s = compute_assignments(x, na, live)
        l_c, l_o = cut_loss(s, na), ortho_loss(s)
        return ad.add(l_c, l_o), l_c, l_o, s

    for it in range(iterations):
        (l_u, l_c, l_o, s), grads = _step_grads(model, loss_fn)
        score = None if g.labels is None else nmi(np.argmax(value(s), axis=1), g.labels)
        report.records.append(IterationRecord(it, float(value(l_c)), float(value(l_o)),
                                              float(value(l_u)), None, score,
                                              time.perf_counter() - start))
        model = with_parameters(model, opt.step(named_parameters(model), grads))
        if config.early_stop_patience:
            if float(value(l_u)) < best - config.early_stop_tol:
                best, since_best = float(value(l_u)), 0
            else:
                since_best += 1
                if since_best >= config.early_stop_patience:
                    break
    assignment = SoftAssignment(compute_assignments(x, na, model))
    return model, assignment, report


def train_diffpool_clustering(g: Graph, k, iterations=2000, seed=None, lr=5e-3, hidden=16,
                              link_weight=1.0, entropy_weight=1.0):
    """Unsupervised DiffPool assignments trained on its link + entropy losses.

    Returns ``(params, assignment, report)``; the weighted auxiliary loss is
    logged as ``task_loss``.
    """
    if k < 2:
        raise ParameterError(f"k must be at least 2, got {k}")
    if iterations < 1:
        raise ParameterError("iterations must be at least 1")
    rng = _rng(seed)
    na = normalize_adjacency(g)
    x = g.features
    params = DiffPoolParams.init(rng, x.shape[1], k, hidden)
    opt = Adam(lr)
    report = TrainReport(meta={"iterations": iterations, "lr": lr, "link_weight": link_weight,
                               "entropy_weight": entropy_weight})
    start = time.perf_counter()

    def loss_fn(live):
        s, _ = diffpool_assign(x, na, live)
        link, entropy = diffpool_losses(s, na)
        return ad.add(ad.scale(link, link_weight), ad.scale(entropy, entropy_weight)), s

    for it in range(iterations):
        (loss, s), grads = _step_grads(params, loss_fn)
        score = None if g.labels is None else nmi(np.argmax(value(s), axis=1), g.labels)
        report.records.append(IterationRecord(it, None, None, None, float(value(loss)), score,
                                              time.perf_counter() - start))
        params = with_parameters(params, opt.step(named_parameters(params), grads))
    s, _ = diffpool_assign(x, na, params)
    return params, SoftAssignment(s), report


# ---------------------------------------------------------------- autoencoder

POOL_KINDS = ("mincut", "diffpool", "topk", "none")


@dataclass(frozen=True, eq=False)
class AutoencoderModel:
    """MP -> pool -> unpool -> MP -> linear readout."""

    encoder: MpLayerParams
    pool: object  # MlpParams | DiffPoolParams | TopKParams | None
    decoder: MpLayerParams
    readout: tuple  # (weight, bias)
    kind: str
    k: int


def init_autoencoder(kind, f_in, k, hidden=16, seed=None) -> AutoencoderModel:
    if kind not in POOL_KINDS:
        raise ParameterError(f"unknown pool kind {kind!r}; choose from {POOL_KINDS}")
    rng = _rng(seed)
    encoder = MpLayerParams.init(rng, f_in, hidden)
    pool = {
        "mincut": lambda: MlpParams.init(rng, [hidden, hidden, k]),
        "diffpool": lambda: DiffPoolParams.init(rng, hidden, k, hidden),
        "topk": lambda: TopKParams.init(rng, hidden),
        "none": lambda: None,
    }[kind]()
    decoder = MpLayerParams.init(rng, hidden, hidden)
    readout = (glorot_uniform(rng, hidden, f_in), np.zeros((1, f_in)))
    return AutoencoderModel(encoder, pool, decoder, readout, kind, k)


def autoencoder_forward(model: AutoencoderModel, x, na, link_weight=1.0, entropy_weight=1.0):
    """Returns ``(reconstruction, aux_loss, extras)``.

    ``aux_loss`` is the pooling method's own regularizer (0.0 for Top-K and
    identity); ``extras`` holds the minCUT terms when available.
    """
    h = mp_forward(x, na, model.encoder, "elu")
    aux, extras = 0.0, {}
    if model.kind == "mincut":
        s = mlp_forward(h, model.pool)
        pooled = coarsen(s, na, h)
        h, _ = unpool(s, pooled.x_pool, pooled.a_pool)
        l_c, l_o = cut_loss(s, na), ortho_loss(s)
        aux = ad.add(l_c, l_o)
        extras = {"l_c": l_c, "l_o": l_o, "l_u": aux}
    elif model.kind == "diffpool":
        s, z = diffpool_assign(h, na, model.pool, "elu")
        x_pool = ad.matmul(ad.transpose(s), z)
        h = ad.matmul(s, x_pool)
        link, entropy = diffpool_losses(s, na)
        aux = ad.add(ad.scale(link, link_weight), ad.scale(entropy, entropy_weight))
    elif model.kind == "topk":
        x_pooled, _, kept, _ = topk_pool(h, na, model.pool, model.k)
        h = topk_unpool(kept, x_pooled, na.n)
    h = mp_forward(h, na, model.decoder, "elu")
    w, b = model.readout
    return ad.add(ad.matmul(h, w), b), aux, extras


def train_autoencoder(g: Graph, kind="mincut", keep_ratio=0.25, iterations=2000, seed=None,
                      lr=5e-3, hidden=16, link_weight=1.0, entropy_weight=1.0):
    """Train the graph autoencoder on ``g.features``.

    Returns ``(model, reconstruction, final_mse, report)``.  The loss is the
    mean squared reconstruction error plus the pooling method's auxiliary
    loss.
    """
    if not 0 < keep_ratio <= 1:
        raise ParameterError(f"keep_ratio must lie in (0, 1], got {keep_ratio}")
    if iterations < 1:
        raise ParameterError("iterations must be at least 1")
    na = normalize_adjacency(g)
    x = g.features
    k = max(1, int(round(keep_ratio * g.n)))
    model = init_autoencoder(kind, x.shape[1], k, hidden, seed)
    opt = Adam(lr)
    report = TrainReport(meta={"kind": kind, "k": k, "iterations": iterations, "lr": lr})
    start = time.perf_counter()

    def loss_fn(live):
        rec, aux, extras = autoencoder_forward(live, x, na, link_weight, entropy_weight)
        err = ad.mean_all(ad.hadamard(ad.subtract(rec, x), ad.subtract(rec, x)))
        return ad.add(err, aux), err, extras

    for it in range(iterations):
        (_, err, extras), grads = _step_grads(model, loss_fn)
        terms = {name: float(value(v)) for name, v in extras.items()}
        report.records.append(IterationRecord(it, terms.get("l_c"), terms.get("l_o"), terms.get("l_u"),
                                              float(value(err)), None, time.perf_counter() - start))
        model = with_parameters(model, opt.step(named_parameters(model), grads))
    rec, _, _ = autoencoder_forward(model, x, na)
    return model, rec, mse(rec, x), report


# ---------------------------------------------------------------- classification

@dataclass(frozen=True, eq=False)
class ClassifierModel:
    """MP -> [MinCutPool] -> MP -> global average pool -> dense softmax."""

    mp1: MpLayerParams
    pool: object  # MlpParams or None
    mp2: MpLayerParams
    dense: tuple  # (weight, bias)
    k: int


@dataclass
class ClassifierConfig:
    method: str = "mincut"  # "mincut" or "none"
    k: int = 12
    hidden: int = 16
    lr: float = 5e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 50
    l2: float = 1e-4

    def __post_init__(self):
        if self.method not in ("mincut", "none"):
            raise ParameterError(f"unknown classifier pooling {self.method!r}")


def init_classifier(config: ClassifierConfig, f_in, n_classes, seed=None) -> ClassifierModel:
    rng = _rng(seed)
    h = config.hidden
    mp1 = MpLayerParams.init(rng, f_in, h)
    pool = MlpParams.init(rng, [h, h, config.k]) if config.method == "mincut" else None
    mp2 = MpLayerParams.init(rng, h, h)
    dense = (glorot_uniform(rng, h, n_classes), np.zeros((1, n_classes)))
    return ClassifierModel(mp1, pool, mp2, dense, config.k)


def classifier_forward(model: ClassifierModel, x, na):
    """Returns ``(log_probs (1 x C), l_u or 0.0)``."""
    h = mp_forward(x, na, model.mp1, "relu")
    aux = 0.0
    a = na
    if model.pool is not None:
        s = mlp_forward(h, model.pool)
        pooled = coarsen(s, na, h)
        aux = ad.add(cut_loss(s, na), ortho_loss(s))
        h, a = pooled.x_pool, pooled.a_tilde_pool
    h = mp_forward(h, a, model.mp2, "relu")
    w, b = model.dense
    logits = ad.add(ad.matmul(ad.col_means(h), w), b)
    return ad.log_softmax_rows(logits), aux


def _log_probs(model, graphs, cache=None):
    cache = cache or {}
    out = []
    for g in graphs:
        na = cache.get(id(g)) or normalize_adjacency(g)
        out.append(value(classifier_forward(model, g.features, na)[0])[0])
    return np.array(out)


def predict(model: ClassifierModel, graphs, cache=None):
    """Most probable class per graph."""
    return np.argmax(_log_probs(model, graphs, cache), axis=1)


def evaluate_classifier(model, graphs, cache=None):
    """``(accuracy, mean cross-entropy)`` against ``graph_label``."""
    log_probs = _log_probs(model, graphs, cache)
    truth = np.array([g.graph_label for g in graphs])
    return accuracy(np.argmax(log_probs, axis=1), truth), float(-log_probs[np.arange(len(truth)), truth].mean())


def _weight_names(model):
    """Names of weight matrices subject to the L2 penalty.

    Biases are always the second entry of a ``(weight, bias)`` pair.
    """
    return [n for n in named_parameters(model) if not n.endswith(".1")]


def train_classifier(train_graphs, val_graphs, config: ClassifierConfig, seed=None):
    """Mini-batch Adam on cross-entropy + unsupervised pooling loss + L2.

    Per-graph forward/backward passes are averaged over each batch.  The
    parameters with the best validation accuracy are returned, and training
    stops after ``config.patience`` epochs without improvement.
    Returns ``(model, report)``; ``report.meta`` carries the accuracies.
    """
    rng = _rng(seed)
    labels = np.array([g.graph_label for g in train_graphs])
    n_classes = int(max(labels.max(), max((g.graph_label for g in val_graphs), default=0))) + 1
    model = init_classifier(config, train_graphs[0].features.shape[1], max(n_classes, 2), rng)
    cache = {id(g): normalize_adjacency(g) for g in [*train_graphs, *val_graphs]}
    weights = _weight_names(model)
    opt = Adam(config.lr)
    report = TrainReport(meta={"method": config.method, "patience": config.patience,
                               "max_epochs": config.max_epochs})
    start = time.perf_counter()
    best_acc, best_ce, best_model, since_best = -1.0, math.inf, model, 0

    def graph_loss(live, g):
        log_probs, aux = classifier_forward(live, g.features, cache[id(g)])
        ce = ad.scale(ad.gather_rows(ad.transpose(log_probs), [g.graph_label]), -1.0)
        ce = ad.sum_all(ce)
        return ad.add(ce, aux), ce, aux

    for epoch in range(config.max_epochs):
        order = rng.permutation(len(train_graphs))
        task_total, lu_total = 0.0, 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = [train_graphs[i] for i in order[lo:lo + config.batch_size]]
            params = named_parameters(model)
            total = {name: np.zeros_like(p) for name, p in params.items()}
            for g in batch:
                (loss, ce, aux), grads = _step_grads(model, lambda live: graph_loss(live, g))
                if not math.isfinite(float(value(loss))):
                    raise ArithmeticError("non-finite training loss")
                task_total += float(value(ce))
                lu_total += float(value(aux))
                for name in total:
                    total[name] += grads[name]
            for name in total:
                total[name] /= len(batch)
            for name in weights:
                total[name] += 2 * config.l2 * params[name]
            model = with_parameters(model, opt.step(params, total))
        val_acc, val_ce = evaluate_classifier(model, val_graphs, cache)
        n = len(train_graphs)
        report.records.append(IterationRecord(epoch, None, None,
                                              lu_total / n if config.method == "mincut" else None,
                                              task_total / n, None, time.perf_counter() - start))
        # Higher validation accuracy wins; ties go to lower validation loss.
        if (val_acc, -val_ce) > (best_acc, -best_ce):
            best_acc, best_ce, best_model, since_best = val_acc, val_ce, model, 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    report.meta["best_val_accuracy"] = best_acc
    report.meta["best_val_loss"] = best_ce
    return best_model, report


def make_sbm_classification_task(n_graphs, seed=None, nodes=36, p_in=(0.6, 0.7), p_out=0.05):
    """Graphs with 2 or 3 planted communities; label 0 for 2, 1 for 3.

    Node features are (degree / n, clustering coefficient).
    """
    rng = _rng(seed)
    graphs = []
    for i in range(n_graphs):
        k = 2 + (i % 2)
        g = generate_community_graph(k, nodes // k, rng.uniform(*p_in), p_out, rng)
        graphs.append(Graph(g.adjacency, structural_features(g), g.labels, k - 2))
    order = rng.permutation(n_graphs)
    return [graphs[i] for i in order]
