"""Command-line entry point: ``mincutpool {cluster,autoencode,classify,gradcheck}``.

Each run writes machine-readable results (CSV/JSON) into ``--out`` plus a
``config.json`` echo of the resolved configuration.  Exit codes: 0 success,
1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import gradcheck
from .errors import MincutError, ParameterError
from .graph import Graph, load_citation_network, load_graph, normalize_adjacency, parse_generator
from .metrics import completeness_score, nmi
from .mincut import losses
from .spectral import spectral_clustering
from .training import (ClassifierConfig, ClusteringConfig, evaluate_classifier,
                       make_sbm_classification_task, train_autoencoder, train_classifier,
                       train_clustering, train_diffpool_clustering)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

NMI_NOTE = ("# note: NMI = I(pred; truth) / sqrt(H(pred) * H(truth)), natural log "
            "(geometric-mean normalization)")

CLUSTER_METHODS = ("mincut", "spectral", "diffpool")
AUTOENCODE_METHODS = ("mincut", "diffpool", "topk", "none")
CLASSIFY_METHODS = ("mincut", "none")
METRIC_KEYS = ("method", "k", "seed", "nmi", "cs", "l_c", "l_o", "l_u", "mse", "accuracy", "seconds")


class ConfigError(Exception):
    """Invalid command-line configuration (exit code 2)."""


@dataclass
class ExperimentConfig:
    subcommand: str
    method: str
    seed: int
    out: str
    generator: str | None = None
    graph: str | None = None
    cites: str | None = None
    k: int | None = None
    iterations: int | None = None
    lr: float | None = None
    temperature: float = 1.0
    keep_ratio: float = 0.25
    link_weight: float = 1.0
    entropy_weight: float = 1.0
    eigensolver: str = "auto"
    early_stop: bool = True
    task: str = "sbm23"
    n_graphs: int = 300
    folds: int = 1
    epochs: int = 100
    h: float = 1e-6
    plot: bool = False

    def validate(self):
        if self.k is not None and self.k < 2:
            raise ConfigError(f"--k must be at least 2, got {self.k}")
        if self.iterations is not None and self.iterations < 1:
            raise ConfigError(f"--iterations must be at least 1, got {self.iterations}")
        if self.lr is not None and not self.lr > 0:
            raise ConfigError(f"--lr must be positive, got {self.lr}")
        if not self.temperature > 0:
            raise ConfigError(f"--temperature must be positive, got {self.temperature}")
        if not 0 < self.keep_ratio <= 1:
            raise ConfigError(f"--keep-ratio must lie in (0, 1], got {self.keep_ratio}")
        if self.generator and self.graph:
            raise ConfigError("use either --generator or --graph, not both")
        if self.folds < 1:
            raise ConfigError("--folds must be at least 1")


# ---------------------------------------------------------------- output helpers

def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, data):
    write_atomic(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows, comments=()):
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    write_atomic(path, buf.getvalue())


def write_report(path, report):
    write_atomic(path, report.to_csv())


def metrics_record(config, **values):
    record = {key: None for key in METRIC_KEYS}
    record.update(method=config.method, k=config.k, seed=config.seed)
    for key, val in values.items():
        if key not in record:
            raise KeyError(key)
        record[key] = None if val is None else (val if isinstance(val, (int, str)) else float(val))
    return record


def _maybe_plot(config, fn, *args):
    if not config.plot:
        return
    from . import plotting
    path = getattr(plotting, fn)(*args)
    print(f"wrote {path}")


# ---------------------------------------------------------------- graph loading

def load_input_graph(config, default_generator) -> Graph:
    if config.graph:
        path = Path(config.graph)
        if not path.exists():
            raise ConfigError(f"graph file not found: {path}")
        if path.suffix == ".json":
            return load_graph(path)
        return load_citation_network(path, config.cites)
    text = config.generator or default_generator
    config.generator = text
    try:
        return parse_generator(text, config.seed)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------- subcommands

def cmd_cluster(config: ExperimentConfig) -> int:
    if config.method not in CLUSTER_METHODS:
        raise ConfigError(f"cluster supports --method {', '.join(CLUSTER_METHODS)}; got {config.method!r}")
    g = load_input_graph(config, "sbm")
    if config.k is None:
        if g.labels is None:
            raise ConfigError("--k is required for graphs without labels")
        config.k = int(len(np.unique(g.labels)))
    if config.k > g.n:
        raise ConfigError(f"--k {config.k} exceeds the {g.n} nodes")
    out = Path(config.out)
    start = time.perf_counter()
    report, l_terms = None, {}
    if config.method == "spectral":
        labels = spectral_clustering(g, config.k, config.seed, config.eigensolver).labels
    elif config.method == "mincut":
        config.iterations = config.iterations or 10000
        config.lr = config.lr or 5e-4
        cc = ClusteringConfig(config.k, lr=config.lr, temperature=config.temperature,
                              early_stop_patience=500 if config.early_stop else None)
        _, assignment, report = train_clustering(g, cc, config.iterations, config.seed)
        labels = assignment.hard_labels()
        l_c, l_o, l_u = losses(assignment.s, normalize_adjacency(g))
        l_terms = {"l_c": float(l_c), "l_o": float(l_o), "l_u": float(l_u)}
    else:
        config.iterations = config.iterations or 2000
        config.lr = config.lr or 5e-3
        _, assignment, report = train_diffpool_clustering(
            g, config.k, config.iterations, config.seed, config.lr,
            link_weight=config.link_weight, entropy_weight=config.entropy_weight)
        labels = assignment.hard_labels()
    seconds = time.perf_counter() - start

    score = cs = None
    if g.labels is not None:
        score, cs = nmi(labels, g.labels), completeness_score(labels, g.labels)
    write_config(config)
    write_csv(out / "assignments.csv", ["node_id", "cluster"], enumerate(labels.tolist()))
    if report is not None:
        write_report(out / "report.csv", report)
    write_json(out / "metrics.json", metrics_record(config, nmi=score, cs=cs, seconds=seconds, **l_terms))
    print(NMI_NOTE)
    print(f"method={config.method} k={config.k} nmi={_fmt(score)} cs={_fmt(cs)} seconds={seconds:.2f}")
    _maybe_plot(config, "plot_clusters", g, labels, out / "clusters.png", f"{config.method}, K={config.k}")
    if report is not None:
        _maybe_plot(config, "plot_training_curves", report, out / "training_curves.png")
    return EXIT_OK


def cmd_autoencode(config: ExperimentConfig) -> int:
    if config.method not in AUTOENCODE_METHODS:
        raise ConfigError(f"autoencode supports --method {', '.join(AUTOENCODE_METHODS)}; got {config.method!r}")
    g = load_input_graph(config, "grid:8x8")
    config.iterations = config.iterations or 2000
    config.lr = config.lr or 5e-3
    config.k = max(1, int(round(config.keep_ratio * g.n)))
    out = Path(config.out)
    start = time.perf_counter()
    _, x_rec, err, report = train_autoencoder(g, config.method, config.keep_ratio, config.iterations,
                                              config.seed, config.lr, link_weight=config.link_weight,
                                              entropy_weight=config.entropy_weight)
    seconds = time.perf_counter() - start
    x_rec = np.asarray(x_rec)
    f = g.features.shape[1]
    header = ["node_id", *(f"x{j}" for j in range(f)), *(f"rec{j}" for j in range(f))]
    rows = ([i, *g.features[i].tolist(), *x_rec[i].tolist()] for i in range(g.n))
    last = report.last
    write_config(config)
    write_csv(out / "reconstruction.csv", header, rows, comments=[f"mse={err!r}"])
    write_report(out / "report.csv", report)
    write_json(out / "metrics.json", metrics_record(config, mse=err, l_c=last.l_c, l_o=last.l_o,
                                                   l_u=last.l_u, seconds=seconds))
    print(f"method={config.method} kept={config.k} mse={err:.6g} seconds={seconds:.2f}")
    _maybe_plot(config, "plot_reconstruction", g, x_rec, out / "reconstruction.png",
                f"{config.method}, mse={err:.4g}")
    _maybe_plot(config, "plot_training_curves", report, out / "training_curves.png")
    return EXIT_OK


def _fold_splits(n, folds, rng):
    """Yield ``(train, val, test)`` index arrays.

    One fold: a 2/3, 1/6, 1/6 split.  Several folds: each fold is the test
    set once, and 10% of the remainder is held out for early stopping.
    """
    order = rng.permutation(n)
    if folds == 1:
        a, b = (2 * n) // 3, (5 * n) // 6
        yield order[:a], order[a:b], order[b:]
        return
    for test in np.array_split(order, folds):
        rest = np.setdiff1d(order, test, assume_unique=True)
        rest = rest[rng.permutation(len(rest))]
        n_val = max(1, len(rest) // 10)
        yield rest[n_val:], rest[:n_val], test


def cmd_classify(config: ExperimentConfig) -> int:
    if config.method not in CLASSIFY_METHODS:
        raise ConfigError(f"classify supports --method {', '.join(CLASSIFY_METHODS)}; got {config.method!r}")
    if config.task != "sbm23":
        raise ConfigError(f"unknown task {config.task!r}; available: sbm23")
    if config.n_graphs < 6:
        raise ConfigError("--n-graphs must be at least 6")
    if config.folds > config.n_graphs:
        raise ConfigError("--folds exceeds the number of graphs")
    config.lr = config.lr or 5e-3
    config.k = config.k or 12
    out = Path(config.out)
    rng = np.random.default_rng(config.seed)
    graphs = make_sbm_classification_task(config.n_graphs, rng)
    cc = ClassifierConfig(method=config.method, k=config.k, lr=config.lr, max_epochs=config.epochs)
    start = time.perf_counter()
    rows, reports = [], []
    for fold, (tr, va, te) in enumerate(_fold_splits(len(graphs), config.folds, rng)):
        model, report = train_classifier([graphs[i] for i in tr], [graphs[i] for i in va], cc, rng)
        test_acc, _ = evaluate_classifier(model, [graphs[i] for i in te])
        rows.append([fold, report.meta["best_val_accuracy"], test_acc, len(report)])
        reports.append(report)
        print(f"fold={fold} val_accuracy={report.meta['best_val_accuracy']:.4f} test_accuracy={test_acc:.4f}")
    seconds = time.perf_counter() - start
    mean_acc = float(np.mean([r[2] for r in rows]))
    write_config(config)
    write_csv(out / "accuracies.csv", ["fold", "val_accuracy", "test_accuracy", "epochs"], rows)
    if len(reports) == 1:
        write_report(out / "report.csv", reports[0])
    else:
        for fold, report in enumerate(reports):
            write_report(out / f"report_fold{fold}.csv", report)
    write_json(out / "metrics.json", metrics_record(config, accuracy=mean_acc, seconds=seconds))
    print(f"method={config.method} mean_test_accuracy={mean_acc:.4f} seconds={seconds:.2f}")
    _maybe_plot(config, "plot_training_curves", reports[0], out / "training_curves.png")
    return EXIT_OK


def cmd_gradcheck(config: ExperimentConfig) -> int:
    out = Path(config.out)
    errors = gradcheck.run_all(config.seed, config.h)
    write_config(config)
    write_csv(out / "gradcheck.csv", ["op", "max_relative_error"],
              ([name, repr(err)] for name, err in errors.items()))
    width = max(map(len, errors))
    failed = [name for name, err in errors.items() if not err < gradcheck.TOLERANCE]
    for name, err in errors.items():
        print(f"{name:<{width}}  {err:.3e}  {'FAIL' if name in failed else 'ok'}")
    print(f"{len(errors) - len(failed)}/{len(errors)} ops below {gradcheck.TOLERANCE:g}")
    return EXIT_RUNTIME if failed else EXIT_OK


COMMANDS = {"cluster": cmd_cluster, "autoencode": cmd_autoencode,
            "classify": cmd_classify, "gradcheck": cmd_gradcheck}


def write_config(config: ExperimentConfig):
    write_json(Path(config.out) / "config.json", asdict(config))


def _fmt(x):
    return "n/a" if x is None else f"{x:.4f}"


# ---------------------------------------------------------------- argument parsing

def _default_seed():
    raw = os.environ.get("MINCUT_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"MINCUT_SEED must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mincutpool",
        description="Graph pooling experiments: clustering, autoencoding, classification, gradient checks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, methods, default_method):
        p.add_argument("--seed", type=int, default=None, help="RNG seed (default: $MINCUT_SEED or 0)")
        p.add_argument("--out", default="out", help="output directory (created if missing)")
        if methods:
            p.add_argument("--method", default=default_method,
                           help=f"one of: {', '.join(methods)}")
        return p

    def source(p):
        p.add_argument("--generator", help="sbm[:KxM[:p_in:p_out]], grid:RxC or ring:N")
        p.add_argument("--graph", help="graph JSON file or citation .content file")
        p.add_argument("--cites", help="citation .cites file (default: next to .content)")
        p.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")

    c = common(sub.add_parser("cluster", help="unsupervised node clustering"), CLUSTER_METHODS, "mincut")
    source(c)
    c.add_argument("--k", type=int)
    c.add_argument("--iterations", type=int)
    c.add_argument("--lr", type=float)
    c.add_argument("--temperature", type=float, default=1.0)
    c.add_argument("--no-early-stop", dest="early_stop", action="store_false")
    c.add_argument("--eigensolver", choices=("auto", "jacobi", "lapack"), default="auto")
    c.add_argument("--link-weight", type=float, default=1.0)
    c.add_argument("--entropy-weight", type=float, default=1.0)

    a = common(sub.add_parser("autoencode", help="graph autoencoder on node coordinates"),
               AUTOENCODE_METHODS, "mincut")
    source(a)
    a.add_argument("--keep-ratio", type=float, default=0.25)
    a.add_argument("--iterations", type=int)
    a.add_argument("--lr", type=float)
    a.add_argument("--link-weight", type=float, default=1.0)
    a.add_argument("--entropy-weight", type=float, default=1.0)

    k = common(sub.add_parser("classify", help="graph classification on a generated task"),
               CLASSIFY_METHODS, "mincut")
    k.add_argument("--task", default="sbm23")
    k.add_argument("--k", type=int, help="pooled graph size (default 12)")
    k.add_argument("--lr", type=float)
    k.add_argument("--n-graphs", type=int, default=300)
    k.add_argument("--folds", type=int, default=1)
    k.add_argument("--epochs", type=int, default=100)
    k.add_argument("--plot", action="store_true")

    gc = common(sub.add_parser("gradcheck", help="finite-difference gradient check"), (), None)
    gc.add_argument("--h", type=float, default=1e-6)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        values = {k: v for k, v in vars(args).items() if k != "verbose"}
        values.setdefault("method", "gradcheck")
        if values.get("seed") is None:
            values["seed"] = _default_seed()
        config = ExperimentConfig(**values)
        config.validate()
        Path(config.out).mkdir(parents=True, exist_ok=True)
        return COMMANDS[config.subcommand](config)
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MincutError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
