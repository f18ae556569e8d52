"""End-to-end acceptance checks, one test per numbered criterion.

Each test records PASS/FAIL/SKIP in ``conftest.ACCEPTANCE``; the summary is
printed at the end of the pytest run.
"""
import json
import math
import os
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from mincutpool import gradcheck
from mincutpool.graph import (Graph, generate_community_graph, generate_grid_graph, generate_ring_graph,
                              load_citation_network, normalize_adjacency)
from mincutpool.metrics import nmi
from mincutpool.mincut import (coarsen, cut_loss, cut_loss_ratio_trace, losses, ortho_loss, ratio_trace,
                               unsupervised_loss)
from mincutpool.sparse import SparseMatrix
from mincutpool.spectral import spectral_clustering, symmetric_eigendecomposition
from mincutpool.training import (ClassifierConfig, ClusteringConfig, evaluate_classifier,
                                 make_sbm_classification_task, train_autoencoder, train_classifier,
                                 train_clustering)

from conftest import ACCEPTANCE, graph_from_edges, one_hot, random_connected_graph, random_stochastic

pytestmark = pytest.mark.slow


@contextmanager
def criterion(number, title):
    box = {"detail": ""}
    try:
        yield box
    except pytest.skip.Exception as exc:
        ACCEPTANCE[number] = ("SKIP", title, str(exc))
        raise
    except BaseException as exc:
        first = (str(exc).strip().splitlines() or [""])[0]
        ACCEPTANCE[number] = ("FAIL", title, f"{box['detail']} {type(exc).__name__}: {first}".strip())
        print(f"criterion {number}: FAIL ({title})")
        raise
    ACCEPTANCE[number] = ("PASS", title, box["detail"])
    print(f"criterion {number}: PASS ({title}) {box['detail']}")


def na_of(n, edges):
    return normalize_adjacency(graph_from_edges(n, edges))


TWO_EDGES = [(0, 1), (2, 3)]
FOUR_CYCLE = [(0, 1), (1, 2), (2, 3), (3, 0)]


def test_criterion_01_gradients():
    with criterion(1, "gradient correctness") as box:
        start = time.perf_counter()
        worst, where = 0.0, None
        for seed in range(20):
            for name, err in gradcheck.run_all(seed).items():
                if not err <= worst:
                    worst, where = err, (name, seed)
        elapsed = time.perf_counter() - start
        box["detail"] = f"{len(gradcheck.CASES)} ops x 20 seeds, worst {worst:.2e} ({where[0]}), {elapsed:.1f}s"
        assert worst < gradcheck.TOLERANCE
        assert elapsed < 30


def random_pair(rng):
    n = int(rng.integers(2, 21))
    upper = np.triu(rng.random((n, n)) < rng.uniform(0.05, 0.9), 1)
    if not upper.any():
        upper[0, 1] = True
    weights = rng.uniform(0.05, 3.0, (n, n)) if rng.random() < 0.5 else np.ones((n, n))
    i, j = np.nonzero(upper)
    adj = SparseMatrix.from_edges(n, list(zip(i.tolist(), j.tolist(), weights[i, j].tolist())))
    k = int(rng.integers(1, min(n, 8) + 1))
    logits = rng.normal(scale=rng.uniform(0.1, 10.0), size=(n, k))
    s = np.exp(logits - logits.max(axis=1, keepdims=True))
    return Graph(adj, np.zeros((n, 1))), s / s.sum(axis=1, keepdims=True)


def test_criterion_02_loss_bounds():
    with criterion(2, "loss bounds") as box:
        rng = np.random.default_rng(2)
        start = time.perf_counter()
        lo_c, hi_c, lo_o, hi_o = math.inf, -math.inf, math.inf, -math.inf
        for _ in range(10_000):
            g, s = random_pair(rng)
            l_c, l_o, _ = losses(s, normalize_adjacency(g))
            lo_c, hi_c = min(lo_c, float(l_c)), max(hi_c, float(l_c))
            lo_o, hi_o = min(lo_o, float(l_o)), max(hi_o, float(l_o))
        elapsed = time.perf_counter() - start
        box["detail"] = f"L_c in [{lo_c:.6f}, {hi_c:.6f}], L_o in [{lo_o:.6f}, {hi_o:.6f}], {elapsed:.1f}s"
        assert -1 - 1e-9 <= lo_c and hi_c <= 1e-9
        assert -1e-9 <= lo_o and hi_o <= 2 + 1e-9
        assert elapsed < 60


def test_criterion_03_analytic_anchors():
    with criterion(3, "analytic loss anchors") as box:
        # independent numpy oracle for the orthogonality anchors
        def ortho_oracle(s):
            ss = s.T @ s
            return np.linalg.norm(ss / np.linalg.norm(ss) - np.eye(s.shape[1]) / np.sqrt(s.shape[1]))

        rank_one = math.sqrt((1 - 1 / math.sqrt(2)) ** 2 + 1 / 2)
        uniform = np.full((4, 2), 0.5)
        ring = normalize_adjacency(generate_ring_graph(7))
        cases = [
            ("cut: disconnected edges", cut_loss(one_hot([0, 0, 1, 1], 2), na_of(4, TWO_EDGES)), -1.0),
            ("cut: single edge, orthogonal", cut_loss(np.eye(2), na_of(2, [(0, 1)])), 0.0),
            ("cut: uniform on ring(7)", cut_loss(np.full((7, 3), 1 / 3), ring), -1.0),
            ("ortho: balanced one-hot", ortho_loss(one_hot([0, 0, 1, 1], 2)), 0.0),
            ("ortho: all in cluster 0", ortho_loss(one_hot([0, 0, 0, 0], 2)), rank_one),
            ("ortho: uniform K=2 N=4", ortho_loss(uniform), ortho_oracle(uniform)),
        ]
        errors = {name: abs(float(got) - want) for name, got, want in cases}
        box["detail"] = (f"max error {max(errors.values()):.1e}; uniform ortho anchor = "
                         f"{ortho_oracle(uniform):.4f} (rank-one S^T S, same as all-in-one-cluster)")
        for name, err in errors.items():
            assert err < 1e-10, name


def test_criterion_04_degenerate_minimum():
    with criterion(4, "degenerate minimum") as box:
        rng = np.random.default_rng(4)
        worst, smallest_lo = 0.0, math.inf
        for _ in range(50):
            n, k = int(rng.integers(3, 30)), int(rng.integers(2, 6))
            g = random_connected_graph(rng, n, p=float(rng.uniform(0, 0.6)), weighted=bool(rng.random() < 0.5))
            s = np.full((n, k), 1 / k)
            worst = max(worst, abs(float(cut_loss(s, normalize_adjacency(g))) + 1))
            smallest_lo = min(smallest_lo, float(ortho_loss(s)))
        box["detail"] = f"50 graphs, |L_c + 1| <= {worst:.1e}, min L_o = {smallest_lo:.4f}"
        assert worst < 1e-9
        assert smallest_lo > 0


def test_criterion_05_synthetic_clustering():
    with criterion(5, "synthetic clustering") as box:
        start = time.perf_counter()
        scores = []
        for seed in range(5):
            g = generate_community_graph(6, 20, 0.8, 0.02, seed=seed)
            _, assignment, _ = train_clustering(g, ClusteringConfig(6), iterations=3000, seed=seed)
            scores.append(nmi(assignment.hard_labels(), g.labels))
        elapsed = time.perf_counter() - start
        grid = generate_grid_graph(10, 10)
        _, assignment, _ = train_clustering(grid, ClusteringConfig(5), iterations=3000, seed=0)
        sizes = np.bincount(assignment.hard_labels(), minlength=5)
        ratio = sizes.max() / sizes.min() if sizes.min() > 0 else math.inf
        box["detail"] = (f"SBM NMI {[round(x, 3) for x in scores]} in {elapsed:.1f}s; "
                         f"grid sizes {sizes.tolist()} ratio {ratio:.2f}")
        assert sum(x >= 0.9 for x in scores) >= 3
        assert elapsed <= 120
        assert ratio <= 2


def test_criterion_06_spectral_sanity():
    with criterion(6, "spectral baseline sanity") as box:
        for k, size in [(2, 5), (3, 4), (4, 6), (6, 3)]:
            g = generate_community_graph(k, size, 1.0, 0.0, seed=k)
            assert nmi(spectral_clustering(g, k, seed=0).labels, g.labels) == 1.0
        rng = np.random.default_rng(6)
        worst = 0.0
        for _ in range(5):
            m = rng.normal(size=(50, 50))
            m = (m + m.T) / 2
            for method in ("jacobi", "lapack"):
                res = symmetric_eigendecomposition(m, method)
                v, lam = res.eigenvectors, res.eigenvalues
                worst = max(worst, np.abs(m @ v - v * lam).max(), np.abs(v @ np.diag(lam) @ v.T - m).max())
        box["detail"] = f"cliques NMI = 1; 50x50 max residual {worst:.1e}"
        assert worst < 1e-8


def test_criterion_07_cora():
    with criterion(7, "Cora reproduction") as box:
        content = os.environ.get("MINCUT_CORA_CONTENT")
        if not content:
            pytest.skip("set MINCUT_CORA_CONTENT (and optionally MINCUT_CORA_CITES) to run")
        start = time.perf_counter()
        g = load_citation_network(content, os.environ.get("MINCUT_CORA_CITES"))
        _, assignment, report = train_clustering(g, ClusteringConfig(7), iterations=10000, seed=0)
        ours = nmi(assignment.hard_labels(), g.labels)
        baseline = nmi(spectral_clustering(g, 7, seed=0).labels, g.labels)
        elapsed = time.perf_counter() - start
        box["detail"] = (f"MinCutPool NMI {ours:.3f}, spectral NMI {baseline:.3f}, "
                         f"final L_c {report.last.l_c:.3f}, {elapsed:.0f}s")
        assert ours >= 0.35
        assert baseline <= 0.15
        assert report.last.l_c > -0.99
        assert elapsed <= 30 * 60


def test_criterion_08_autoencoder():
    with criterion(8, "autoencoder") as box:
        start = time.perf_counter()
        results = {}
        for name, g in [("ring32", generate_ring_graph(32)), ("grid8x8", generate_grid_graph(8, 8))]:
            for seed in range(3):
                ours = train_autoencoder(g, "mincut", 0.25, seed=seed)[2]
                topk = train_autoencoder(g, "topk", 0.25, seed=seed)[2]
                results[name, seed] = (ours, topk)
        elapsed = time.perf_counter() - start
        worst = max(r[0] for r in results.values())
        best_topk = min(r[1] for r in results.values())
        box["detail"] = f"max MinCutPool MSE {worst:.2e}, min Top-K MSE {best_topk:.2e}, {elapsed:.0f}s"
        for key, (ours, topk) in results.items():
            assert ours < 0.01, key
            assert ours < topk, key
        assert elapsed <= 300


def test_criterion_09_coarsening_contract():
    with criterion(9, "coarsening contract") as box:
        rng = np.random.default_rng(9)
        for _ in range(200):
            n, k, f = int(rng.integers(2, 25)), int(rng.integers(1, 7)), int(rng.integers(1, 5))
            g = random_connected_graph(rng, n, p=float(rng.uniform(0, 0.5)), features=f,
                                       weighted=bool(rng.random() < 0.5))
            pooled = coarsen(random_stochastic(rng, n, k), normalize_adjacency(g), g.features)
            assert pooled.a_pool.shape == (k, k) and pooled.x_pool.shape == (k, f)
            np.testing.assert_allclose(pooled.a_pool, pooled.a_pool.T, atol=1e-10)
            assert np.all(np.diag(pooled.a_tilde_pool) == 0.0)
        pooled = coarsen(one_hot([0, 0, 1, 1], 2), na_of(4, FOUR_CYCLE), np.ones((4, 1)))
        np.testing.assert_allclose(pooled.a_pool, [[1, 1], [1, 1]], atol=1e-15)
        np.testing.assert_allclose(pooled.a_tilde_pool, [[0, 1], [1, 0]], atol=1e-15)
        box["detail"] = "200 random inputs; 4-cycle example reproduced"


def test_criterion_10_ratio_trace():
    with criterion(10, "ratio-trace variant") as box:
        g = graph_from_edges(6, [(0, 1), (2, 3), (4, 5)])
        s = one_hot([0, 0, 1, 1, 2, 2], 3)
        aligned = float(cut_loss_ratio_trace(s, g.adjacency))
        l_c = float(cut_loss(s, normalize_adjacency(g)))
        assert abs(aligned + 1) < 1e-10 and abs(l_c + 1) < 1e-10
        rng = np.random.default_rng(10)
        worst = 0.0
        for _ in range(200):
            n, k = int(rng.integers(4, 20)), int(rng.integers(2, 5))
            a = random_connected_graph(rng, n, weighted=True).adjacency.to_dense()
            s = random_stochastic(rng, n, k)
            oracle = np.trace(np.linalg.inv(s.T @ np.diag(a.sum(axis=1)) @ s) @ (s.T @ a @ s))
            worst = max(worst, abs(float(ratio_trace(s, a)) - oracle))
        box["detail"] = f"components: aligned {aligned}, L_c {l_c}; oracle max error {worst:.1e}"
        assert worst < 1e-10


def test_criterion_11_classification():
    with criterion(11, "graph classification") as box:
        rng = np.random.default_rng(11)
        graphs = make_sbm_classification_task(300, rng)
        model, _ = train_classifier(graphs[:200], graphs[200:250], ClassifierConfig(), rng)
        accuracy, _ = evaluate_classifier(model, graphs[250:])

        # permutation null: labels shuffled across train, val and test alike
        pool = make_sbm_classification_task(450, rng)
        shuffled = [pool[i].graph_label for i in rng.permutation(len(pool))]
        pool = [Graph(g.adjacency, g.features, g.labels, y) for g, y in zip(pool, shuffled)]
        control, _ = train_classifier(pool[:200], pool[200:250], ClassifierConfig(), rng)
        chance, _ = evaluate_classifier(control, pool[250:])
        box["detail"] = f"test accuracy {accuracy:.3f}; shuffled control {chance:.3f} (200 test graphs)"
        assert accuracy >= 0.9
        assert abs(chance - 0.5) <= 0.15


def test_criterion_12_determinism(tmp_path):
    with criterion(12, "determinism") as box:
        args = ["cluster", "--generator", "sbm", "--k", "6", "--method", "mincut", "--seed", "7"]
        records = []
        for run, hashseed in (("first", "1"), ("second", "2")):
            out = tmp_path / run
            proc = subprocess.run([sys.executable, "-m", "mincutpool", *args, "--out", str(out)],
                                  capture_output=True, text=True, env={**os.environ, "PYTHONHASHSEED": hashseed})
            assert proc.returncode == 0, proc.stderr
            record = json.loads(Path(out, "metrics.json").read_text())
            record.pop("seconds")
            records.append(record)
        box["detail"] = f"nmi {records[0]['nmi']}, l_u {records[0]['l_u']}"
        assert records[0] == records[1]
        assert records[0]["nmi"] >= 0.9


def test_unsupervised_anchor_composition():
    # companion to criterion 3: composed anchors of L_u
    assert float(unsupervised_loss(one_hot([0, 0, 1, 1], 2), na_of(4, TWO_EDGES))) == pytest.approx(-1, abs=1e-12)
    assert float(unsupervised_loss(np.eye(2), na_of(2, [(0, 1)]))) == pytest.approx(0, abs=1e-12)
    uniform = float(unsupervised_loss(np.full((4, 2), 0.5), na_of(4, FOUR_CYCLE)))
    assert uniform == pytest.approx(-1 + math.sqrt(2 - math.sqrt(2)), abs=1e-12)
