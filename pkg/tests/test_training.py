import math

import numpy as np
import pytest
from hypothesis import given

from mincutpool.errors import ParameterError
from mincutpool.graph import Graph, generate_community_graph, generate_ring_graph
from mincutpool.training import (Adam, ClassifierConfig, ClusteringConfig, IterationRecord, TrainReport,
                                 evaluate_classifier, make_sbm_classification_task, predict,
                                 train_autoencoder, train_classifier, train_clustering,
                                 train_diffpool_clustering)

from conftest import seeds


# ---------------------------------------------------------------- Adam

def test_adam_zero_gradient_leaves_parameters(rng):
    opt = Adam(0.1)
    params = {"w": rng.normal(size=(3, 2))}
    out = opt.step(params, {"w": np.zeros((3, 2))})
    np.testing.assert_array_equal(out["w"], params["w"])
    assert opt.t == 1


def test_adam_first_step_is_signed_lr(rng):
    lr = 1e-3
    g = rng.normal(size=(4, 4))
    out = Adam(lr).step({"w": np.zeros((4, 4))}, {"w": g})
    np.testing.assert_allclose(out["w"], -lr * g / (np.abs(g) + 1e-8), rtol=1e-12)
    np.testing.assert_allclose(out["w"], -lr * np.sign(g), atol=1e-9)


def test_adam_moment_shapes_mirror_parameters(rng):
    opt = Adam()
    params = {"a": np.zeros((2, 3)), "b": np.zeros((1, 5))}
    opt.step(params, {k: rng.normal(size=v.shape) for k, v in params.items()})
    assert {k: v.shape for k, v in opt.m.items()} == {"a": (2, 3), "b": (1, 5)}
    assert {k: v.shape for k, v in opt.v.items()} == {"a": (2, 3), "b": (1, 5)}


@given(seeds)
def test_adam_changes_parameters_iff_gradient_nonzero(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(3, 3)) * (rng.random((3, 3)) < 0.5)
    w = rng.normal(size=(3, 3))
    out = Adam(0.01).step({"w": w}, {"w": g})["w"]
    np.testing.assert_array_equal(out != w, g != 0)


def test_adam_minimizes_quadratic():
    opt = Adam(0.05)
    params = {"w": np.array([[3.0, -2.0]])}
    for _ in range(2000):
        params = opt.step(params, {"w": 2 * params["w"]})
    np.testing.assert_allclose(params["w"], 0.0, atol=1e-3)


def test_adam_trajectories_are_deterministic(rng):
    grads = [rng.normal(size=(2, 2)) for _ in range(5)]

    def run():
        opt, p = Adam(0.01), {"w": np.ones((2, 2))}
        for g in grads:
            p = opt.step(p, {"w": g})
        return p["w"]

    np.testing.assert_array_equal(run(), run())


# ---------------------------------------------------------------- reports

def test_report_csv_has_meta_header_and_rows():
    report = TrainReport([IterationRecord(0, -0.5, 0.1, -0.4, None, 0.9, 0.01)], {"patience": 50})
    lines = report.to_csv().splitlines()
    assert lines[0] == "# patience=50"
    assert lines[1] == "iter,l_c,l_o,l_u,task_loss,nmi,seconds"
    assert lines[2].startswith("0,-0.5,0.1,-0.4,,0.9,")


# ---------------------------------------------------------------- clustering

@pytest.fixture(scope="module")
def small_run():
    g = generate_community_graph(3, 10, 0.9, 0.02, seed=4)
    return g, train_clustering(g, ClusteringConfig(3, lr=5e-3), iterations=300, seed=0)


def test_clustering_report_counts_and_bounds(small_run):
    g, (model, assignment, report) = small_run
    assert len(report) == 300
    l_c, l_o = report.column("l_c"), report.column("l_o")
    assert np.all((l_c >= -1 - 1e-9) & (l_c <= 1e-9))
    assert np.all((l_o >= -1e-9) & (l_o <= 2 + 1e-9))
    np.testing.assert_allclose(report.column("l_u"), l_c + l_o, atol=1e-12)
    assert assignment.s.shape == (g.n, 3)


def test_clustering_recovers_easy_communities(small_run):
    g, (_, assignment, report) = small_run
    assert report.last.nmi == pytest.approx(1.0)


def test_clustering_is_deterministic():
    g = generate_ring_graph(12)
    runs = [train_clustering(g, ClusteringConfig(2), iterations=20, seed=3) for _ in range(2)]
    (_, s1, r1), (_, s2, r2) = runs
    np.testing.assert_array_equal(s1.s, s2.s)
    for a, b in zip(r1.records, r2.records):
        assert (a.l_c, a.l_o, a.l_u, a.nmi) == (b.l_c, b.l_o, b.l_u, b.nmi)


def test_clustering_early_stop():
    g = generate_ring_graph(8)
    config = ClusteringConfig(2, lr=5e-2, early_stop_patience=5, early_stop_tol=1.0)
    _, _, report = train_clustering(g, config, iterations=100, seed=0)
    assert len(report) == 6


def test_clustering_config_validation():
    with pytest.raises(ParameterError):
        ClusteringConfig(1)
    with pytest.raises(ParameterError):
        train_clustering(generate_ring_graph(5), ClusteringConfig(2), iterations=0)


def test_diffpool_clustering_runs():
    g = generate_community_graph(2, 8, 0.9, 0.05, seed=1)
    _, assignment, report = train_diffpool_clustering(g, 2, iterations=50, seed=0)
    assert len(report) == 50
    assert all(math.isfinite(r.task_loss) for r in report.records)
    assert assignment.k == 2


# ---------------------------------------------------------------- autoencoder

def test_identity_autoencoder_reaches_near_zero_error():
    _, x_rec, err, report = train_autoencoder(generate_ring_graph(16), "none", iterations=1500, seed=0)
    assert err < 1e-3
    assert x_rec.shape == (16, 2)
    assert report.last.l_u is None


def test_mincut_autoencoder_logs_pooling_losses():
    _, _, err, report = train_autoencoder(generate_ring_graph(12), "mincut", iterations=30, seed=0)
    assert len(report) == 30
    assert report.last.l_c is not None and -1 <= report.last.l_c <= 0
    assert math.isfinite(err)


@pytest.mark.parametrize("kind", ["diffpool", "topk"])
def test_baseline_autoencoders_run(kind):
    _, x_rec, err, report = train_autoencoder(generate_ring_graph(12), kind, iterations=20, seed=0)
    assert x_rec.shape == (12, 2) and math.isfinite(err)


def test_autoencoder_validation():
    with pytest.raises(ParameterError):
        train_autoencoder(generate_ring_graph(8), "graclus", iterations=1)
    with pytest.raises(ParameterError):
        train_autoencoder(generate_ring_graph(8), "mincut", keep_ratio=0.0, iterations=1)


# ---------------------------------------------------------------- classification

def test_classification_task_labels_and_features():
    graphs = make_sbm_classification_task(20, seed=0)
    labels = [g.graph_label for g in graphs]
    assert sorted(labels) == [0] * 10 + [1] * 10
    for g in graphs:
        assert g.n == 36 and g.features.shape == (36, 2)
        assert len(np.unique(g.labels)) == g.graph_label + 2


def test_all_one_class_training_predicts_that_class():
    graphs = [Graph(g.adjacency, g.features, g.labels, 0)
              for g in make_sbm_classification_task(30, seed=2)]
    config = ClassifierConfig(max_epochs=15, batch_size=8)
    model, report = train_classifier(graphs[:20], graphs[20:24], config, seed=0)
    assert np.all(predict(model, graphs[24:]) == 0)
    acc, _ = evaluate_classifier(model, graphs[24:])
    assert acc == 1.0


def test_classifier_losses_finite_and_report_meta():
    graphs = make_sbm_classification_task(24, seed=3)
    config = ClassifierConfig(max_epochs=3, batch_size=8, patience=50)
    _, report = train_classifier(graphs[:16], graphs[16:], config, seed=1)
    assert report.meta["patience"] == 50
    assert len(report) == 3
    for r in report.records:
        assert math.isfinite(r.task_loss) and math.isfinite(r.l_u)


def test_classifier_without_pooling():
    graphs = make_sbm_classification_task(12, seed=4)
    _, report = train_classifier(graphs[:8], graphs[8:], ClassifierConfig(method="none", max_epochs=2), seed=0)
    assert report.last.l_u is None


def test_classifier_is_deterministic():
    graphs = make_sbm_classification_task(12, seed=5)
    config = ClassifierConfig(max_epochs=2, batch_size=4)
    r1 = train_classifier(graphs[:8], graphs[8:], config, seed=7)[1]
    r2 = train_classifier(graphs[:8], graphs[8:], config, seed=7)[1]
    assert [(r.task_loss, r.l_u) for r in r1.records] == [(r.task_loss, r.l_u) for r in r2.records]


def test_classifier_config_validation():
    with pytest.raises(ParameterError):
        ClassifierConfig(method="topk")
