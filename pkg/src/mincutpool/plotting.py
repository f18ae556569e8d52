"""Optional PNG figures written next to the CSV/JSON outputs.

matplotlib is imported lazily so the core package does not depend on it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParameterError


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise ParameterError("plotting needs matplotlib: pip install 'artifact[plot]'") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _layout(g):
    """2-D node positions: the features when they are 2-D, else a spectral layout."""
    if g.features.shape[1] == 2:
        return g.features
    from .spectral import spectral_embedding
    emb = spectral_embedding(g, min(3, g.n))
    return emb[:, 1:3] if emb.shape[1] >= 3 else np.c_[emb[:, 0], np.zeros(g.n)]


def _draw_edges(ax, g, pos):
    from matplotlib.collections import LineCollection
    segments = [pos[[i, j]] for i, j, _ in g.edges()]
    ax.add_collection(LineCollection(segments, colors="0.8", linewidths=0.5, zorder=1))


def plot_clusters(g, labels, path, title=None):
    """Scatter the nodes coloured by cluster id."""
    plt = _pyplot()
    pos = _layout(g)
    fig, ax = plt.subplots(figsize=(5, 5))
    _draw_edges(ax, g, pos)
    ax.scatter(pos[:, 0], pos[:, 1], c=np.asarray(labels), cmap="tab10", s=25, zorder=2)
    ax.set_title(title or "cluster assignments")
    ax.set_xticks([])
    ax.set_yticks([])
    return _save(fig, path)


def plot_training_curves(report, path, title=None):
    """Loss terms and NMI (when recorded) against iteration."""
    plt = _pyplot()
    it = report.column("iteration")
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in ("l_c", "l_o", "l_u", "task_loss"):
        col = report.column(name)
        if np.isfinite(col).any():
            ax.plot(it, col, label=name)
    score = report.column("nmi")
    if np.isfinite(score).any():
        twin = ax.twinx()
        twin.plot(it, score, color="black", linestyle="--", label="nmi")
        twin.set_ylabel("NMI")
        twin.set_ylim(0, 1.05)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(loc="upper right")
    ax.set_title(title or "training curves")
    return _save(fig, path)


def plot_reconstruction(g, x_rec, path, title=None):
    """Original node coordinates against their reconstruction."""
    plt = _pyplot()
    x_rec = np.asarray(x_rec)
    fig, axes = plt.subplots(1, 2, figsize=(9, 4.5), sharex=True, sharey=True)
    for ax, pos, name in zip(axes, (g.features, x_rec), ("original", "reconstructed")):
        _draw_edges(ax, g, pos)
        ax.scatter(pos[:, 0], pos[:, 1], s=15, zorder=2)
        ax.set_title(name)
    fig.suptitle(title or "autoencoder reconstruction")
    return _save(fig, path)


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    _pyplot().close(fig)
    return path
