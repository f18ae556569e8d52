"""Classical spectral clustering: eigendecomposition of the normalized
adjacency, top-K eigenvector embedding, and k-means on its rows."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractError, NumericError, ParameterError
from .graph import Graph, normalize_adjacency

# Above this size the O(n^3)-per-sweep Jacobi solver is too slow for desk use.
JACOBI_MAX_N = 256


@dataclass(frozen=True, eq=False)
class EigenResult:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # column i pairs with eigenvalue i
    sweeps: int = 0


@dataclass(frozen=True, eq=False)
class HardAssignment:
    labels: np.ndarray
    k: int
    inertia: float | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise ContractError(f"cluster ids must lie in [0, {self.k})")
        object.__setattr__(self, "labels", labels)


@lru_cache(maxsize=16)
def _round_robin(m):
    """Pairings (p, q) for the m - 1 rounds of a round-robin tournament, m even."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array([players[i] for i in range(m // 2)])
        q = np.array([players[m - 1 - i] for i in range(m // 2)])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(m, tol=1e-14, max_sweeps=60):
    """Cyclic Jacobi eigensolver with round-robin (parallel) ordering.

    Each round applies n/2 disjoint plane rotations at once.  Converges when
    the off-diagonal Frobenius norm drops below ``tol * ||m||_F``.
    Returns unsorted ``(eigenvalues, eigenvectors, sweeps)``.
    """
    a = np.array(m, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    if n < 2:
        return np.diag(a).copy(), v, 0
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v, 0
    size = n + (n % 2)
    rounds = []
    for p, q in _round_robin(size):
        keep = q < n  # drop the pair with the padding index
        rounds.append((p[keep], q[keep]))

    off_mask = ~np.eye(n, dtype=bool)

    def off_norm():
        return np.sqrt(np.sum(a[off_mask] ** 2))

    for sweep in range(1, max_sweeps + 1):
        for p, q in rounds:
            apq = a[p, q]
            nonzero = apq != 0.0
            if not nonzero.any():
                continue
            app, aqq = a[p, p], a[q, q]
            safe = np.where(nonzero, apq, 1.0)
            with np.errstate(over="ignore"):
                theta = (aqq - app) / (2.0 * safe)
                # 1 / (|theta| + sqrt(theta^2 + 1)) without overflowing theta^2
                big = np.abs(theta) > 1e150
                root = np.sqrt(np.where(big, 1.0, theta * theta) + 1.0)
                t = np.where(big, 0.5 / np.where(big, np.abs(theta), 1.0),
                             1.0 / (np.abs(theta) + root))
            t = np.where(theta < 0, -t, t)
            t = np.where(nonzero, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rp, rq = a[p, :], a[q, :]
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p], a[:, q]
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p], v[:, q]
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
        off = off_norm()
        if off <= tol * scale:
            return np.diag(a).copy(), v, sweep
    raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps; "
                       f"off-diagonal norm {off_norm():.3e}")


def symmetric_eigendecomposition(m, method="auto") -> EigenResult:
    """Full spectrum of a symmetric matrix, eigenvalues sorted descending.

    ``method`` is ``"jacobi"``, ``"lapack"``, or ``"auto"`` (Jacobi up to
    ``JACOBI_MAX_N`` rows, LAPACK beyond).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {m.shape}")
    if m.size and np.max(np.abs(m - m.T)) > 1e-10:
        raise ContractError("matrix is not symmetric")
    m = (m + m.T) / 2
    if method == "auto":
        method = "jacobi" if m.shape[0] <= JACOBI_MAX_N else "lapack"
    if method == "jacobi":
        values, vectors, sweeps = jacobi_eigh(m)
    elif method == "lapack":
        values, vectors = np.linalg.eigh(m)
        sweeps = 0
    else:
        raise ParameterError(f"unknown eigensolver {method!r}")
    order = np.argsort(-values, kind="stable")
    values, vectors = values[order], vectors[:, order]
    # Fix the sign so the largest-magnitude entry of each vector is positive.
    if vectors.size:
        pivot = np.argmax(np.abs(vectors), axis=0)
        signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
        vectors = vectors * np.where(signs == 0, 1.0, signs)
    return EigenResult(values, vectors, sweeps)


# ---------------------------------------------------------------- k-means

def _sq_dists(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp(points, k, rng):
    n = len(points)
    centroids = [points[rng.integers(n)]]
    closest = _sq_dists(points, np.array(centroids))[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = 0
        centroids.append(points[idx])
        closest = np.minimum(closest, _sq_dists(points, points[idx:idx + 1])[:, 0])
    return np.array(centroids)


def lloyd(points, centroids, max_iter=300):
    """Lloyd iterations from given centroids.

    Returns ``(labels, centroids, inertia_history)``; history holds the
    inertia after every assignment step and is non-increasing.
    """
    points = np.asarray(points, dtype=np.float64)
    centroids = np.array(centroids, dtype=np.float64)
    k = len(centroids)
    labels = None
    history = []
    for _ in range(max_iter):
        d = _sq_dists(points, centroids)
        new_labels = np.argmin(d, axis=1)  # ties -> lowest centroid index
        inertia = float(d[np.arange(len(points)), new_labels].sum())
        if history and inertia > history[-1] * (1 + 1e-12) + 1e-12:
            raise NumericError(f"k-means inertia increased: {history[-1]} -> {inertia}")
        history.append(inertia)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        own = d[np.arange(len(points)), labels]
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = points[members].mean(axis=0)
            else:
                far = int(np.argmax(own))
                centroids[j] = points[far]
                own[far] = -1.0
    return labels, centroids, history


def kmeans(points, k, seed=None, max_iter=300, n_init=10) -> HardAssignment:
    """Best-of-``n_init`` Lloyd with k-means++ seeding."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if k < 1 or k > len(points):
        raise ParameterError(f"k={k} must lie in [1, {len(points)}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, _, history = lloyd(points, _kmeans_pp(points, k, rng), max_iter)
        if best is None or history[-1] < best[1]:
            best = (labels, history[-1])
    return HardAssignment(best[0], k, best[1])


def spectral_embedding(g: Graph, k, method="auto"):
    """Rows of the K leading eigenvectors of the normalized adjacency."""
    a_tilde = normalize_adjacency(g).dense
    return symmetric_eigendecomposition(a_tilde, method).eigenvectors[:, :k]


def spectral_clustering(g: Graph, k, seed=None, method="auto") -> HardAssignment:
    if k < 2:
        raise ParameterError(f"k must be at least 2, got {k}")
    if k > g.n:
        raise ParameterError(f"k={k} exceeds the {g.n} nodes")
    return kmeans(spectral_embedding(g, k, method), k, seed)
