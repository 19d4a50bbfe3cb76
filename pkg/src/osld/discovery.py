"""K-means clustering of outlier embeddings with silhouette model selection.

Plain Lloyd iterations over Euclidean distance with k-means++ seeding;
empty clusters are repaired by reseeding on the point farthest from its
assigned centroid, which keeps the inertia sequence non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from osld.errors import OsldError
from osld.util import child_seed


@dataclass(frozen=True)
class ClusterAssignment:
    """Result of one k-means run; every cluster is non-empty."""

    k: int
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...] = field(default=())

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def _pairwise_sq(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # (x - c)^2 expanded; clip tiny negatives from cancellation
    d2 = (
        (X * X).sum(axis=1)[:, None]
        - 2.0 * (X @ C.T)
        + (C * C).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _plus_plus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    centers[0] = X[rng.integers(n)]
    d2 = _pairwise_sq(X, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = X[idx]
        d2 = np.minimum(d2, _pairwise_sq(X, centers[j : j + 1])[:, 0])
    return centers


class KMeans:
    """Seeded Lloyd k-means; fitted attributes follow sklearn naming."""

    def __init__(self, n_clusters: int, seed: int = 0, max_iter: int = 300,
                 tol: float = 1e-6):
        if n_clusters < 1:
            raise OsldError("n_clusters must be >= 1")
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol
        self.labels_: np.ndarray | None = None
        self.cluster_centers_: np.ndarray | None = None
        self.inertia_: float | None = None
        self.inertia_history_: list[float] = []

    def get_params(self, deep: bool = True) -> dict:
        return {"n_clusters": self.n_clusters, "seed": self.seed,
                "max_iter": self.max_iter, "tol": self.tol}

    def fit(self, X: np.ndarray) -> "KMeans":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise OsldError("X must be 2-D")
        n, k = X.shape[0], self.n_clusters
        if n < k:
            raise OsldError(f"{n} points cannot form {k} clusters")
        rng = np.random.default_rng(self.seed)
        centers = _plus_plus_init(X, k, rng)

        history: list[float] = []
        labels = np.zeros(n, dtype=np.int64)
        for _ in range(self.max_iter):
            d2 = _pairwise_sq(X, centers)
            labels = d2.argmin(axis=1)

            # reseed empty clusters on the point farthest from its centroid;
            # rescan because moving a singleton can empty its old cluster
            assigned_d2 = d2[np.arange(n), labels].astype(np.float64)
            while True:
                empty = [j for j in range(k) if not np.any(labels == j)]
                if not empty:
                    break
                for j in empty:
                    far = int(assigned_d2.argmax())
                    centers[j] = X[far]
                    labels[far] = j
                    assigned_d2[far] = -np.inf

            new_centers = centers.copy()
            for j in range(k):
                new_centers[j] = X[labels == j].mean(axis=0)
            shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
            centers = new_centers
            history.append(float(_pairwise_sq(X, centers)[np.arange(n), labels].sum()))
            if shift < self.tol:
                break

        self.labels_ = labels
        self.cluster_centers_ = centers
        self.inertia_ = history[-1]
        self.inertia_history_ = history
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.cluster_centers_ is None:
            raise OsldError("KMeans is not fitted")
        return _pairwise_sq(np.asarray(X, dtype=np.float64), self.cluster_centers_).argmin(axis=1)


def kmeans(X: np.ndarray, k: int, seed: int = 0) -> ClusterAssignment:
    est = KMeans(n_clusters=k, seed=seed).fit(X)
    return ClusterAssignment(
        k=k,
        labels=est.labels_,
        centroids=est.cluster_centers_.astype(np.float32),
        inertia=float(est.inertia_),
        inertia_history=tuple(est.inertia_history_),
    )


def silhouette(
    X: np.ndarray,
    labels: np.ndarray,
    sample_cap: int = 2000,
    seed: int = 0,
) -> float:
    """Mean silhouette coefficient with exact pairwise distances.

    Singleton clusters contribute 0; so do points where both cohesion and
    separation vanish (identical points). Sets larger than ``sample_cap``
    are deterministically subsampled.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    if n != labels.shape[0]:
        raise OsldError("labels misaligned with X")
    if n < 2:
        raise OsldError("silhouette needs at least 2 points")
    if np.unique(labels).size < 2:
        raise OsldError("silhouette needs at least 2 clusters")

    if n > sample_cap:
        idx = np.sort(np.random.default_rng(seed).choice(n, sample_cap, replace=False))
        X, labels = X[idx], labels[idx]
        n = sample_cap
        if np.unique(labels).size < 2:
            return 0.0

    dists = np.sqrt(_pairwise_sq(X, X))
    values = np.unique(labels)
    sizes = np.array([(labels == c).sum() for c in values], dtype=np.float64)
    # per-point summed distance to each cluster
    sums = np.stack([dists[:, labels == c].sum(axis=1) for c in values], axis=1)
    own = np.searchsorted(values, labels)

    rows = np.arange(n)
    own_size = sizes[own]
    a = np.where(own_size > 1, sums[rows, own] / np.maximum(own_size - 1, 1), 0.0)
    means = sums / sizes[None, :]
    means[rows, own] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0.0, (b - a) / np.where(denom > 0.0, denom, 1.0), 0.0)
    s = np.where(own_size == 1, 0.0, s)  # singletons contribute 0
    return float(s.mean())


@dataclass(frozen=True)
class SelectKResult:
    k: int
    assignment: ClusterAssignment
    scores: dict[int, float]


def select_k(
    X: np.ndarray,
    kmin: int = 2,
    kmax: int = 8,
    seed: int = 0,
    restarts: int = 5,
) -> SelectKResult:
    """Pick the cluster count maximizing mean silhouette.

    Each candidate k keeps the lowest-inertia of ``restarts`` seeded runs;
    silhouette ties break toward the smaller k. The candidate range is
    truncated to [kmin, n] when the sample is small.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise OsldError("select_k needs at least 2 points")
    if kmin < 2:
        raise OsldError("kmin must be >= 2")
    hi = min(kmax, n)
    if hi < kmin:
        raise OsldError(f"no feasible k in [{kmin}, {hi}]")

    best_k = -1
    best_score = -np.inf
    best_assignment: ClusterAssignment | None = None
    scores: dict[int, float] = {}
    for k in range(kmin, hi + 1):
        run: ClusterAssignment | None = None
        for r in range(restarts):
            cand = kmeans(X, k, seed=child_seed(seed, k, r))
            if run is None or cand.inertia < run.inertia:
                run = cand
        score = silhouette(X, run.labels, seed=seed)
        scores[k] = score
        if score > best_score:
            best_k, best_score, best_assignment = k, score, run
    assert best_assignment is not None
    return SelectKResult(k=best_k, assignment=best_assignment, scores=scores)
