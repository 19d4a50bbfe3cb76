"""Pseudo-label selection, label-space expansion and retraining.

Two retraining methods share one code path: the cross-entropy-only
variant, and the variant adding a temperature-scaled centroid-contrastive
term on the newly pseudo-labeled samples. Both train an identity-
initialized input projection so the contrastive gradient has somewhere
to flow while document embeddings stay frozen; with the contrastive
weight at zero the two are bitwise identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from osld.classifier import SoftmaxClassifier, TrainConfig
from osld.embeddings import EmbeddingMatrix
from osld.errors import DegenerateCentroidError, OsldError

V1 = "v1"
V2 = "v2"


@dataclass(frozen=True)
class ContrastiveConfig:
    lam: float = 0.3
    tau: float = 0.07

    def __post_init__(self):
        if self.lam < 0:
            raise OsldError("contrastive weight must be >= 0")
        if self.tau <= 0:
            raise OsldError("temperature must be > 0")


@dataclass
class PseudoLabeledSet:
    """Per-cluster kept ids plus the full similarity table for auditing."""

    kept: dict[int, list[str]] = field(default_factory=dict)
    # id -> (cluster, cosine to centroid, kept flag)
    table: dict[str, tuple[int, float, bool]] = field(default_factory=dict)

    @property
    def total_kept(self) -> int:
        return sum(len(ids) for ids in self.kept.values())

    def kept_ids(self) -> list[str]:
        out: list[str] = []
        for cluster in sorted(self.kept):
            out.extend(self.kept[cluster])
        return out


def discovered_class_name(stage: int, cluster: int) -> str:
    return f"stage{stage}_cluster{cluster}"


def _cosine_rows(rows: np.ndarray, centroid: np.ndarray) -> np.ndarray:
    c = np.asarray(centroid, dtype=np.float64)
    cnorm = float(np.sqrt(c @ c))
    if cnorm == 0.0:
        raise DegenerateCentroidError("zero centroid in similarity computation")
    norms = np.sqrt((rows * rows).sum(axis=1))
    sims = rows @ c / cnorm
    # zero-norm embeddings get similarity 0 rather than NaN
    return np.where(norms > 0.0, sims / np.where(norms > 0.0, norms, 1.0), 0.0)


def select_pseudolabeled(
    labels: np.ndarray,
    centroids: Sequence[np.ndarray],
    X: EmbeddingMatrix,
    keep_fraction: float = 0.40,
) -> PseudoLabeledSet:
    """Keep the ceil(fraction * size) members closest to each centroid.

    Members are ranked by cosine similarity (descending, ties by id).
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise OsldError("keep_fraction must be in (0, 1]")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != X.n:
        raise OsldError("cluster labels misaligned with embeddings")
    result = PseudoLabeledSet()
    data = X.data.astype(np.float64)
    for cluster, centroid in enumerate(centroids):
        member_pos = np.flatnonzero(labels == cluster)
        if member_pos.size == 0:
            raise OsldError(f"cluster {cluster} is empty")
        sims = _cosine_rows(data[member_pos], centroid)
        order = sorted(
            range(member_pos.size),
            key=lambda i: (-sims[i], X.ids[member_pos[i]]),
        )
        keep = math.ceil(keep_fraction * member_pos.size)
        kept_ids = []
        for rank, i in enumerate(order):
            doc_id = X.ids[member_pos[i]]
            is_kept = rank < keep
            result.table[doc_id] = (cluster, float(sims[i]), is_kept)
            if is_kept:
                kept_ids.append(doc_id)
        result.kept[cluster] = kept_ids
    return result


def expand_head(
    head: SoftmaxClassifier, new_classes: Sequence[str], seed: int
) -> SoftmaxClassifier:
    """Append freshly initialized rows for the discovered classes.

    Existing parameters are copied bitwise; the class-order prefix is
    preserved.
    """
    if not new_classes:
        raise OsldError("no new classes to add")
    overlap = set(new_classes) & set(head.class_order)
    if overlap:
        raise OsldError(f"class names already present: {sorted(overlap)}")
    expanded = SoftmaxClassifier(
        classes=list(head.class_order) + list(new_classes),
        dim=head.dim,
        hidden_size=head.hidden_size,
        projection=head.has_projection,
        seed=head.seed,
    )
    rng = np.random.default_rng(seed)
    din = head.params["W"].shape[1]
    bound = 1.0 / math.sqrt(din)
    fresh_W = rng.uniform(-bound, bound, size=(len(new_classes), din))
    fresh_b = rng.uniform(-bound, bound, size=len(new_classes))
    for name, value in head.params.items():
        if name == "W":
            expanded.params["W"] = np.vstack([value.copy(), fresh_W])
        elif name == "b":
            expanded.params["b"] = np.concatenate([value.copy(), fresh_b])
        else:
            expanded.params[name] = value.copy()
    return expanded


def contrastive_loss_and_grad(
    E: np.ndarray,
    assignments: np.ndarray,
    centroids: np.ndarray,
    tau: float = 0.07,
) -> tuple[float, np.ndarray]:
    """Centroid-contrastive loss over cosine similarities.

    loss = -mean_i log softmax(sim(e_i, c_*) / tau)[assignment_i], with a
    stable log-sum-exp; returns the gradient w.r.t. the embeddings E.
    """
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] == 0:
        raise OsldError("E must be a non-empty 2-D array")
    assignments = np.asarray(assignments, dtype=np.int64)
    C = np.asarray(centroids, dtype=np.float64)
    if tau <= 0:
        raise OsldError("temperature must be > 0")
    k = C.shape[0]
    if assignments.min() < 0 or assignments.max() >= k:
        raise OsldError("cluster assignment out of range")

    e_norm = np.sqrt((E * E).sum(axis=1))
    c_norm = np.sqrt((C * C).sum(axis=1))
    if np.any(e_norm == 0.0):
        raise OsldError("zero-norm embedding in contrastive loss")
    if np.any(c_norm == 0.0):
        raise DegenerateCentroidError("zero-norm centroid in contrastive loss")

    En = E / e_norm[:, None]
    Cn = C / c_norm[:, None]
    sims = En @ Cn.T                     # (n, k) cosine similarities
    z = sims / tau
    z_shift = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z_shift).sum(axis=1, keepdims=True))
    logp = z_shift - logsumexp

    n = E.shape[0]
    rows = np.arange(n)
    loss = float(-logp[rows, assignments].mean())

    dz = np.exp(logp)
    dz[rows, assignments] -= 1.0
    dz /= n * tau                        # d loss / d sims
    # d sims_ij / d e_i = c_j_hat / |e_i| - sims_ij * e_i / |e_i|^2
    dE = (dz @ Cn) / e_norm[:, None]
    dE -= ((dz * sims).sum(axis=1) / (e_norm**2))[:, None] * E
    return loss, dE


def retrain(
    head: SoftmaxClassifier,
    X: np.ndarray,
    y: np.ndarray,
    method: str,
    config: TrainConfig,
    contrastive: ContrastiveConfig | None = None,
    contrastive_rows: np.ndarray | None = None,
    contrastive_assignments: np.ndarray | None = None,
    centroids: np.ndarray | None = None,
) -> list[float]:
    """Retrain the expanded head on replayed plus pseudo-labeled data.

    ``contrastive_rows`` flags the rows (samples from this stage's
    discovered clusters) the contrastive term applies to;
    ``contrastive_assignments`` gives their cluster index per row of X
    (ignored outside the flagged rows). The term is skipped entirely for
    the cross-entropy-only method and for a zero weight, so those runs
    are bitwise identical.
    """
    if method not in (V1, V2):
        raise OsldError(f"unknown retraining method {method!r}")
    head.enable_projection()

    extra = None
    cc = contrastive or ContrastiveConfig()
    if method == V2 and cc.lam != 0.0:
        if contrastive_rows is None or contrastive_assignments is None or centroids is None:
            raise OsldError("contrastive retraining needs rows, assignments and centroids")
        mask = np.asarray(contrastive_rows, dtype=bool)
        assign_full = np.asarray(contrastive_assignments, dtype=np.int64)
        C = np.asarray(centroids, dtype=np.float64)

        def extra(rows: np.ndarray, Z0: np.ndarray):
            sel = np.flatnonzero(mask[rows])
            if sel.size == 0:
                return None
            loss, dE = contrastive_loss_and_grad(
                Z0[sel], assign_full[rows[sel]], C, tau=cc.tau
            )
            dZ0 = np.zeros_like(Z0)
            dZ0[sel] = cc.lam * dE
            return cc.lam * loss, dZ0

    return head.fit(X, y, config, extra_term=extra)
