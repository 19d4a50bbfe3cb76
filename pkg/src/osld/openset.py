"""Energy-based detection of samples outside the known classes.

The energy of a logit vector is the negative log-sum-exp of its entries;
confident (known-class) inputs score low, novel inputs score high. A
per-stage quantile split marks the top fraction as outliers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from osld.classifier import SoftmaxClassifier
from osld.embeddings import EmbeddingMatrix
from osld.errors import OsldError


@dataclass(frozen=True)
class EnergyScores:
    """Per-document energies aligned with the input id order."""

    ids: tuple[str, ...]
    energies: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.energies, dtype=np.float64)
        object.__setattr__(self, "energies", arr)
        if arr.ndim != 1 or arr.shape[0] != len(self.ids):
            raise OsldError("energies misaligned with ids")
        if not np.isfinite(arr).all():
            raise OsldError("non-finite energy values")


def energy(logits: Sequence[float] | np.ndarray) -> float:
    """Negative log-sum-exp with max-shift stabilization."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise OsldError("energy of empty logit vector")
    if not np.isfinite(z).all():
        raise OsldError("non-finite logits")
    m = float(z.max())
    return -(m + math.log(float(np.exp(z - m).sum())))


def energy_batch(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] == 0:
        raise OsldError("expected a non-empty 2-D logit array")
    m = z.max(axis=1, keepdims=True)
    return -(m[:, 0] + np.log(np.exp(z - m).sum(axis=1)))


def score_documents(head: SoftmaxClassifier, X: EmbeddingMatrix) -> EnergyScores:
    return EnergyScores(ids=X.ids, energies=energy_batch(head.decision_function(X.data)))


def split_outliers(
    scores: EnergyScores, fraction: float = 0.15
) -> tuple[list[str], list[str]]:
    """Split ids into (inliers, outliers) at the energy quantile.

    The outlier count is ceil(fraction * n); ties at the cut are resolved
    by letting the lexicographically smaller id enter the outlier set.
    Outliers are returned in descending-energy order, inliers in input
    order.
    """
    n = len(scores.ids)
    if n == 0:
        raise OsldError("cannot split an empty score set")
    if not 0.0 < fraction < 1.0:
        raise OsldError("fraction must be in (0, 1)")
    m = math.ceil(fraction * n)
    ranked = sorted(range(n), key=lambda i: (-scores.energies[i], scores.ids[i]))
    outlier_pos = set(ranked[:m])
    outliers = [scores.ids[i] for i in ranked[:m]]
    inliers = [scores.ids[i] for i in range(n) if i not in outlier_pos]
    return inliers, outliers


def write_energy_csv(
    path: str | Path, scores: EnergyScores, outlier_ids: Sequence[str]
) -> None:
    flagged = set(outlier_ids)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "energy", "is_outlier"])
        for doc_id, value in zip(scores.ids, scores.energies):
            writer.writerow([doc_id, repr(float(value)), int(doc_id in flagged)])
