"""Per-cluster keyword extraction and keyword-string centroids.

Each cluster's member texts are merged into one mega-document; tokens are
scored tf * ln(k / df) across the k mega-documents. The unsmoothed idf
sends tokens shared by every cluster to zero, so keyword lists contain
only discriminative tokens.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import math

import numpy as np

from osld.embeddings import normalize_tokens
from osld.errors import DegenerateCentroidError, OsldError

MIN_TOKEN_LEN = 2  # drops punctuation remnants and single letters


@dataclass(frozen=True)
class ClusterProfile:
    """Keywords (score-descending) and the centroid used downstream.

    ``centroid_source`` records whether the centroid came from embedding
    the keyword string or from the cluster's member mean (the fallback
    when the active backend cannot embed text into the document space).
    """

    cluster: int
    keywords: tuple[tuple[str, float], ...]
    centroid: np.ndarray
    centroid_source: str = "keywords"

    @property
    def keyword_string(self) -> str:
        return " ".join(tok for tok, _ in self.keywords)


def keyword_tokens(text: str) -> list[str]:
    return [t for t in normalize_tokens(text) if len(t) >= MIN_TOKEN_LEN]


def cluster_keywords(
    cluster_texts: Sequence[Sequence[str]], top_m: int = 10
) -> list[list[tuple[str, float]]]:
    """Top ``top_m`` tf-idf tokens per cluster.

    Ties break lexicographically; zero-score tokens are never emitted.
    Raises on empty clusters.
    """
    k = len(cluster_texts)
    if k < 1:
        raise OsldError("no clusters given")
    counts: list[Counter[str]] = []
    for j, texts in enumerate(cluster_texts):
        if not texts:
            raise OsldError(f"cluster {j} is empty")
        mega: Counter[str] = Counter()
        for text in texts:
            mega.update(keyword_tokens(text))
        counts.append(mega)

    df: Counter[str] = Counter()
    for mega in counts:
        df.update(set(mega))

    results: list[list[tuple[str, float]]] = []
    for mega in counts:
        scored = []
        for token, tf in mega.items():
            idf = math.log(k / df[token])
            score = tf * idf
            if score > 0.0:
                scored.append((token, score))
        scored.sort(key=lambda item: (-item[1], item[0]))
        results.append(scored[:top_m])
    return results


def cluster_centroid(
    keywords: Sequence[str], embed_text: Callable[[str], np.ndarray]
) -> np.ndarray:
    """Embed the space-joined keyword list; L2-normalized, never zero."""
    if not keywords:
        raise OsldError("empty keyword list")
    vec = np.asarray(embed_text(" ".join(keywords)), dtype=np.float64)
    norm = float(np.sqrt(vec @ vec))
    if norm == 0.0:
        raise DegenerateCentroidError(
            f"degenerate centroid for keywords {list(keywords)!r}"
        )
    return (vec / norm).astype(np.float32)


def member_centroid(rows: np.ndarray) -> np.ndarray:
    """L2-normalized mean of cluster member embeddings (document space)."""
    if rows.shape[0] == 0:
        raise OsldError("cluster has no members")
    mean = np.asarray(rows, dtype=np.float64).mean(axis=0)
    norm = float(np.sqrt(mean @ mean))
    if norm == 0.0:
        raise DegenerateCentroidError("cluster member mean is the zero vector")
    return (mean / norm).astype(np.float32)
