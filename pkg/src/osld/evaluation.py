"""Hungarian matching of discovered classes and grouped metrics.

Discovered classes are aligned to ground-truth class names by maximizing
cosine similarity between keyword-list embeddings and name embeddings
(minimizing negated similarity with an O(n^3) assignment solver). The
matching runs at evaluation time only; ground-truth names never reach
training or inference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from osld.embeddings import HashingTfidfVectorizer
from osld.errors import OsldError


def hungarian(cost: np.ndarray) -> tuple[dict[int, int], float]:
    """Minimum-total-cost one-to-one assignment.

    Rectangular inputs are padded to square with (max entry + 1); padded
    pairs are excluded from the returned mapping and total.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise OsldError("cost matrix must be non-empty and 2-D")
    if not np.isfinite(cost).all():
        raise OsldError("cost matrix entries must be finite")
    p, q = cost.shape
    size = max(p, q)
    if p != q:
        square = np.full((size, size), float(cost.max()) + 1.0)
        square[:p, :q] = cost
    else:
        square = cost

    col_of_row = _solve_square(square)
    mapping = {
        r: c for r, c in enumerate(col_of_row) if r < p and c < q
    }
    total = float(sum(cost[r, c] for r, c in sorted(mapping.items())))
    return mapping, total


def _solve_square(a: np.ndarray) -> list[int]:
    """Potentials-based shortest augmenting path assignment (1-indexed)."""
    n = a.shape[0]
    INF = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)    # p[j]: row matched to column j (0 = unmatched)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = [0] * n
    for j in range(1, n + 1):
        if p[j] > 0:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def similarity_matrix(
    keyword_lists: Sequence[Sequence[str]],
    gt_names: Sequence[str],
    embed_text: Callable[[str], np.ndarray],
) -> np.ndarray:
    """Cosines between keyword-list embeddings and class-name embeddings."""
    if not keyword_lists or not gt_names:
        raise OsldError("need at least one discovered class and one name")

    def unit(text: str, what: str) -> np.ndarray:
        vec = np.asarray(embed_text(text), dtype=np.float64)
        norm = float(np.sqrt(vec @ vec))
        if norm == 0.0:
            raise OsldError(f"degenerate embedding for {what}: {text!r}")
        return vec / norm

    rows = np.stack([unit(" ".join(kw), "keyword list") for kw in keyword_lists])
    cols = np.stack([unit(name, "class name") for name in gt_names])
    return rows @ cols.T


def build_matching_embedder(
    keyword_lists: Sequence[Sequence[str]],
    gt_names: Sequence[str],
    dim: int = 256,
    seed: int = 0,
) -> Callable[[str], np.ndarray]:
    """Evaluation-local featurizer over keyword strings and class names.

    The document backend may not cover discovered vocabulary (or may not
    embed text at all), so name matching gets its own lexical space fit
    on exactly the strings being compared.
    """
    corpus = [" ".join(kw) for kw in keyword_lists] + list(gt_names)
    return HashingTfidfVectorizer(dim=dim, seed=seed).fit(corpus).embed


@dataclass(frozen=True)
class MatchResult:
    """Injective discovered-name to ground-truth-name mapping."""

    mapping: dict[str, str]
    similarity: np.ndarray
    total_similarity: float

    def rename(self, prediction: str) -> str:
        return self.mapping.get(prediction, prediction)


def match_discovered(
    discovered: Mapping[str, Sequence[str]],
    gt_names: Sequence[str],
    embed_text: Callable[[str], np.ndarray] | None = None,
    dim: int = 256,
    seed: int = 0,
) -> MatchResult:
    """Hungarian-match discovered classes (name -> keywords) to gt names."""
    names = list(discovered.keys())
    keyword_lists = [list(discovered[n]) for n in names]
    if embed_text is None:
        embed_text = build_matching_embedder(keyword_lists, gt_names, dim=dim, seed=seed)
    sim = similarity_matrix(keyword_lists, gt_names, embed_text)
    assignment, _ = hungarian(-sim)
    mapping = {names[r]: gt_names[c] for r, c in assignment.items()}
    total = float(sum(sim[r, c] for r, c in assignment.items()))
    return MatchResult(mapping=mapping, similarity=sim, total_similarity=total)


@dataclass(frozen=True)
class GroupMetrics:
    count: int
    accuracy: float
    macro_f1: float

    def as_dict(self) -> dict:
        return {"count": self.count, "accuracy": self.accuracy, "macro_f1": self.macro_f1}


@dataclass
class StageMetrics:
    stage: str
    groups: dict[str, GroupMetrics]
    confusion: dict[str, dict[str, int]]
    discovered_k: int = 0
    fallback: bool = False
    matching: dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "stage": self.stage,
            "discovered_k": self.discovered_k,
            "fallback": self.fallback,
            "matching": dict(sorted(self.matching.items())),
            "groups": {name: gm.as_dict() for name, gm in sorted(self.groups.items())},
            "confusion": {
                gold: dict(sorted(preds.items()))
                for gold, preds in sorted(self.confusion.items())
            },
        }


def _macro_f1(golds: list[str], preds: list[str]) -> float:
    classes = sorted(set(golds))
    if not classes:
        return 0.0
    scores = []
    for c in classes:
        tp = sum(1 for g, p in zip(golds, preds) if g == c and p == c)
        fp = sum(1 for g, p in zip(golds, preds) if g != c and p == c)
        fn = sum(1 for g, p in zip(golds, preds) if g == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores.append(f1)
    return float(np.mean(scores))


def grouped_metrics(
    predictions: Mapping[str, str],
    golds: Mapping[str, str],
    known_set: Sequence[str],
    stage_new_set: Sequence[str],
    stage: str = "",
) -> StageMetrics:
    """Accuracy and macro-F1 for the overall / known / unknown groups.

    known = samples whose gold class was trained initially; unknown =
    samples whose gold class was introduced by the current test set.
    Macro-F1 averages per-class F1 over classes present in the group's
    gold labels.
    """
    missing = [i for i in golds if i not in predictions]
    if missing:
        raise OsldError(f"missing prediction for test id {missing[0]!r}")
    known = set(known_set)
    new = set(stage_new_set)

    ids = list(golds.keys())
    group_ids = {
        "overall": ids,
        "known": [i for i in ids if golds[i] in known],
        "unknown": [i for i in ids if golds[i] in new],
    }
    groups: dict[str, GroupMetrics] = {}
    for name, members in group_ids.items():
        g = [golds[i] for i in members]
        p = [predictions[i] for i in members]
        correct = sum(1 for a, b in zip(g, p) if a == b)
        accuracy = correct / len(members) if members else 0.0
        groups[name] = GroupMetrics(
            count=len(members), accuracy=accuracy, macro_f1=_macro_f1(g, p)
        )

    confusion: dict[str, dict[str, int]] = {}
    for i in ids:
        row = confusion.setdefault(golds[i], {})
        row[predictions[i]] = row.get(predictions[i], 0) + 1
    return StageMetrics(stage=stage, groups=groups, confusion=confusion)


@dataclass
class EvaluationReport:
    """Per-stage grouped metrics; serialized deterministically."""

    stages: list[StageMetrics]
    validation_accuracy: float | None = None

    def as_dict(self) -> dict:
        return {
            "validation_accuracy": self.validation_accuracy,
            "stages": [s.as_dict() for s in self.stages],
        }

    def to_table(self) -> str:
        header = f"{'group':<10}" + "".join(
            f"{s.stage + ' acc':>12}{s.stage + ' F1':>12}" for s in self.stages
        )
        lines = [header, "-" * len(header)]
        for group in ("overall", "known", "unknown"):
            row = f"{group:<10}"
            for s in self.stages:
                gm = s.groups[group]
                row += f"{gm.accuracy:>12.3f}{gm.macro_f1:>12.3f}"
            lines.append(row)
        ks = "discovered k: " + ", ".join(
            f"{s.stage}={s.discovered_k}{'*' if s.fallback else ''}" for s in self.stages
        )
        lines.append(ks)
        return "\n".join(lines) + "\n"
