"""Deterministic synthetic staged benchmarks for pipeline testing.

Documents are bags of class-exclusive tokens (the class name plus
numbered derivatives) mixed with shared noise tokens, so keyword
extraction and name matching have lexical signal. Embedding mode
additionally writes per-stage vector files with one Gaussian blob per
class on scaled coordinate axes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from osld.dataset import STAGES, TEST_STAGES
from osld.embeddings import EmbeddingMatrix, write_embeddings
from osld.errors import OsldError

CLASS_NAMES = (
    "politics", "sport", "economy", "technology", "culture", "health",
    "science", "travel", "food", "weather", "music", "film", "nature",
    "justice",
)

NOISE_TOKENS = (
    "the", "and", "for", "with", "from", "this", "that", "over", "into",
    "after", "before", "report", "daily", "news", "update", "local",
    "world", "press", "today", "story", "week", "people", "public",
    "official", "group", "event", "year", "time", "place", "number",
)

TEXT_MODE = "text"
EMBEDDING_MODE = "embedding"


@dataclass(frozen=True)
class SynthSpec:
    """Shape of a generated benchmark: 4 known classes plus staged unknowns."""

    classes: int = 10
    known: int = 4
    vocab_size: int = 20
    train_docs: int = 400
    val_docs: int = 30
    test_docs: int = 60
    mode: str = EMBEDDING_MODE
    dim: int = 32
    separation: float = 4.0
    sigma: float = 0.4
    seed: int = 42
    language: str = "en"

    def __post_init__(self):
        if self.known < 1 or self.known >= self.classes:
            raise OsldError("known class count must be in [1, classes)")
        if self.classes > len(CLASS_NAMES):
            raise OsldError(f"at most {len(CLASS_NAMES)} classes supported")
        if min(self.train_docs, self.val_docs, self.test_docs) < 1:
            raise OsldError("document counts must be >= 1")
        if self.vocab_size < 1:
            raise OsldError("vocab_size must be >= 1")
        if self.mode not in (TEXT_MODE, EMBEDDING_MODE):
            raise OsldError(f"unknown mode {self.mode!r}")
        if self.sigma <= 0:
            raise OsldError("sigma must be > 0")
        if self.mode == EMBEDDING_MODE and self.dim < max(2, self.classes):
            raise OsldError("embedding dim must cover one axis per class")

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**obj)

    def class_names(self) -> tuple[str, ...]:
        return CLASS_NAMES[: self.classes]

    def stage_classes(self) -> dict[str, tuple[str, ...]]:
        names = self.class_names()
        known = names[: self.known]
        unknown = names[self.known :]
        base, rem = divmod(len(unknown), len(TEST_STAGES))
        counts = [base + (1 if i < rem else 0) for i in range(len(TEST_STAGES))]
        out: dict[str, tuple[str, ...]] = {"train": known, "val": known}
        cursor = 0
        current = list(known)
        for stage, extra in zip(TEST_STAGES, counts):
            current = current + list(unknown[cursor : cursor + extra])
            cursor += extra
            out[stage] = tuple(current)
        return out


def _doc_text(rng: np.random.Generator, name: str, vocab_size: int) -> str:
    exclusive = [f"{name}{i}" for i in rng.integers(0, vocab_size, size=8)]
    noise = [NOISE_TOKENS[i] for i in rng.integers(0, len(NOISE_TOKENS), size=6)]
    tokens = [name, name, name] + exclusive + noise
    rng.shuffle(tokens)
    return " ".join(tokens)


def generate(spec: SynthSpec, out_dir: str | Path) -> Path:
    """Write stage files, a manifest, and in embedding mode vector files.

    Byte-identical output for identical specs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    names = spec.class_names()
    class_index = {name: i for i, name in enumerate(names)}
    stage_classes = spec.stage_classes()
    docs_per_stage = {"train": spec.train_docs, "val": spec.val_docs}
    docs_per_stage.update({s: spec.test_docs for s in TEST_STAGES})

    for stage in STAGES:
        records = []
        vectors = []
        for cls in stage_classes[stage]:
            for i in range(docs_per_stage[stage]):
                doc_id = f"{stage}-{cls}-{i:04d}"
                text = _doc_text(rng, cls, spec.vocab_size)
                records.append({"id": doc_id, "label": cls, "text": text})
                if spec.mode == EMBEDDING_MODE:
                    center = np.zeros(spec.dim)
                    center[class_index[cls]] = spec.separation
                    vectors.append(center + spec.sigma * rng.normal(size=spec.dim))
        with (out / f"{stage}.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
        if spec.mode == EMBEDDING_MODE:
            matrix = EmbeddingMatrix(
                data=np.asarray(vectors, dtype=np.float32),
                ids=tuple(r["id"] for r in records),
            )
            write_embeddings(matrix, out / f"{stage}.emb")

    manifest = {
        "known_classes": list(names[: spec.known]),
        "stages": [
            {"name": s, "path": f"{s}.jsonl", "classes": list(stage_classes[s])}
            for s in STAGES
        ],
        "language": spec.language,
        "seed": spec.seed,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest_path
