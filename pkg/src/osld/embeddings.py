"""Embedding backends: a binary file format and a hashed-TFIDF featurizer.

Every downstream module consumes only :class:`EmbeddingMatrix`, so a
precomputed-file backend and the built-in featurizer are interchangeable.

Embedding file (bit-exact): magic ``OSLDEMB1`` (8 ASCII bytes), u32 LE
row count n, u32 LE dimension d, n*d float32 LE row-major payload, u32 LE
id-section byte length, then a JSON array of n id strings (UTF-8).
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import unicodedata
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from osld.dataset import DocumentSet, StageManifest
from osld.errors import EmbeddingFormatError, OsldError
from osld.util import worker_count

EMB_MAGIC = b"OSLDEMB1"


@dataclass(frozen=True)
class EmbeddingMatrix:
    """n x d float32 vectors aligned 1:1 with an ordered id list."""

    data: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise OsldError("embedding data must be a 2-D array")
        object.__setattr__(self, "data", data)
        if data.shape[0] != len(self.ids):
            raise OsldError(
                f"{data.shape[0]} rows but {len(self.ids)} ids in embedding matrix"
            )
        if data.shape[1] < 2:
            raise OsldError("embedding dimension must be >= 2")
        if not np.isfinite(data).all():
            raise OsldError("NaN/Inf entries in embedding matrix")
        if len(set(self.ids)) != len(self.ids):
            raise OsldError("duplicate ids in embedding matrix")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def row(self, doc_id: str) -> np.ndarray:
        return self.data[self.ids.index(doc_id)]

    def subset(self, ids: Sequence[str]) -> "EmbeddingMatrix":
        """Rows for ``ids`` in the given order."""
        pos = {i: p for p, i in enumerate(self.ids)}
        rows = np.stack([self.data[pos[i]] for i in ids]) if ids else np.zeros((0, self.d), np.float32)
        return EmbeddingMatrix(data=rows, ids=tuple(ids))


def write_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    path = Path(path)
    payload = np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()
    id_blob = json.dumps(list(matrix.ids), ensure_ascii=False).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", matrix.n, matrix.d))
        fh.write(payload)
        fh.write(struct.pack("<I", len(id_blob)))
        fh.write(id_blob)


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read an embedding file, verifying magic, sizes and finiteness."""
    path = Path(path)
    if not path.is_file():
        raise EmbeddingFormatError(f"embedding file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 16:
        raise EmbeddingFormatError(f"{path}: file too short for header")
    if blob[:8] != EMB_MAGIC:
        raise EmbeddingFormatError(
            f"{path}: bad magic {blob[:8]!r}, expected {EMB_MAGIC!r}"
        )
    n, d = struct.unpack("<II", blob[8:16])
    if n == 0 or d == 0:
        raise EmbeddingFormatError(f"{path}: zero row count or dimension (n={n}, d={d})")
    need = n * d * 4
    if len(blob) < 16 + need + 4:
        raise EmbeddingFormatError(
            f"{path}: truncated payload ({len(blob) - 16} bytes, need {need + 4})"
        )
    data = np.frombuffer(blob[16 : 16 + need], dtype="<f4").reshape(n, d)
    if not np.isfinite(data).all():
        raise EmbeddingFormatError(f"{path}: NaN detected in payload")
    (id_len,) = struct.unpack("<I", blob[16 + need : 20 + need])
    id_blob = blob[20 + need : 20 + need + id_len]
    if len(id_blob) != id_len:
        raise EmbeddingFormatError(f"{path}: truncated id section")
    try:
        ids = json.loads(id_blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EmbeddingFormatError(f"{path}: malformed id section") from exc
    if not isinstance(ids, list) or len(ids) != n:
        raise EmbeddingFormatError(f"{path}: id section has {len(ids)} ids, expected {n}")
    return EmbeddingMatrix(data=data.copy(), ids=tuple(ids))


_PUNCT_CACHE: dict[str, bool] = {}


def _is_punct(ch: str) -> bool:
    flag = _PUNCT_CACHE.get(ch)
    if flag is None:
        flag = unicodedata.category(ch).startswith("P")
        _PUNCT_CACHE[ch] = flag
    return flag


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, drop punctuation characters, split on Unicode whitespace."""
    cleaned = "".join(ch for ch in text.lower() if not _is_punct(ch))
    return cleaned.split()


def _bucket_sign(token: str, dim: int, salt: bytes) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, salt=salt).digest()
    value = int.from_bytes(digest, "little")
    bucket = value % dim
    sign = 1.0 if (value >> 63) & 1 == 0 else -1.0
    return bucket, sign


class HashingTfidfVectorizer:
    """Sign-hashed TFIDF text featurizer with smoothed idf.

    idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1 over the fitted corpus;
    tokens unseen at fit time contribute nothing, so a text with no known
    tokens embeds to the zero vector. Non-zero vectors are L2-normalized.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 2:
            raise OsldError("featurizer dimension must be >= 2")
        self.dim = dim
        self.seed = seed
        self._salt = int(seed).to_bytes(8, "little", signed=False)
        self.idf_: dict[str, float] | None = None
        self.n_docs_: int = 0

    def get_params(self, deep: bool = True) -> dict:
        return {"dim": self.dim, "seed": self.seed}

    def set_params(self, **params) -> "HashingTfidfVectorizer":
        for key, value in params.items():
            if key not in ("dim", "seed"):
                raise OsldError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        self._salt = int(self.seed).to_bytes(8, "little", signed=False)
        return self

    def fit(self, texts: Iterable[str]) -> "HashingTfidfVectorizer":
        df: Counter[str] = Counter()
        n_docs = 0
        for text in texts:
            n_docs += 1
            df.update(set(normalize_tokens(text)))
        if n_docs == 0:
            raise OsldError("cannot fit featurizer on an empty corpus")
        self.n_docs_ = n_docs
        self.idf_ = {
            tok: math.log((1 + n_docs) / (1 + count)) + 1.0
            for tok, count in df.items()
        }
        return self

    def _check_fitted(self) -> dict[str, float]:
        if self.idf_ is None:
            raise OsldError("featurizer is not fitted")
        return self.idf_

    def embed(self, text: str) -> np.ndarray:
        """tf*idf accumulation into signed hash buckets, then L2 norm."""
        idf = self._check_fitted()
        vec = np.zeros(self.dim, dtype=np.float64)
        for token, count in Counter(normalize_tokens(text)).items():
            w = idf.get(token)
            if w is None:
                continue
            bucket, sign = _bucket_sign(token, self.dim, self._salt)
            vec[bucket] += sign * count * w
        norm = math.sqrt(float(vec @ vec))
        if norm > 0.0:
            vec /= norm
        return vec.astype(np.float32)

    def transform(self, texts: Sequence[str]) -> np.ndarray:
        self._check_fitted()
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        workers = min(worker_count(), len(texts))
        if workers <= 1:
            rows = [self.embed(t) for t in texts]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(self.embed, texts))
        return np.stack(rows)

    def fit_transform(self, texts: Sequence[str]) -> np.ndarray:
        return self.fit(texts).transform(texts)


def fit_featurizer(
    corpus: DocumentSet | Sequence[str], dim: int = 256, seed: int = 0
) -> HashingTfidfVectorizer:
    """Fit the built-in featurizer on a document set or raw texts."""
    texts = corpus.texts() if isinstance(corpus, DocumentSet) else list(corpus)
    return HashingTfidfVectorizer(dim=dim, seed=seed).fit(texts)


class FeaturizerBackend:
    """Documents and arbitrary texts share one hashed-TFIDF space."""

    name = "featurizer"
    embeds_text_in_document_space = True

    def __init__(self, vectorizer: HashingTfidfVectorizer):
        vectorizer._check_fitted()
        self.vectorizer = vectorizer

    @property
    def dim(self) -> int:
        return self.vectorizer.dim

    def stage_matrix(self, docset: DocumentSet) -> EmbeddingMatrix:
        data = self.vectorizer.transform(docset.texts())
        return EmbeddingMatrix(data=data, ids=docset.ids())

    def embed_text(self, text: str) -> np.ndarray:
        return self.vectorizer.embed(text)


class FileBackend:
    """Per-stage precomputed embedding files; cannot embed new text."""

    name = "file"
    embeds_text_in_document_space = False

    def __init__(self, manifest: StageManifest, embeddings_dir: str | Path | None = None):
        self.manifest = manifest
        self.embeddings_dir = Path(embeddings_dir) if embeddings_dir else None
        self._cache: dict[str, EmbeddingMatrix] = {}
        self._dim: int | None = None

    def _path_for(self, stage: str) -> Path:
        stage_path = self.manifest.stage_path(stage)
        base = self.embeddings_dir if self.embeddings_dir else stage_path.parent
        return base / f"{stage}.emb"

    @property
    def dim(self) -> int:
        if self._dim is None:
            self._dim = self.load("train").d
        return self._dim

    def load(self, stage: str) -> EmbeddingMatrix:
        if stage not in self._cache:
            self._cache[stage] = load_embeddings(self._path_for(stage))
        return self._cache[stage]

    def stage_matrix(self, docset: DocumentSet) -> EmbeddingMatrix:
        if len(docset) == 0:
            raise OsldError("empty document set")
        stage = docset[0].stage
        matrix = self.load(stage)
        if matrix.ids != docset.ids():
            raise OsldError(
                f"embedding ids for stage {stage!r} do not match the stage file"
            )
        if matrix.d != self.dim:
            raise OsldError(
                f"stage {stage!r} embeddings have d={matrix.d}, expected {self.dim}"
            )
        return matrix

    def embed_text(self, text: str):
        return None
