"""Staged benchmark loading and validation.

A benchmark is a manifest plus five JSON-lines stage files (train, val,
test1..test3). Class sets grow monotonically across the three test
stages; train and val carry only the initially known classes.

Stage file format: UTF-8 JSON lines, one object per line with string
fields ``id``, ``text`` and ``label``. No BOM; LF and CRLF both accepted.
"""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from osld.errors import DatasetError, LabelLeakError

STAGES = ("train", "val", "test1", "test2", "test3")
TEST_STAGES = ("test1", "test2", "test3")

_guard = threading.local()


@contextmanager
def hidden_label_guard():
    """Forbid gold-label access on test documents inside the block.

    The pipeline wraps every method-side phase (training, detection,
    discovery, retraining, prediction) in this guard so that a code path
    accidentally reading a test label fails loudly instead of leaking
    supervision. Train/val labels stay readable.
    """
    prev = getattr(_guard, "active", False)
    _guard.active = True
    try:
        yield
    finally:
        _guard.active = prev


def _guard_active() -> bool:
    return getattr(_guard, "active", False)


@dataclass(frozen=True)
class Document:
    """One benchmark record; ``gold_label`` is guarded for test stages."""

    id: str
    text: str
    stage: str
    label: str | None = field(default=None, repr=False)

    @property
    def gold_label(self) -> str | None:
        if self.stage in TEST_STAGES and _guard_active():
            raise LabelLeakError(
                f"gold label of test document {self.id!r} accessed inside a method phase"
            )
        return self.label

    def stripped(self) -> "Document":
        return Document(id=self.id, text=self.text, stage=self.stage, label=None)


class DocumentSet:
    """Immutable ordered collection of documents with an id index."""

    def __init__(self, documents: Sequence[Document]):
        self._documents = tuple(documents)
        index: dict[str, int] = {}
        for pos, doc in enumerate(self._documents):
            if doc.id in index:
                raise DatasetError(f"duplicate document id {doc.id!r}")
            index[doc.id] = pos
        self._index = index

    def __len__(self) -> int:
        return len(self._documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._documents)

    def __getitem__(self, pos: int) -> Document:
        return self._documents[pos]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DocumentSet):
            return NotImplemented
        return self._documents == other._documents

    def __hash__(self):
        return hash(self._documents)

    @property
    def documents(self) -> tuple[Document, ...]:
        return self._documents

    def by_id(self, doc_id: str) -> Document:
        return self._documents[self._index[doc_id]]

    def position(self, doc_id: str) -> int:
        return self._index[doc_id]

    def ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self._documents)

    def texts(self) -> list[str]:
        return [d.text for d in self._documents]

    def gold_labels(self) -> dict[str, str | None]:
        """Id-to-gold mapping; raises under the label guard for test docs."""
        return {d.id: d.gold_label for d in self._documents}

    def stripped(self) -> "DocumentSet":
        """Label-free view handed to method code paths."""
        return DocumentSet([d.stripped() for d in self._documents])


def _parse_record(raw: str, line_no: int, stage: str) -> Document:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise DatasetError(f"line {line_no}: record is not a JSON object")
    for key in ("id", "text", "label"):
        if key not in obj:
            raise DatasetError(f"line {line_no}: missing required field {key!r}")
        if not isinstance(obj[key], str):
            raise DatasetError(f"line {line_no}: field {key!r} is not a string")
    if not obj["text"].strip():
        raise DatasetError(f"line {line_no}: empty text for id {obj['id']!r}")
    if not obj["id"]:
        raise DatasetError(f"line {line_no}: empty id")
    return Document(id=obj["id"], text=obj["text"], stage=stage, label=obj["label"])


def load_stage(path: str | Path, expected_stage: str) -> DocumentSet:
    """Load one stage file, preserving file order.

    Raises :class:`DatasetError` naming the offending line for malformed
    records, empty text, and duplicate ids (both line numbers reported).
    """
    if expected_stage not in STAGES:
        raise DatasetError(f"unknown stage {expected_stage!r}")
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"stage file not found: {path}")
    data = path.read_bytes()
    if data.startswith(b"\xef\xbb\xbf"):
        raise DatasetError(f"{path}: BOM not allowed in stage files")
    text = data.decode("utf-8")

    documents: list[Document] = []
    seen: dict[str, int] = {}
    for line_no, raw in enumerate(text.split("\n"), start=1):
        raw = raw.rstrip("\r")
        if not raw.strip():
            continue
        doc = _parse_record(raw, line_no, expected_stage)
        if doc.id in seen:
            raise DatasetError(
                f"duplicate id {doc.id!r} at lines {seen[doc.id]} and {line_no}"
            )
        seen[doc.id] = line_no
        documents.append(doc)
    return DocumentSet(documents)


def write_stage(docset: DocumentSet, path: str | Path) -> None:
    """Write a stage file in the canonical JSON-lines layout."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for doc in docset:
            fh.write(
                json.dumps(
                    {"id": doc.id, "text": doc.text, "label": doc.label},
                    ensure_ascii=False,
                    sort_keys=True,
                )
            )
            fh.write("\n")


@dataclass(frozen=True)
class StageEntry:
    name: str
    path: str
    classes: tuple[str, ...]


@dataclass(frozen=True)
class StageManifest:
    """Benchmark manifest: stage files plus their class sets."""

    known_classes: tuple[str, ...]
    stages: tuple[StageEntry, ...]
    language: str
    seed: int
    root: Path

    @classmethod
    def load(cls, path: str | Path) -> "StageManifest":
        path = Path(path)
        if not path.is_file():
            raise DatasetError(f"manifest not found: {path}")
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"manifest {path}: malformed JSON ({exc.msg})") from exc
        for key in ("known_classes", "stages", "language", "seed"):
            if key not in obj:
                raise DatasetError(f"manifest {path}: missing field {key!r}")
        entries = []
        for item in obj["stages"]:
            for key in ("name", "path", "classes"):
                if key not in item:
                    raise DatasetError(f"manifest {path}: stage entry missing {key!r}")
            entries.append(
                StageEntry(
                    name=item["name"],
                    path=item["path"],
                    classes=tuple(item["classes"]),
                )
            )
        names = [e.name for e in entries]
        if names != list(STAGES):
            raise DatasetError(
                f"manifest {path}: stages must be {list(STAGES)}, got {names}"
            )
        return cls(
            known_classes=tuple(obj["known_classes"]),
            stages=tuple(entries),
            language=str(obj["language"]),
            seed=int(obj["seed"]),
            root=path.parent,
        )

    def entry(self, name: str) -> StageEntry:
        for e in self.stages:
            if e.name == name:
                return e
        raise DatasetError(f"no stage named {name!r} in manifest")

    def stage_path(self, name: str) -> Path:
        p = Path(self.entry(name).path)
        return p if p.is_absolute() else self.root / p

    def stage_classes(self, name: str) -> tuple[str, ...]:
        return self.entry(name).classes

    def load_stages(self) -> dict[str, DocumentSet]:
        return {name: load_stage(self.stage_path(name), name) for name in STAGES}

    def new_classes_at(self, test_stage: str) -> tuple[str, ...]:
        """Classes introduced by ``test_stage`` (not present earlier)."""
        idx = TEST_STAGES.index(test_stage)
        prev = set(self.known_classes if idx == 0 else self.stage_classes(TEST_STAGES[idx - 1]))
        return tuple(c for c in self.stage_classes(test_stage) if c not in prev)


@dataclass
class ValidationReport:
    """FAIL entries collected by :func:`validate_manifest`; empty means PASS."""

    entries: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.entries

    def add(self, message: str) -> None:
        self.entries.append(message)

    def __str__(self) -> str:
        if self.passed:
            return "PASS"
        return "FAIL\n" + "\n".join(f"  - {e}" for e in self.entries)


def validate_manifest(
    manifest: StageManifest, stages: Mapping[str, DocumentSet]
) -> ValidationReport:
    """Check the monotone class chain and per-file label membership.

    Violations become report entries, never exceptions.
    """
    report = ValidationReport()

    all_names = list(manifest.known_classes)
    for entry in manifest.stages:
        all_names.extend(entry.classes)
    for entry in manifest.stages:
        if len(set(entry.classes)) != len(entry.classes):
            report.add(f"duplicate class names in stage {entry.name!r}")
    if len(set(manifest.known_classes)) != len(manifest.known_classes):
        report.add("duplicate class names in known_classes")

    chain = [set(manifest.known_classes)] + [
        set(manifest.stage_classes(s)) for s in TEST_STAGES
    ]
    for i in range(1, len(chain)):
        if not chain[i - 1] <= chain[i]:
            report.add(f"monotonicity violated at stage {i}")

    known = set(manifest.known_classes)
    for name in ("train", "val"):
        docset = stages.get(name)
        if docset is None:
            report.add(f"stage {name!r} not loaded")
            continue
        for doc in docset:
            if doc.gold_label not in known:
                report.add(
                    f"stage {name!r}: label {doc.gold_label!r} of {doc.id!r} "
                    "outside known_classes"
                )
                break
    for name in TEST_STAGES:
        docset = stages.get(name)
        if docset is None:
            report.add(f"stage {name!r} not loaded")
            continue
        allowed = set(manifest.stage_classes(name))
        for doc in docset:
            if doc.gold_label not in allowed:
                report.add(
                    f"stage {name!r}: label {doc.gold_label!r} of {doc.id!r} "
                    "outside the stage class set"
                )
                break
    return report
