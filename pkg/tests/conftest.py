import json
from pathlib import Path

import pytest

from osld.dataset import DocumentSet, Document


def make_stage_file(path: Path, records: list[dict]) -> Path:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return path


def make_docset(stage: str, rows: list[tuple[str, str, str]]) -> DocumentSet:
    return DocumentSet(
        [Document(id=i, text=t, stage=stage, label=lab) for i, t, lab in rows]
    )


@pytest.fixture
def tiny_benchmark(tmp_path: Path) -> Path:
    """Hand-rolled two-known-class benchmark with one new class per stage."""
    known = ["alpha", "beta"]
    chains = {
        "train": known,
        "val": known,
        "test1": known + ["gamma"],
        "test2": known + ["gamma", "delta"],
        "test3": known + ["gamma", "delta", "epsilon"],
    }
    texts = {
        "alpha": "alpha apples axle {n}",
        "beta": "beta bats bounce {n}",
        "gamma": "gamma gulls gleam {n}",
        "delta": "delta dunes drift {n}",
        "epsilon": "epsilon echoes ember {n}",
    }
    counts = {"train": 6, "val": 2, "test1": 4, "test2": 4, "test3": 4}
    for stage, classes in chains.items():
        rows = []
        for cls in classes:
            for n in range(counts[stage]):
                rows.append(
                    {
                        "id": f"{stage}-{cls}-{n}",
                        "text": texts[cls].format(n=n),
                        "label": cls,
                    }
                )
        make_stage_file(tmp_path / f"{stage}.jsonl", rows)
    manifest = {
        "known_classes": known,
        "stages": [
            {"name": s, "path": f"{s}.jsonl", "classes": chains[s]}
            for s in ("train", "val", "test1", "test2", "test3")
        ],
        "language": "en",
        "seed": 0,
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path
