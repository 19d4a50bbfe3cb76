"""End-to-end orchestration of baseline and discovery runs.

A run trains the known-class head, then walks the three test stages.
Discovery stages chain energy-based outlier detection, silhouette-chosen
k-means, keyword extraction, pseudo-label selection and retraining; the
model state and the pseudo-label replay pool carry forward. Method-side
phases execute under the label guard so test gold labels are provably
out of reach until evaluation.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

import osld
from osld.adaptation import (
    V1,
    V2,
    ContrastiveConfig,
    PseudoLabeledSet,
    discovered_class_name,
    expand_head,
    retrain,
    select_pseudolabeled,
)
from osld.classifier import SoftmaxClassifier, TrainConfig
from osld.dataset import (
    TEST_STAGES,
    DocumentSet,
    StageManifest,
    hidden_label_guard,
    validate_manifest,
)
from osld.discovery import SelectKResult, select_k
from osld.embeddings import (
    EmbeddingMatrix,
    FeaturizerBackend,
    FileBackend,
    HashingTfidfVectorizer,
    write_embeddings,
)
from osld.errors import OsldError, PipelineError, ValidationFailure
from osld.evaluation import (
    EvaluationReport,
    StageMetrics,
    grouped_metrics,
    match_discovered,
)
from osld.keywords import ClusterProfile, cluster_centroid, cluster_keywords, member_centroid
from osld.openset import score_documents, split_outliers, write_energy_csv
from osld.util import child_seed

BASELINE = "baseline"
METHODS = (BASELINE, V1, V2)
BACKENDS = ("featurizer", "file")

FORMAT_VERSIONS = {
    "embedding_file": "OSLDEMB1",
    "head_checkpoint": "OSLDHED1",
    "report": 1,
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; numeric defaults are the method defaults."""

    manifest: Path
    method: str
    out_dir: Path
    backend: str = "featurizer"
    seed: int = 0
    outlier_fraction: float = 0.15
    kmin: int = 2
    kmax: int = 8
    restarts: int = 5
    keep_fraction: float = 0.40
    top_m: int = 10
    lam: float = 0.3
    tau: float = 0.07
    featurizer_dim: int = 256
    hidden_size: int | None = None
    embeddings_dir: Path | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise OsldError(f"method must be one of {METHODS}")
        if self.backend not in BACKENDS:
            raise OsldError(f"backend must be one of {BACKENDS}")
        if not 0.0 < self.outlier_fraction < 1.0:
            raise OsldError("outlier_fraction must be in (0, 1)")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise OsldError("keep_fraction must be in (0, 1]")
        if self.kmin < 2 or self.kmax < self.kmin:
            raise OsldError("need 2 <= kmin <= kmax")
        if self.top_m < 1 or self.restarts < 1:
            raise OsldError("top_m and restarts must be >= 1")
        if self.lam < 0 or self.tau <= 0:
            raise OsldError("lam must be >= 0 and tau > 0")

    def as_echo(self) -> dict:
        echo = asdict(self)
        echo["manifest"] = str(self.manifest)
        echo["out_dir"] = str(self.out_dir)
        echo["embeddings_dir"] = str(self.embeddings_dir) if self.embeddings_dir else None
        return echo


@dataclass
class StageArtifacts:
    """What one discovery stage leaves behind, for checkpointing."""

    metrics: StageMetrics
    predictions: dict[str, str]
    raw_predictions: dict[str, str]


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _labels_to_indices(docset: DocumentSet, class_order: tuple[str, ...]) -> np.ndarray:
    index = {c: i for i, c in enumerate(class_order)}
    return np.array([index[d.gold_label] for d in docset], dtype=np.int64)


class _RunDir:
    """Exclusive ownership of an output directory via a lock file."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.lock = out_dir / "LOCK"

    def __enter__(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        try:
            self.lock.touch(exist_ok=False)
        except FileExistsError:
            raise PipelineError(
                f"{self.out_dir} is locked by another run (delete LOCK if stale)"
            ) from None
        return self.out_dir

    def __exit__(self, *exc):
        self.lock.unlink(missing_ok=True)
        return False


def _build_backend(config: RunConfig, manifest: StageManifest, train_docs: DocumentSet):
    if config.backend == "featurizer":
        vectorizer = HashingTfidfVectorizer(
            dim=config.featurizer_dim, seed=config.seed
        ).fit(train_docs.texts())
        return FeaturizerBackend(vectorizer)
    return FileBackend(manifest, config.embeddings_dir)


def _write_predictions(path: Path, raw: dict[str, str], renamed: dict[str, str]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "raw_prediction", "prediction"])
        for doc_id in raw:
            writer.writerow([doc_id, raw[doc_id], renamed[doc_id]])


def run(config: RunConfig) -> EvaluationReport:
    """Execute a full run and write its artifacts; returns the report."""
    manifest = StageManifest.load(config.manifest)
    stages = manifest.load_stages()
    validation = validate_manifest(manifest, stages)
    if not validation.passed:
        raise ValidationFailure(str(validation))

    with _RunDir(Path(config.out_dir)) as out:
        _write_json(
            out / "run_record.json",
            {
                "package_version": osld.__version__,
                "format_versions": FORMAT_VERSIONS,
                "config": config.as_echo(),
                "validation": "PASS",
            },
        )
        report = _run_inner(config, manifest, stages, out)
        _write_json(out / "report.json", report.as_dict())
        (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
        return report


def _run_inner(
    config: RunConfig,
    manifest: StageManifest,
    stages: dict[str, DocumentSet],
    out: Path,
) -> EvaluationReport:
    known = manifest.known_classes
    train_docs = stages["train"]
    val_docs = stages["val"]

    backend = _build_backend(config, manifest, train_docs)
    train_cfg = replace(config.train, seed=child_seed(config.seed, 1))

    with hidden_label_guard():
        train_X = backend.stage_matrix(train_docs)
        val_X = backend.stage_matrix(val_docs)
        head = SoftmaxClassifier(
            classes=known, dim=backend.dim, hidden_size=config.hidden_size,
            seed=child_seed(config.seed, 0),
        )
        y_train = _labels_to_indices(train_docs, head.class_order)
        head.fit(train_X.data, y_train, train_cfg)

    y_val = _labels_to_indices(val_docs, head.class_order)
    val_accuracy = head.accuracy(val_X.data, y_val)
    head.save(out / "model_initial.ckpt", config.train)

    if config.method == BASELINE:
        stage_metrics = _run_baseline_stages(config, manifest, stages, backend, head, out)
    else:
        stage_metrics = _run_discovery_stages(
            config, manifest, stages, backend, head, train_X, y_train, out
        )
    return EvaluationReport(stages=stage_metrics, validation_accuracy=val_accuracy)


def run_baseline(config: RunConfig) -> EvaluationReport:
    if config.method != BASELINE:
        config = replace(config, method=BASELINE)
    return run(config)


def run_osld(config: RunConfig) -> EvaluationReport:
    if config.method not in (V1, V2):
        raise OsldError("run_osld needs method v1 or v2")
    return run(config)


def _run_baseline_stages(
    config: RunConfig,
    manifest: StageManifest,
    stages: dict[str, DocumentSet],
    backend,
    head: SoftmaxClassifier,
    out: Path,
) -> list[StageMetrics]:
    """Frozen head applied to every stage; unknown metrics are zero."""
    metrics: list[StageMetrics] = []
    for pos, stage in enumerate(TEST_STAGES, start=1):
        test_docs = stages[stage]
        with hidden_label_guard():
            X = backend.stage_matrix(test_docs.stripped())
            raw = dict(zip(X.ids, head.predict(X.data)))
        stage_dir = out / f"stage{pos}"
        stage_dir.mkdir(exist_ok=True)
        _write_predictions(stage_dir / "predictions.csv", raw, raw)
        golds = {d.id: d.gold_label for d in test_docs}
        sm = grouped_metrics(
            raw, golds, known_set=manifest.known_classes,
            stage_new_set=manifest.new_classes_at(stage), stage=stage,
        )
        metrics.append(sm)
    return metrics


def _stage_fallback_note(stage_dir: Path, reason: str) -> None:
    _write_json(stage_dir / "discovery_failure.json", {"reason": reason})


def _run_discovery_stages(
    config: RunConfig,
    manifest: StageManifest,
    stages: dict[str, DocumentSet],
    backend,
    head: SoftmaxClassifier,
    train_X: EmbeddingMatrix,
    y_train: np.ndarray,
    out: Path,
) -> list[StageMetrics]:
    known = manifest.known_classes
    replay_X: list[np.ndarray] = []
    replay_y: list[int] = []
    discovered: dict[str, list[str]] = {}  # class name -> keywords
    metrics: list[StageMetrics] = []

    for pos, stage in enumerate(TEST_STAGES, start=1):
        test_docs = stages[stage]
        stripped = test_docs.stripped()
        stage_dir = out / f"stage{pos}"
        stage_dir.mkdir(exist_ok=True)

        with hidden_label_guard():
            X = backend.stage_matrix(stripped)
            scores = score_documents(head, X)
            _, outlier_ids = split_outliers(scores, config.outlier_fraction)
            write_energy_csv(stage_dir / "energies.csv", scores, outlier_ids)

            fallback_reason = None
            discovered_k = 0
            try:
                head, _, discovered_k = _discover_and_retrain(
                    config, pos, stage_dir, stripped, X, outlier_ids,
                    head, train_X, y_train, replay_X, replay_y, backend,
                    discovered,
                )
            except OsldError as exc:
                fallback_reason = str(exc)
                _stage_fallback_note(stage_dir, fallback_reason)

            raw = dict(zip(X.ids, head.predict(X.data)))
            head.save(stage_dir / "head.ckpt", config.train)

        golds = {d.id: d.gold_label for d in test_docs}
        matching: dict[str, str] = {}
        renamed = dict(raw)
        if discovered:
            candidates = [c for c in manifest.stage_classes(stage) if c not in known]
            if candidates:
                match = match_discovered(
                    discovered, candidates,
                    dim=config.featurizer_dim, seed=child_seed(config.seed, 40, pos),
                )
                matching = match.mapping
                renamed = {i: match.rename(p) for i, p in raw.items()}
        _write_predictions(stage_dir / "predictions.csv", raw, renamed)

        sm = grouped_metrics(
            renamed, golds, known_set=known,
            stage_new_set=manifest.new_classes_at(stage), stage=stage,
        )
        sm.discovered_k = discovered_k
        sm.fallback = fallback_reason is not None
        sm.matching = matching
        metrics.append(sm)
    return metrics


def _discover_and_retrain(
    config: RunConfig,
    pos: int,
    stage_dir: Path,
    stripped: DocumentSet,
    X: EmbeddingMatrix,
    outlier_ids: list[str],
    head: SoftmaxClassifier,
    train_X: EmbeddingMatrix,
    y_train: np.ndarray,
    replay_X: list[np.ndarray],
    replay_y: list[int],
    backend,
    discovered: dict[str, list[str]],
) -> tuple[SoftmaxClassifier, PseudoLabeledSet, int]:
    """One stage of clustering, pseudo-labeling and retraining.

    Raises OsldError on any discovery failure; the caller records the
    fallback and proceeds with the unexpanded model.
    """
    if len(outlier_ids) < max(2, config.kmin):
        raise OsldError(f"only {len(outlier_ids)} outliers, cannot cluster")

    out_matrix = X.subset(sorted(outlier_ids))
    selection: SelectKResult = select_k(
        out_matrix.data,
        kmin=config.kmin,
        kmax=config.kmax,
        seed=child_seed(config.seed, 10, pos),
        restarts=config.restarts,
    )
    k = selection.k
    assignment = selection.assignment
    _write_json(
        stage_dir / "silhouette.json",
        {str(kk): selection.scores[kk] for kk in sorted(selection.scores)},
    )

    cluster_texts = []
    for j in range(k):
        members = [out_matrix.ids[i] for i in assignment.members(j)]
        cluster_texts.append([stripped.by_id(i).text for i in members])
    keyword_lists = cluster_keywords(cluster_texts, top_m=config.top_m)
    if any(not kws for kws in keyword_lists):
        raise OsldError("degenerate clustering: a cluster produced no keywords")

    profiles: list[ClusterProfile] = []
    for j in range(k):
        tokens = [tok for tok, _ in keyword_lists[j]]
        centroid = None
        source = "keywords"
        if backend.embeds_text_in_document_space:
            try:
                centroid = cluster_centroid(tokens, backend.embed_text)
            except OsldError:
                centroid = None
        if centroid is None:
            centroid = member_centroid(out_matrix.data[assignment.members(j)])
            source = "members"
        profiles.append(
            ClusterProfile(
                cluster=j,
                keywords=tuple(keyword_lists[j]),
                centroid=centroid,
                centroid_source=source,
            )
        )

    _write_json(
        stage_dir / "clusters.json",
        [
            {
                "cluster": p.cluster,
                "class_name": discovered_class_name(pos, p.cluster),
                "keywords": [[tok, score] for tok, score in p.keywords],
                "member_ids": [out_matrix.ids[i] for i in assignment.members(p.cluster)],
                "centroid_source": p.centroid_source,
                "centroid_checksum": hashlib.sha256(
                    np.ascontiguousarray(p.centroid, dtype="<f4").tobytes()
                ).hexdigest(),
            }
            for p in profiles
        ],
    )

    centroids = [p.centroid for p in profiles]
    pseudo = select_pseudolabeled(
        assignment.labels, centroids, out_matrix, keep_fraction=config.keep_fraction
    )
    with (stage_dir / "pseudolabels.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "cluster", "cosine", "kept"])
        for doc_id in out_matrix.ids:
            cluster, cosine, kept = pseudo.table[doc_id]
            writer.writerow([doc_id, cluster, repr(cosine), int(kept)])
    if pseudo.total_kept == 0:
        raise OsldError("empty pseudo-labeled set")

    new_names = [discovered_class_name(pos, j) for j in range(k)]
    expanded = expand_head(head, new_names, seed=child_seed(config.seed, 20, pos))

    parts_X = [train_X.data.astype(np.float64)]
    parts_y = list(y_train)
    if replay_X:
        parts_X.append(np.stack(replay_X))
        parts_y.extend(replay_y)
    pseudo_rows: list[np.ndarray] = []
    pseudo_labels: list[int] = []
    pseudo_assign: list[int] = []
    name_index = {c: i for i, c in enumerate(expanded.class_order)}
    row_of = {doc_id: i for i, doc_id in enumerate(out_matrix.ids)}
    for j in range(k):
        for doc_id in pseudo.kept[j]:
            pseudo_rows.append(out_matrix.data[row_of[doc_id]].astype(np.float64))
            pseudo_labels.append(name_index[new_names[j]])
            pseudo_assign.append(j)
    parts_X.append(np.stack(pseudo_rows))
    parts_y.extend(pseudo_labels)

    X_all = np.vstack(parts_X)
    y_all = np.array(parts_y, dtype=np.int64)
    n_before = X_all.shape[0] - len(pseudo_rows)
    cl_rows = np.zeros(X_all.shape[0], dtype=bool)
    cl_rows[n_before:] = True
    cl_assign = np.zeros(X_all.shape[0], dtype=np.int64)
    cl_assign[n_before:] = np.array(pseudo_assign, dtype=np.int64)

    retrain(
        expanded,
        X_all,
        y_all,
        method=config.method,
        config=replace(config.train, seed=child_seed(config.seed, 30, pos)),
        contrastive=ContrastiveConfig(lam=config.lam, tau=config.tau),
        contrastive_rows=cl_rows,
        contrastive_assignments=cl_assign,
        centroids=np.stack([np.asarray(c, dtype=np.float64) for c in centroids]),
    )

    for j, name in enumerate(new_names):
        discovered[name] = [tok for tok, _ in keyword_lists[j]]
    for row, label in zip(pseudo_rows, pseudo_labels):
        replay_X.append(row)
        replay_y.append(label)
    return expanded, pseudo, k


def recompute_report(run_dir: str | Path) -> EvaluationReport:
    """Rebuild stage metrics from stored predictions and verify the report.

    Raises PipelineError if the stored report disagrees with the
    recomputation.
    """
    run_dir = Path(run_dir)
    record_path = run_dir / "run_record.json"
    report_path = run_dir / "report.json"
    if not record_path.is_file() or not report_path.is_file():
        raise PipelineError(f"{run_dir} does not look like a run directory")
    record = json.loads(record_path.read_text(encoding="utf-8"))
    stored = json.loads(report_path.read_text(encoding="utf-8"))
    manifest = StageManifest.load(record["config"]["manifest"])
    stages = manifest.load_stages()

    rebuilt: list[StageMetrics] = []
    for pos, stage in enumerate(TEST_STAGES, start=1):
        pred_path = run_dir / f"stage{pos}" / "predictions.csv"
        if not pred_path.is_file():
            raise PipelineError(f"missing predictions for stage {stage}")
        renamed: dict[str, str] = {}
        with pred_path.open(encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                renamed[row["id"]] = row["prediction"]
        golds = {d.id: d.gold_label for d in stages[stage]}
        sm = grouped_metrics(
            renamed, golds, known_set=manifest.known_classes,
            stage_new_set=manifest.new_classes_at(stage), stage=stage,
        )
        stored_stage = stored["stages"][pos - 1]
        sm.discovered_k = stored_stage["discovered_k"]
        sm.fallback = stored_stage["fallback"]
        sm.matching = dict(stored_stage["matching"])
        rebuilt.append(sm)

    report = EvaluationReport(
        stages=rebuilt, validation_accuracy=stored["validation_accuracy"]
    )
    if report.as_dict() != stored:
        raise PipelineError("stored report disagrees with recomputed metrics")
    return report


def load_report(run_dir: str | Path) -> dict:
    path = Path(run_dir) / "report.json"
    if not path.is_file():
        raise PipelineError(f"no report.json under {run_dir}")
    return json.loads(path.read_text(encoding="utf-8"))


def featurize_manifest(
    manifest_path: str | Path, dim: int, out_dir: str | Path, seed: int = 0
) -> list[Path]:
    """Fit the featurizer on the train stage and export one file per stage."""
    manifest = StageManifest.load(manifest_path)
    stages = manifest.load_stages()
    validation = validate_manifest(manifest, stages)
    if not validation.passed:
        raise ValidationFailure(str(validation))
    vectorizer = HashingTfidfVectorizer(dim=dim, seed=seed).fit(stages["train"].texts())
    backend = FeaturizerBackend(vectorizer)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for stage, docset in stages.items():
        matrix = backend.stage_matrix(docset)
        path = out / f"{stage}.emb"
        write_embeddings(matrix, path)
        written.append(path)
    return written
