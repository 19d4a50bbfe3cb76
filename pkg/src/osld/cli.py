"""Command-line interface.

Exit codes: 0 on success, 1 on manifest validation failure, 2 on any
other runtime error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from osld.classifier import TrainConfig
from osld.dataset import StageManifest, validate_manifest
from osld.errors import OsldError, ValidationFailure
from osld.pipeline import (
    BACKENDS,
    METHODS,
    RunConfig,
    featurize_manifest,
    load_report,
    recompute_report,
)
from osld.pipeline import run as run_pipeline
from osld.synthbench import SynthSpec, generate


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(1 if isinstance(exc, ValidationFailure) else 2)


@click.group()
def main() -> None:
    """Open-set learning and discovery over staged text benchmarks."""


@main.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def validate(manifest: Path) -> None:
    """Validate a benchmark manifest and its stage files."""
    try:
        mf = StageManifest.load(manifest)
        report = validate_manifest(mf, mf.load_stages())
    except OsldError as exc:
        _fail(exc)
        return
    click.echo(str(report))
    if not report.passed:
        sys.exit(1)


@main.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--dim", default=256, show_default=True, help="Featurizer dimension.")
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path),
              help="Directory receiving one <stage>.emb file per stage.")
@click.option("--seed", default=0, show_default=True)
def featurize(manifest: Path, dim: int, out_dir: Path, seed: int) -> None:
    """Export hashed-TFIDF embeddings for every stage of a benchmark."""
    try:
        written = featurize_manifest(manifest, dim=dim, out_dir=out_dir, seed=seed)
    except OsldError as exc:
        _fail(exc)
        return
    for path in written:
        click.echo(str(path))


@main.command(name="run")
@click.option("--manifest", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--method", required=True, type=click.Choice(METHODS))
@click.option("--backend", default="featurizer", show_default=True,
              type=click.Choice(BACKENDS))
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", default=0, show_default=True)
@click.option("--embeddings", "embeddings_dir", default=None,
              type=click.Path(file_okay=False, path_type=Path),
              help="Directory holding <stage>.emb files (file backend).")
@click.option("--outlier-fraction", default=0.15, show_default=True)
@click.option("--keep-fraction", default=0.40, show_default=True)
@click.option("--kmin", default=2, show_default=True)
@click.option("--kmax", default=8, show_default=True)
@click.option("--top-m", default=10, show_default=True)
@click.option("--lam", default=0.3, show_default=True,
              help="Contrastive weight (v2 only).")
@click.option("--tau", default=0.07, show_default=True,
              help="Contrastive temperature (v2 only).")
@click.option("--featurizer-dim", default=256, show_default=True)
@click.option("--hidden-size", default=None, type=int,
              help="Optional tanh hidden layer width for the head.")
@click.option("--epochs", default=5, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--learning-rate", default=1e-2, show_default=True)
@click.option("--finetune-profile", is_flag=True,
              help="Use transformer fine-tuning optimizer settings (lr 2e-5).")
def run_cmd(
    manifest: Path,
    method: str,
    backend: str,
    out_dir: Path,
    seed: int,
    embeddings_dir: Path | None,
    outlier_fraction: float,
    keep_fraction: float,
    kmin: int,
    kmax: int,
    top_m: int,
    lam: float,
    tau: float,
    featurizer_dim: int,
    hidden_size: int | None,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    finetune_profile: bool,
) -> None:
    """Run the baseline or a discovery method over all three test stages."""
    if finetune_profile:
        train = TrainConfig.finetune_defaults()
    else:
        train = TrainConfig(
            learning_rate=learning_rate, epochs=epochs, batch_size=batch_size
        )
    try:
        config = RunConfig(
            manifest=manifest,
            method=method,
            backend=backend,
            out_dir=out_dir,
            seed=seed,
            embeddings_dir=embeddings_dir,
            outlier_fraction=outlier_fraction,
            keep_fraction=keep_fraction,
            kmin=kmin,
            kmax=kmax,
            top_m=top_m,
            lam=lam,
            tau=tau,
            featurizer_dim=featurizer_dim,
            hidden_size=hidden_size,
            train=train,
        )
        report = run_pipeline(config)
    except OsldError as exc:
        _fail(exc)
        return
    click.echo(report.to_table())


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
def evaluate(run_dir: Path) -> None:
    """Recompute metrics from stored predictions and verify the report."""
    try:
        report = recompute_report(run_dir)
    except OsldError as exc:
        _fail(exc)
        return
    click.echo(report.to_table())


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--format", "fmt", default="table", show_default=True,
              type=click.Choice(["json", "table"]))
def report(run_dir: Path, fmt: str) -> None:
    """Print a stored run report."""
    try:
        if fmt == "json":
            click.echo(json.dumps(load_report(run_dir), indent=2, sort_keys=True))
        else:
            text = (Path(run_dir) / "report.txt").read_text(encoding="utf-8")
            click.echo(text, nl=False)
    except (OsldError, OSError) as exc:
        _fail(exc)


@main.command()
@click.option("--spec", "spec_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON file overriding generator defaults.")
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
def synth(spec_path: Path | None, out_dir: Path) -> None:
    """Generate a deterministic synthetic staged benchmark."""
    try:
        spec = SynthSpec.from_json(spec_path) if spec_path else SynthSpec()
        manifest_path = generate(spec, out_dir)
    except OsldError as exc:
        _fail(exc)
        return
    click.echo(str(manifest_path))


if __name__ == "__main__":
    main()
