"""Command line entry points."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import click

from ..diffcore.checkpoint import load_checkpoint, save_checkpoint
from ..pruning import compute_prune_indicator, load_guidance_pairs, save_indicator
from ..synthdata import generate_dataset, load_dataset, write_dataset
from ..trainer import EmbeddingCache, evaluate, train_discriminator, train_stage_one
from .configio import (
    dataset_from_dict,
    load_config_document,
    load_experiment_config,
)
from .experiments import desk_grid, run_experiment, run_seed
from .tables import export_table


@click.group()
def main():
    """Desk-scale background-robust training laboratory."""


@main.command("gen-data")
@click.argument("config_file", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="override the spec seed")
@click.option("--out-dir", type=click.Path(), required=True)
def gen_data(config_file, seed, out_dir):
    """Render a synthetic dataset (CONFIG_FILE holds a dataset spec)."""
    doc = load_config_document(config_file)
    spec = dataset_from_dict(doc.get("dataset", doc))
    if seed is not None:
        spec = replace(spec, seed=seed)
    samples = generate_dataset(spec)
    manifest = write_dataset(out_dir, spec, samples)
    click.echo(f"wrote {len(samples)} samples to {manifest}")


@main.command("train")
@click.argument("config_file", type=click.Path(exists=True))
@click.option("--seed", type=int, default=0, help="run seed")
@click.option("--out-dir", type=click.Path(), required=True)
def train(config_file, seed, out_dir):
    """Run one experiment seed; write checkpoint, trace, and result."""
    config = load_experiment_config(config_file)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_seed(config, seed)
    (out / "result.json").write_text(json.dumps({
        "name": config.name, "method": config.method, "seed": seed,
        "accuracy": None if result.error else result.accuracy,
        "pre_prune_accuracy": result.pre_prune_accuracy,
        "eliminated_count": result.eliminated_count,
        "error": result.error,
        "traces": result.traces,
    }, indent=2), encoding="utf-8")
    if result.error:
        raise click.ClickException(f"seed failed: {result.error}")
    click.echo(f"{config.name} seed {seed}: accuracy {result.accuracy:.4f}")


@main.command("train-backbone")
@click.argument("config_file", type=click.Path(exists=True))
@click.option("--seed", type=int, default=0)
@click.option("--out-dir", type=click.Path(), required=True)
def train_backbone(config_file, seed, out_dir):
    """Stage-one training only; writes a reusable parameter checkpoint."""
    from .experiments import _build_samples, _split  # shared seed plumbing
    from ..trainer import derive_seed

    config = load_experiment_config(config_file)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = _build_samples(config, seed)
    split = _split(config, samples, seed)
    cfg = replace(config.train, seed=derive_seed(seed, 0x0E9))
    params, trace = train_stage_one(split.train, split.validation, cfg,
                                    backbone_spec=config.backbone)
    save_checkpoint(params, out / "backbone.eihi")
    (out / "trace.json").write_text(json.dumps(trace.to_json_dict(), indent=2),
                                    encoding="utf-8")
    click.echo(f"checkpoint written to {out / 'backbone.eihi'}")


@main.command("prune")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--pairs", "pairs_file", type=click.Path(exists=True), required=True,
              help="guidance pairs.json")
@click.option("--out-dir", type=click.Path(), required=True)
def prune(checkpoint, pairs_file, out_dir):
    """Vote background-sensitive dimensions from stored guidance pairs."""
    params = load_checkpoint(checkpoint)
    pairs = load_guidance_pairs(pairs_file)
    indicator, _ = compute_prune_indicator(params, pairs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_indicator(out / "indicator.json", indicator)
    click.echo(f"eliminated {len(indicator.eliminated_dims())} of {indicator.dim} "
               f"dimensions -> {out / 'indicator.json'}")


@main.command("run-grid")
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="optional experiment config; default runs the built-in grid")
@click.option("--seed", "seeds", type=int, multiple=True,
              help="seeds (repeatable); default 0..4")
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--workers", type=int, default=1)
def run_grid(config_file, seeds, out_dir, workers):
    """Run the experiment grid and write reports plus tables."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed_tuple = tuple(seeds) if seeds else (0, 1, 2, 3, 4)
    if config_file:
        configs = [replace(load_experiment_config(config_file), seeds=seed_tuple)]
    else:
        configs = desk_grid(seeds=seed_tuple)
    reports = []
    for cfg in configs:
        click.echo(f"running {cfg.name} ({len(cfg.seeds)} seeds)...")
        report = run_experiment(cfg, workers=workers)
        reports.append(report)
        (out / f"{cfg.name}.json").write_text(
            json.dumps(report.to_json_dict(), indent=2), encoding="utf-8")
        accs = ", ".join(f"{a:.3f}" for a in report.accuracies)
        click.echo(f"  {cfg.name}: [{accs}] mean {report.mean_accuracy:.3f}")
    csv_text, md_text = export_table(reports)
    (out / "grid.csv").write_text(csv_text, encoding="utf-8")
    (out / "grid.md").write_text(md_text, encoding="utf-8")
    click.echo(f"tables written to {out / 'grid.csv'} and {out / 'grid.md'}")


@main.command("export")
@click.argument("report_files", nargs=-1, type=click.Path(exists=True))
@click.option("--out-dir", type=click.Path(), required=True)
def export(report_files, out_dir):
    """Re-render saved report JSON files as CSV and Markdown tables."""
    from .tables import HEADER
    import csv as _csv
    import io

    if not report_files:
        raise click.ClickException("no report files given")
    rows = []
    for f in report_files:
        doc = json.loads(Path(f).read_text(encoding="utf-8"))
        accs = [a for a in doc["per_seed_accuracy"] if a is not None]
        mean = 100.0 * sum(accs) / len(accs)
        if len(accs) > 1:
            var = sum((100.0 * a - mean) ** 2 for a in accs) / (len(accs) - 1)
            acc_text = f"{mean:.2f}±{var ** 0.5:.2f}"
        else:
            acc_text = f"{mean:.2f}"
        rows.append([doc["name"], doc["shift"], doc["method"], acc_text, str(len(accs))])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    writer.writerows(rows)
    (out / "reports.csv").write_text(buf.getvalue(), encoding="utf-8")
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(HEADER)]
    lines = ["| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |"
             for r in ([HEADER] + rows)]
    lines.insert(1, "|" + "|".join("-" * (w + 2) for w in widths) + "|")
    (out / "reports.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {out / 'reports.csv'} and {out / 'reports.md'}")


@main.command("serve")
@click.argument("config_file", type=click.Path(exists=True))
@click.option("--checkpoint", type=click.Path(exists=True), required=True,
              help="completed stage-one checkpoint")
@click.option("--seed", type=int, default=0)
@click.option("--out-dir", type=click.Path(), required=True,
              help="guidance-pair storage directory")
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
def serve(config_file, checkpoint, seed, out_dir, port, host):
    """Serve the guidance API for a completed stage-one run."""
    import uvicorn

    from .service import ServiceState, create_app
    from .experiments import _build_samples, _split
    from ..trainer import derive_seed

    config = load_experiment_config(config_file)
    samples = _build_samples(config, seed)
    split = _split(config, samples, seed)
    params = load_checkpoint(checkpoint)
    disc_cfg = replace(config.disc, seed=derive_seed(seed, 0xD15C))
    cache = EmbeddingCache()
    click.echo("training the reference discriminator on frozen embeddings...")
    disc, _ = train_discriminator(params, split.train, split.validation, disc_cfg,
                                  cache=cache)
    acc = evaluate(params, disc, None, split.test, cache=cache).accuracy
    click.echo(f"reference target accuracy: {acc:.4f}")
    state = ServiceState(samples=samples, split=split, backbone=params, disc=disc,
                         disc_config=disc_cfg, guidance_dir=Path(out_dir),
                         guidance_fill=config.guidance_fill, cache=cache)
    uvicorn.run(create_app(state), host=host, port=port)


if __name__ == "__main__":
    main()
