"""Command-line entry points: train, evaluate, synth-data, serve-demo."""

from __future__ import annotations

import sys

import click

from .errors import MomentKitError


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Moment retrieval / highlight detection toolkit."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Training YAML config.")
@click.option("--resume", "resume_from", default=None,
              type=click.Path(exists=True), help="Checkpoint to resume from.")
def train(config_path, resume_from):
    """Train a model from a YAML config."""
    from .train_config import load_config
    from .training import train_run

    try:
        config = load_config(config_path)
        ckpt_path, runlog = train_run(config, resume_from=resume_from)
    except MomentKitError as exc:
        _fail(exc)
    last = runlog.records[-1]
    click.echo(f"trained {last['epoch']} epochs, final loss "
               f"{last['losses']['total']:.4f}, checkpoint {ckpt_path}")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Eval YAML config.")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--split", default="val", type=click.Choice(["val", "train"]))
def evaluate(config_path, checkpoint, split):
    """Evaluate a checkpoint and write the metric report."""
    from .train_config import load_config
    from .training import evaluate_run

    try:
        config = load_config(config_path)
        report = evaluate_run(config, checkpoint, split=split)
    except MomentKitError as exc:
        _fail(exc)
    click.echo(report.to_text(), nl=False)


@main.command("synth-data")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="Synthetic dataset YAML spec.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth_data(spec_path, out_dir):
    """Generate a planted-signal synthetic dataset with features."""
    from .synthetic import write_synthetic_dataset
    from .train_config import load_synth_config

    try:
        spec, seed, splits = load_synth_config(spec_path)
        manifest = write_synthetic_dataset(spec, seed, out_dir, splits)
    except MomentKitError as exc:
        _fail(exc)
    split_desc = ", ".join(f"{k}={v}" for k, v in manifest["splits"].items())
    click.echo(f"wrote synthetic dataset to {out_dir} ({split_desc})")


@main.command("serve-demo")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Server YAML config.")
@click.option("--port", default=8000, type=int)
@click.option("--host", default="127.0.0.1")
def serve_demo(config_path, port, host):
    """Start the demo HTTP backend."""
    import uvicorn

    from .server import build_app_from_config

    try:
        app = build_app_from_config(config_path)
    except MomentKitError as exc:
        _fail(exc)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
