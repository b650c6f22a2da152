"""Standalone commands: train from a spec JSON, predict from a checkpoint,
export a layer spec for external receptive-field checks.

Exit codes mirror the dataset CLI: 0 success, 2 spec error, 3 data error,
4 guard violation.
"""
from __future__ import annotations

import functools
import json
import sys

import click

from .errors import DataError, GuardError, HarnessError, SpecError
from .models import ARCHITECTURES, make_model
from .predict import predict_sets
from .spec import TrainSpec
from .train import train as run_train


def _exit_code(err: HarnessError) -> int:
    if isinstance(err, SpecError):
        return 2
    if isinstance(err, DataError):
        return 3
    if isinstance(err, GuardError):
        return 4
    return 1


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HarnessError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(_exit_code(e))
    return wrapper


@click.group()
def main():
    """Train segmentation UNets on generated datasets and emit predictions
    in the exchange format."""


@main.command("train")
@click.argument("spec_file", type=click.Path(exists=True, dir_okay=False))
@handle_errors
def train_cmd(spec_file):
    """Run one training spec end to end (train, checkpoint, predictions)."""
    spec = TrainSpec.from_file(spec_file)
    log = run_train(spec)
    click.echo(f"{log['arch']} ({log['optimizer']}): "
               f"{log['epochs_run']}/{log['epochs_requested']} epochs, "
               f"best val IOU "
               f"{log['best_val_iou'] if log['best_val_iou'] is not None else 'n/a'}")
    for name, count in log["predictions"].items():
        click.echo(f"wrote {count} predictions for {name}")


@main.command("predict")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("datasets", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_root", required=True, type=click.Path())
@handle_errors
def predict_cmd(checkpoint, datasets, out_root):
    """Write prediction directories (one per dataset) under --out."""
    counts = predict_sets(checkpoint, list(datasets), out_root)
    for name, count in counts.items():
        click.echo(f"wrote {count} predictions for {name}")


@main.command("export-spec")
@click.argument("arch", type=click.Choice(list(ARCHITECTURES)))
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the layer-spec JSON here instead of stdout.")
@handle_errors
def export_spec_cmd(arch, out_path):
    """Layer spec of an architecture, for receptive-field verification."""
    payload = json.dumps(make_model(arch).layer_spec(), indent=2)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(payload + "\n")
    else:
        click.echo(payload)


if __name__ == "__main__":
    main()
