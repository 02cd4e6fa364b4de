"""``vvo`` command line entry point."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click
import torch

from . import analysis, harness, plotting, scenegen
from .tensorio import RunConfig


def _config(path) -> RunConfig:
    return RunConfig.load(path)


def _dump(payload: dict, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log training progress.")
def main(verbose):
    """Object-centric learning with a shared, vector-quantized target."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    torch.set_num_threads(1)


@main.command("gen-data")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
def gen_data(out, config, seed):
    """Write train/ and val/ sprite splits."""
    cfg = _config(config)
    scenegen.generate_dataset(out, cfg, seed)
    click.echo(f"wrote {cfg['n_train']} train and {cfg['n_val']} val scenes to {out}")


@main.command("pretrain-vq")
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def pretrain_vq(config, out):
    """Pretrain the quantizer on data_dir/train."""
    cfg = _config(config)
    harness.run_pretrain(cfg, out)
    meta = json.loads((Path(out) / harness.META).read_text())
    click.echo(json.dumps(meta, sort_keys=True))


@main.command()
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False))
@click.option("--pretrain", "pretrain_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def train(config, pretrain_dir, out):
    """Train aggregator and decoder on top of a pretrain checkpoint."""
    cfg = _config(config)
    result = harness.run_train(cfg, pretrain_dir, out)
    if result["log"]:
        click.echo(json.dumps(result["log"][-1], sort_keys=True))


@main.command("eval")
@click.option("--ckpt", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--split", default="val", show_default=True)
@click.option("--json", "json_path", type=click.Path(dir_okay=False))
@click.option("--dump", "dump_dir", type=click.Path(file_okay=False), help="Also write masks for `vvo plot`.")
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), help="Override data_dir.")
def eval_(ckpt, split, json_path, dump_dir, data_dir):
    """Segmentation metrics of a checkpoint."""
    scores = harness.run_eval(ckpt, split, json_path, dump_dir=dump_dir, data_dir=data_dir)
    click.echo(json.dumps(scores, sort_keys=True))


@main.command()
@click.option("--which", required=True, type=click.Choice(["p2", "bias", "objectness"]))
@click.option("--json", "json_path", required=True, type=click.Path(dir_okay=False))
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False))
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
def analyze(which, json_path, svg_path, config, seed):
    """Monte Carlo and feature-space checks of why shared targets help."""
    if which == "p2":
        result = analysis.p2_experiment(metric=_config(config)["distance"])
    elif which == "bias":
        result = analysis.bias_experiment(seed=seed)
    else:
        result = harness.objectness_experiment(_config(config), seed=seed)
    _dump(result, json_path)
    if svg_path:
        plotting.plot_analysis(which, result, svg_path)
    click.echo(f"wrote {json_path}" + (f" and {svg_path}" if svg_path else ""))


@main.command()
@click.option("--masks", "mask_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--limit", type=int, help="Plot at most this many samples.")
def plot(mask_dir, out, limit):
    """Image / truth / prediction panels from an `eval --dump` directory."""
    written = plotting.plot_masks(mask_dir, out, limit)
    click.echo(f"wrote {len(written)} files to {out}")


if __name__ == "__main__":
    main()
