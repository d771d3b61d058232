#!/usr/bin/env python3
from __future__ import annotations

import sys
from pathlib import Path
from typing import Any, Optional

import click
import orjson
from loguru import logger as log

from pmnet import __version__
from pmnet.core._logging import build_logger
from pmnet.core.cli import KeyValue, confirm, non_negative_int, overrides_dict, split_choice
from pmnet.core.config import dump_config, load_config
from pmnet.core.errors import ConfigError, DatasetFormatError, PmNetError
from pmnet.core.utils._internal_utils import safe_delete
from pmnet.core.utils.chat_formatting import humanize_number
from pmnet.models.synth import GeneratorParams

EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_OTHER = 1


class PmNetGroup(click.Group):
    """Maps pmnet errors to exit codes instead of tracebacks."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except ConfigError as e:
            log.error("Configuration error: {}", e)
            ctx.exit(EXIT_CONFIG)
        except DatasetFormatError as e:
            log.error("Dataset format error: {}", e)
            ctx.exit(EXIT_DATASET)
        except PmNetError as e:
            log.error("{}: {}", type(e).__name__, e)
            ctx.exit(EXIT_OTHER)


@click.group(cls=PmNetGroup)
@click.option("--debug", is_flag=True, help="Log at DEBUG level.")
@click.version_option(__version__, prog_name="pmnet")
def cli(debug: bool) -> None:
    """Streaming phase and blocking-effectiveness recognition on synthetic procedures."""
    build_logger("DEBUG" if debug else "INFO")


@cli.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), required=True, help="Dataset directory to create.")
@click.option("--n", "n_procedures", type=int, default=50, show_default=True, callback=non_negative_int)
@click.option("--seed", type=int, default=7, show_default=True, callback=non_negative_int)
@click.option("--frames-min", type=int, default=313, show_default=True)
@click.option("--frames-max", type=int, default=726, show_default=True)
@click.option("--frames-mean", type=int, default=501, show_default=True)
@click.option("--ineffective-fraction", type=float, default=0.10, show_default=True)
@click.option("--high-rate-fps", type=float, default=3.0, show_default=True)
@click.option("--low-rate-fps", type=float, default=0.33, show_default=True)
@click.option("--image-size", type=int, default=64, show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--force", is_flag=True, help="Replace an existing non-empty directory without asking.")
def generate(out_dir: Path, workers: int, force: bool, **params: Any) -> None:
    """Generate a synthetic dataset."""
    from pydantic import ValidationError

    from pmnet.synthgen.storage import generate_dataset

    try:
        gen = GeneratorParams(**params).check()
    except ValidationError as e:
        msg = "; ".join(f"{err['loc'][0]}: {err['msg']}" for err in e.errors())
        raise ConfigError(msg) from None
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force and not confirm(f"{out_dir} is not empty. Replace it?", default=False):
            msg = f"{out_dir} is not empty (use --force to replace it)"
            raise ConfigError(msg)
        safe_delete(out_dir)
    manifest = generate_dataset(gen, out_dir, workers=workers)
    sizes = {name: len(ids) for name, ids in manifest.splits.items()}
    click.echo(f"{len(manifest.procedures)} procedures written to {out_dir} (splits {sizes})")


@cli.command()
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_file", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Flat key = value run config.")
@click.option("--set", "overrides", type=KeyValue(), multiple=True, help="Override a config key, e.g. --set epochs=3")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Best checkpoint path.")
@click.option("--epochs", type=click.IntRange(min=1), default=None)
def train(data_dir: Path, config_file: Optional[Path], overrides: tuple[tuple[str, str], ...], out: Path, epochs: Optional[int]) -> None:
    """Train a model and keep the best validation checkpoint."""
    from pmnet.engine.trainer import train as run_training

    config = load_config(config_file, overrides_dict(overrides))
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_config(config, out.with_suffix(".cfg"))
    result = run_training(config, data_dir, out, epochs=epochs)
    best = "n/a" if result.best_jaccard is None else f"{result.best_jaccard:.2f}"
    click.echo(f"best validation macro Jaccard {best}; checkpoint {out}")


@cli.command(name="eval")
@click.option("--ckpt", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True)
@click.option("--split", type=split_choice, default="test", show_default=True)
@click.option("--records", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Line-delimited metric records output.")
@click.option("--features", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write pooled clip features (.npz).")
def evaluate_cmd(ckpt: Path, data_dir: Path, split: str, records: Optional[Path], features: Optional[Path]) -> None:
    """Evaluate a checkpoint on one split."""
    from pmnet.engine.checkpoint import load_checkpoint
    from pmnet.engine.metrics import format_report, write_metric_records
    from pmnet.engine.recognizer import FeatureExport, evaluate
    from pmnet.synthgen.storage import read_dataset

    model, _ = load_checkpoint(ckpt)
    procedures = read_dataset(data_dir, split)
    export = FeatureExport() if features is not None else None
    report, _ = evaluate(model, procedures, features=export)
    click.echo(format_report(report))
    if records is not None:
        write_metric_records(report, records)
    if export is not None:
        export.save(features)
        log.info("Wrote {} clip features to {}", humanize_number(sum(len(f) for f in export.features)), features)


@cli.command()
@click.option("--ckpt", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True)
@click.option("--proc", "procedure_id", required=True)
@click.option("--truncate", type=int, default=None, callback=non_negative_int, help="Stop after this frame index.")
@click.option("--trace", "trace_file", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write the prediction trace (JSON lines).")
def stream(ckpt: Path, data_dir: Path, procedure_id: str, truncate: Optional[int], trace_file: Optional[Path]) -> None:
    """Run causal online inference over one procedure."""
    from pmnet.core.data_manager import manifest_path
    from pmnet.engine.checkpoint import load_checkpoint
    from pmnet.engine.recognizer import stream as run_stream
    from pmnet.engine.recognizer import write_trace
    from pmnet.synthgen.storage import read_manifest, read_procedure

    model, _ = load_checkpoint(ckpt)
    manifest = read_manifest(data_dir)
    try:
        entry = manifest.entry(procedure_id)
    except KeyError:
        raise DatasetFormatError(manifest_path(data_dir), f"no procedure {procedure_id!r}") from None
    trace, stats = run_stream(model, read_procedure(data_dir, entry), truncate=truncate)
    if trace_file is not None:
        write_trace(trace, trace_file)
    click.echo(orjson.dumps(stats.dict(), option=orjson.OPT_INDENT_2).decode())


@cli.command()
@click.option("--trace", "trace_file", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--csv", "csv_file", type=click.Path(dir_okay=False, path_type=Path), default=None)
def ribbon(trace_file: Path, out: Path, csv_file: Optional[Path]) -> None:
    """Draw a color-coded ribbon of labels and predictions."""
    from pmnet.engine.recognizer import read_trace
    from pmnet.engine.ribbon import export_ribbon

    png, csv_path = export_ribbon(read_trace(trace_file), None, out, csv_path=csv_file)
    click.echo(f"ribbon {png}, frames {csv_path}")


@cli.command()
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_file", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--set", "overrides", type=KeyValue(), multiple=True)
@click.option("--variant", "variants", multiple=True, help="Variant to run (repeatable): full, no_mte, no_swap, no_mask, no_ssm, no_cps, no_pooling or no_region; defaults to full, no_mte, no_ssm, no_cps.")
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=None, help="Keep each variant's best checkpoint here.")
@click.option("--epochs", type=click.IntRange(min=1), default=None)
def ablate(data_dir: Path, config_file: Optional[Path], overrides: tuple[tuple[str, str], ...], variants: tuple[str, ...], out_dir: Optional[Path], epochs: Optional[int]) -> None:
    """Seed-matched component ablations."""
    from pmnet.engine.ablation import DEFAULT_VARIANTS, format_ablation, run_ablation_on

    config = load_config(config_file, overrides_dict(overrides))
    results = run_ablation_on(config, data_dir, variants=variants or DEFAULT_VARIANTS, out_dir=out_dir, epochs=epochs)
    click.echo(format_ablation(results))


def main() -> None:
    cli(prog_name="pmnet")


if __name__ == "__main__":
    sys.exit(main())
