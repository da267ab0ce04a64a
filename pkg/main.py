import json
import logging
import sys
from pathlib import Path

import click

import config
from experiments import (
    run_experiments,
    run_rate_adaptation_experiment,
    validate_config,
    validate_rate_adaptation_config,
)
from streaming.catalog import CatalogSpec, synthesize_catalog
from streaming.errors import ConfigError
from utils import read_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def _report_invalid(error):
    logger.error(f"Invalid configuration ({len(error.issues)} issue(s))")
    for issue in error.issues:
        click.echo(issue, err=True)


def _guarded(action):
    """Run `action` and map failures onto the exit codes."""
    try:
        action()
    except ConfigError as e:
        _report_invalid(e)
        sys.exit(EXIT_INVALID)
    except Exception as e:
        logger.error(f"Run failed: {str(e)}")
        sys.exit(EXIT_RUNTIME)
    sys.exit(EXIT_OK)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log per-segment decisions.")
def cli(verbose):
    """Tile-based 360-degree adaptive streaming simulator."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, config.LOG_LEVEL, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )


@cli.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", default=None, help="Output directory (default: the config's output_dir).")
@click.option("--seed", default=None, type=click.IntRange(min=0), help="Base seed; replicate r uses seed + r.")
@click.option("--jobs", default=None, type=click.IntRange(min=1), help="Concurrent sessions.")
def run_command(config_path, out_dir, seed, jobs):
    """Run the method x switch-probability x replicate grid."""
    def action():
        cfg = validate_config(config_path)
        written = run_experiments(cfg, out_dir=out_dir, seed=seed, jobs=jobs)
        click.echo(f"Aggregate table: {written['aggregate']}")
        click.echo(f"Summary: {written['summary']}")

    _guarded(action)


@cli.command("validate")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
def validate_command(config_path):
    """Check an experiment config and print it with every default filled in."""
    def action():
        cfg = validate_config(config_path)
        click.echo(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))

    _guarded(action)


@cli.command("synth-catalog")
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=config.DEFAULT_SEED, show_default=True, type=click.IntRange(min=0))
def synth_catalog_command(spec_path, out_path, seed):
    """Draw a synthetic R-D catalog and save it as JSON."""
    def action():
        try:
            spec = CatalogSpec.from_dict(read_json(spec_path))
        except (TypeError, ValueError, AttributeError) as e:
            raise ConfigError([f"$: {e}"]) from e
        catalog = synthesize_catalog(spec, seed)
        catalog.save(out_path)
        click.echo(f"Catalog written to {out_path}")

    _guarded(action)


@cli.command("rate-adaptation")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", default=config.DEFAULT_OUTPUT_DIR, show_default=True)
def rate_adaptation_command(config_path, out_dir):
    """Compare BQA, QFA and BFA on an untiled stream over one channel."""
    def action():
        cfg = validate_rate_adaptation_config(config_path)
        summary = run_rate_adaptation_experiment(cfg, Path(out_dir))
        for name, stats in summary["policies"].items():
            click.echo(f"{name}: {stats['switches']} switches, mean bitrate {stats['mean_bitrate_kbps']:.0f} kbps, "
                       f"mean buffer {stats['mean_buffer_s']:.2f}s, stall {stats['total_stall_s']:.2f}s")

    _guarded(action)


if __name__ == '__main__':
    cli()
