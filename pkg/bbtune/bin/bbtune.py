"""bbtune Command Line Interface."""
import functools
import os
import socket
from dataclasses import replace
from pathlib import Path

import click
import django
import uvicorn
from django.core.management import call_command, get_commands

# The DJANGO_SETTINGS_MODULE has to be set to allow us to access django imports
os.environ.setdefault(
    "DJANGO_SETTINGS_MODULE", "bbtune.bbtune_app.settings"
)

django.setup()

from django.conf import settings  # noqa: E402

from bbtune.exceptions import BBTuneError, ConfigError  # noqa: E402
from bbtune.experiment import bench as bench_runs  # noqa: E402
from bbtune.experiment import pipeline  # noqa: E402
from bbtune.experiment.config import load_task_config  # noqa: E402
from bbtune.experiment.report import write_report  # noqa: E402
from bbtune.oracle import service  # noqa: E402
from bbtune.oracle.fixture import make_fixture_task  # noqa: E402
from bbtune.prompting.templates import PRESETS  # noqa: E402

bbtune = click.Group(help="Derivative-free prompt tuning against black-box model oracles.")


def add_click_command(command_name):
    """
    Dynamically creates a Click command that wraps a Django management command.
    """

    @bbtune.command(name=command_name, context_settings=dict(
        ignore_unknown_options=True,
        allow_extra_args=True,
    ), add_help_option=False)
    @click.pass_context
    def command(ctx):
        call_command(command_name, *ctx.args)


# Django's own commands (test, check, ...) stay reachable through the same entry point
for command_name in get_commands().keys():
    add_click_command(command_name)


def reported(function):
    """Turn bbtune errors into a click error: message on stderr, exit status 1."""

    @functools.wraps(function)
    def wrapper(*args, **kwargs):
        try:
            return function(*args, **kwargs)
        except BBTuneError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def task_options(command):
    command = click.option("--output-dir", type=click.Path(file_okay=False),
                           help="Directory for run artifacts, overrides OutputDir.")(command)
    command = click.option("--preset", type=click.Choice(sorted(PRESETS)),
                           help="Start from the settings of a benchmark task.")(command)
    return click.argument("config_path", required=False, type=click.Path(exists=True, dir_okay=False))(command)


def load_config(config_path, preset, output_dir=None):
    if not config_path and not preset:
        raise ConfigError("config", "pass a configuration file, a --preset, or both")
    config = load_task_config(config_path, preset)
    return replace(config, output_dir=output_dir) if output_dir else config


@bbtune.command()
@task_options
@click.option("--seed", "seeds", type=int, multiple=True, help="Run once per seed instead of the configured Seed.")
@reported
def optimize(config_path, preset, output_dir, seeds):
    """Tune a prompt: demonstration search, verbalizers, then two-stage optimization."""
    config = load_config(config_path, preset, output_dir)
    for seed in seeds or (config.seed,):
        result = pipeline.optimize(config.with_seed(seed))
        final = result.manifest["final"]
        click.echo(f"seed {seed}: {final['calls']} calls, val_accuracy {final['val_accuracy']:.4f}, "
                   f"val_loss {final['val_loss']:.4f} -> {result.run_dir}")


@bbtune.command()
@click.argument("suite")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), help="CSV path, under OUTPUT_DIR by default.")
@reported
def bench(suite, seed, output):
    """Run CMA-ES and COBYLA on a test-function suite (sphere, rosenbrock, rastrigin)."""
    output = output or Path(settings.OUTPUT_DIR) / f"bench_{suite}_{seed}.csv"
    frame = bench_runs.write_bench(suite, seed, output)
    for optimizer, group in frame.groupby("optimizer", sort=False):
        click.echo(f"{optimizer}: best_f {group['best_f'].iloc[-1]:.6g} after {group['evals'].iloc[-1]} evals")
    click.echo(f"written to {output}")


@bbtune.group()
def verbalizer():
    """Verbalizer files."""


@verbalizer.command(name="build")
@task_options
@click.option("--output", type=click.Path(dir_okay=False), help="JSON path, under OutputDir by default.")
@reported
def build_verbalizer(config_path, preset, output_dir, output):
    """Assemble manual, TF-IDF and oracle-ranked label words into a verbalizer file."""
    config = load_config(config_path, preset, output_dir)
    output = output or Path(config.output_dir) / "verbalizers.json"
    verbalizers = pipeline.write_verbalizers(config, output)
    for c, tokens in enumerate(verbalizers.classes):
        click.echo(f"class {c}: {' '.join(tokens)}")
    click.echo(f"written to {output}")


@bbtune.command(name="demo-search")
@task_options
@click.option("--output", type=click.Path(dir_okay=False), help="CSV path, under OutputDir by default.")
@reported
def demo_search(config_path, preset, output_dir, output):
    """Score every training example as the demonstration and report the best."""
    config = load_config(config_path, preset, output_dir)
    output = output or Path(config.output_dir) / "demonstrations.csv"
    search = pipeline.write_demonstration_search(config, output)
    best = search.scores[search.demonstration.index]
    click.echo(f"demonstration {best.index}: val_accuracy {best.accuracy:.4f}, loss {best.loss:.4f}")
    click.echo(" ".join(search.demonstration.tokens))


@bbtune.command()
@click.argument("run_dir", type=click.Path(file_okay=False))
@reported
def report(run_dir):
    """Summarize runs over seeds (mean ± std) and write call-aligned curves."""
    summary, curves = write_report(run_dir)
    for _, row in summary.iterrows():
        click.echo(f"{row['variant']} [{row['seeds']}]: val_accuracy {row['val_accuracy']}, "
                   f"train_loss {row['train_loss']}")
    click.echo(f"{len(curves)} curve rows written to {Path(run_dir) / 'curves.csv'}")


@bbtune.command()
@task_options
@click.option("--seed", "seeds", type=int, multiple=True, help="Seeds, 42 50 66 by default.")
@click.option("--variant", "variants", type=click.Choice(sorted(pipeline.ABLATIONS)), multiple=True,
              help="Variants to run, all by default.")
@reported
def ablate(config_path, preset, output_dir, seeds, variants):
    """Run the full configuration and each technique switched off over several seeds."""
    config = load_config(config_path, preset, output_dir)
    summary = pipeline.run_ablation(config, seeds or pipeline.SEEDS, variants or None)
    for _, row in summary.iterrows():
        click.echo(f"{row['variant']}: val_accuracy {row['val_accuracy']}, "
                   f"stage II max val increase {row['stage2_max_val_increase']}")


def port_available(host, port):
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
        try:
            probe.bind((host, port))
        except OSError:
            return False
    return True


@bbtune.command()
@click.option("--fixture-seed", type=int, default=lambda: settings.SERVE_FIXTURE_SEED, show_default="42")
@click.option("--classes", type=int, default=2, show_default=True)
@click.option("--layers", type=int, default=3, show_default=True)
@click.option("--width", type=int, default=128, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
@reported
def serve(fixture_seed, classes, layers, width, host, port):
    """Serve the simulated oracle over HTTP with Uvicorn until interrupted."""
    if not port_available(host, port):
        raise click.ClickException(f"port {port} on {host} is already in use")
    service.install(make_fixture_task(seed=fixture_seed, classes=classes, layers=layers, width=width).oracle())
    from bbtune.bbtune_app.asgi import application
    click.echo(f"serving fixture seed {fixture_seed} on http://{host}:{port}")
    uvicorn.run(application, host=host, port=port, log_level=settings.LOGGING["root"]["level"].lower())


def main():
    return bbtune(prog_name="bbtune")


if __name__ == "__main__":
    main()
