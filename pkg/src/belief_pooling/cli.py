"""Command-line interface for belief-pooling."""

import json
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import click

from belief_pooling.asymptotics import rule_params
from belief_pooling.errors import (
    BeliefPoolingError,
    ConfigError,
    ConfigParseError,
    IdentifiabilityError,
)
from belief_pooling.harness import AggregateReport, default_threads, run_experiment
from belief_pooling.pooling import PoolingRule
from belief_pooling.reporting import read_statistic_csv, write_json, write_report
from belief_pooling.schema import (
    RunConfig,
    discover_presets,
    emit_preset,
    load_preset,
    parse_config,
)
from belief_pooling.stats import SHAPIRO_MAX_SIZE, ks_test_normal, shapiro_wilk

EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

RULE_CHOICES = {
    "aa": (PoolingRule.AA,),
    "ga": (PoolingRule.GA,),
    "both": (PoolingRule.AA, PoolingRule.GA),
}


class CommandError(click.ClickException):
    """A ClickException carrying one of the documented exit codes."""

    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


@contextmanager
def _exit_codes() -> Iterator[None]:
    try:
        yield
    except ConfigParseError as e:
        raise CommandError(str(e), EXIT_PARSE) from e
    except (ConfigError, IdentifiabilityError) as e:
        raise CommandError(f"Invalid configuration: {e}", EXIT_VALIDATION) from e
    except BeliefPoolingError as e:
        raise CommandError(f"Run failed: {e}", EXIT_RUNTIME) from e


def run_options(func):
    """Overrides shared by the commands that run experiments."""
    options = [
        click.option(
            "--out",
            "-o",
            type=click.Path(file_okay=False, path_type=Path),
            default=None,
            help="Output directory (overrides the config).",
        ),
        click.option("--seed", "-s", type=click.IntRange(min=0), default=None,
                     help="Master seed."),
        click.option("--realizations", "-n", type=click.IntRange(min=1), default=None,
                     help="Number of Monte Carlo realizations."),
        click.option("--horizon", type=click.IntRange(min=1), default=None,
                     help="Number of rounds per realization."),
        click.option("--rule", type=click.Choice(sorted(RULE_CHOICES)), default=None,
                     help="Pooling rule(s) to run."),
        click.option("--record-every", type=click.IntRange(min=1), default=None,
                     help="Record beliefs every N rounds."),
        click.option("--threads", type=click.IntRange(min=1), default=None,
                     help="Worker threads (default: available CPUs)."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _apply_overrides(
    config: RunConfig,
    out: Path | None,
    seed: int | None,
    realizations: int | None,
    horizon: int | None,
    rule: str | None,
    record_every: int | None,
) -> RunConfig:
    return config.with_overrides(
        output_dir=out,
        seed=seed,
        realizations=realizations,
        horizon=horizon,
        rules=RULE_CHOICES[rule] if rule else None,
        record_every=record_every,
    )


def _summarize(report: AggregateReport):
    for rule, rep in report.rules.items():
        click.echo(f"[{rule}]", err=True)
        for p in rep.params:
            click.echo(
                f"  theta={p.theta}: rho={p.rho:.6g} sigma2={p.sigma2:.6g} "
                f"({p.estimation})",
                err=True,
            )
        for check in rep.normality:
            sw = check.shapiro_wilk
            sw_text = "n/a" if sw is None else f"{sw.p_value:.3g}"
            click.echo(
                f"  theta={check.theta}: KS p={check.ks.p_value:.3g}, "
                f"Shapiro-Wilk p={sw_text}",
                err=True,
            )
        click.echo(f"  error rate at horizon: {rep.error_rates[-1]:.4g}", err=True)
        if rep.bound_fraction is not None:
            click.echo(f"  decay bound held in {rep.bound_fraction:.1%}", err=True)
    for gap in report.jensen or ():
        click.echo(
            f"Jensen gap theta={gap.theta}: rho_G - rho_A = {gap.gap:.6g} "
            f"(se {gap.std_error:.2g})",
            err=True,
        )


def _run(config: RunConfig, threads: int | None):
    threads = threads or default_threads()
    click.echo(
        f"Running {config.realizations} realization(s) of horizon {config.horizon} "
        f"with {', '.join(config.rules)} on {threads} thread(s)...",
        err=True,
    )
    report = run_experiment(config, threads=threads)
    written = write_report(report)
    _summarize(report)
    click.echo(f"Wrote {len(written)} file(s) to {config.output_dir}", err=True)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log debug output to stderr.")
def cli(verbose: bool):
    """Belief-pooling: simulate and verify AA/GA opinion pooling."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.option(
    "--config",
    "-c",
    "config_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Run configuration (JSON, or YAML by suffix).",
)
@run_options
def simulate(config_path: Path, threads: int | None, **overrides):
    """Run the experiment described by a config file."""
    with _exit_codes():
        config = _apply_overrides(parse_config(config_path), **overrides)
        _run(config, threads)


@cli.command()
@click.argument("name", type=str)
@run_options
def preset(name: str, threads: int | None, **overrides):
    """Run a shipped experiment preset with optional overrides.

    NAME is one of the presets listed by `emit-preset --help`.
    """
    try:
        config = load_preset(name)
    except ValueError as e:
        raise CommandError(str(e), EXIT_VALIDATION) from e
    with _exit_codes():
        config = _apply_overrides(config, **overrides)
        _run(config, threads)


@cli.command("emit-preset")
@click.argument("name", type=str)
@click.option(
    "--output",
    "-o",
    default=".",
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory to write the config file to.",
)
@click.option("--force", "-f", is_flag=True, help="Overwrite existing files.")
def emit_preset_command(name: str, output: Path, force: bool):
    """Write a preset config file to disk.

    NAME is a preset name, or "all" to write every preset.

    Available presets: experiment-1, experiment-2, experiment-3
    """
    presets = discover_presets()
    if not presets:
        raise CommandError("No presets found in the package.", EXIT_RUNTIME)
    if name == "all":
        names = sorted(presets)
    elif name in presets:
        names = [name]
    else:
        available = ", ".join(sorted(presets))
        raise CommandError(
            f"Unknown preset '{name}'. Available presets: {available}", EXIT_VALIDATION
        )

    for preset_name in names:
        target = output / f"{preset_name}.json"
        if target.exists() and not force:
            click.echo(f"Skipping {target.name} (already exists)", err=True)
            continue
        emit_preset(preset_name, target)
        click.echo(f"Wrote: {target}", err=True)


@cli.command()
@click.option(
    "--config",
    "-c",
    "config_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Run configuration.",
)
@click.option("--rule", type=click.Choice(sorted(RULE_CHOICES)), default=None)
@click.option("--seed", "-s", type=click.IntRange(min=0), default=None)
@click.option("--threads", type=click.IntRange(min=1), default=None)
@click.option(
    "--out",
    "-o",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Also write params.json to this directory.",
)
def params(
    config_path: Path,
    rule: str | None,
    seed: int | None,
    threads: int | None,
    out: Path | None,
):
    """Compute the normal-approximation constants without simulating."""
    with _exit_codes():
        config = parse_config(config_path).with_overrides(
            seed=seed, rules=RULE_CHOICES[rule] if rule else None
        )
        results = [
            p.to_dict()
            for r in config.rules
            for p in rule_params(
                r,
                config.environment,
                config.hypotheses,
                config.weights,
                samples=config.estimator_samples,
                seed=config.seed,
                threads=threads or default_threads(),
            )
        ]
    click.echo(json.dumps(results, indent=2))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_json(results, out / "params.json")
        click.echo(f"Wrote {out / 'params.json'}", err=True)


@cli.command()
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def normality(csv_path: Path):
    """Test every statistic column of a lambda_tilde CSV for standard normality."""
    with _exit_codes():
        try:
            columns = read_statistic_csv(csv_path)
        except (ValueError, IndexError) as e:
            raise ConfigParseError(f"Malformed statistic file '{csv_path}': {e}") from e
        results = {}
        for name, values in columns.items():
            entry = {"ks": ks_test_normal(values).to_dict()}
            if 3 <= values.size <= SHAPIRO_MAX_SIZE:
                entry["shapiro_wilk"] = shapiro_wilk(values).to_dict()
            results[name] = entry
    click.echo(json.dumps(results, indent=2))


@cli.command()
@click.option(
    "--config",
    "-c",
    "config_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Run configuration to check.",
)
def validate(config_path: Path):
    """Check a config and its global identifiability without writing anything."""
    with _exit_codes():
        config = parse_config(config_path, check_identifiability=False)
        report = config.check_identifiability()
    click.echo(json.dumps(report.to_dict(), indent=2))
    click.echo("Configuration is valid.", err=True)


def main():
    """Entry point for the CLI."""
    cli()


if __name__ == "__main__":
    main()
