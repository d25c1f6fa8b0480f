"""Command-line front end: generate, ingest, train, eval, crossval, sweep and audit."""
from __future__ import annotations

import contextlib
import dataclasses
import logging
import math
import os
import pathlib
from collections.abc import Callable, Iterator, Mapping
from typing import TypeVar

import click
import polars as pl
from click.core import ParameterSource

import etexshape.file_io
from etexshape.config import ConfigError, RunConfig, load_run_config
from etexshape.dataset import Dataset, SplitName, split, with_normalization
from etexshape.dataset import generate as generate_dataset
from etexshape.evaluation import (
    ARCHITECTURES,
    EVAL_SERIES_LENGTH,
    STUDY_MODELS,
    crossval_study,
    evaluate,
    param_count_audit,
)
from etexshape.kinematics import kappa_max
from etexshape.nn import train as train_model
from etexshape.sensor import SensorModelConfig, response_sweep

logger = logging.getLogger(__name__)

T = TypeVar("T", int, float)

EXIT_IO = 3
EXIT_DATA = 4

_SENSOR = SensorModelConfig()
_DEFAULTS = RunConfig()
_FILE = click.Path(dir_okay=False, path_type=pathlib.Path)


class IOFailure(click.ClickException):
    exit_code = EXIT_IO


class DataError(click.ClickException):
    exit_code = EXIT_DATA


@contextlib.contextmanager
def _exit_codes() -> Iterator[None]:
    """Translate library errors to exit codes: data/schema problems 4, I/O problems 3."""
    try:
        yield
    except click.ClickException:
        raise
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _require_input(path: pathlib.Path) -> None:
    if not path.is_file():
        raise IOFailure(f"input file not found: {path}")


def _require_output(path: pathlib.Path) -> None:
    parent = path.resolve().parent
    if path.is_dir():
        raise IOFailure(f"output path is a directory: {path}")
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise IOFailure(f"cannot write to {parent}")


def _settings(ctx: click.Context, keys: Mapping[str, str | tuple[str, ...]]) -> RunConfig:
    """RunConfig from --config, with flags given on the command line taking precedence."""
    config: RunConfig = ctx.obj or _DEFAULTS
    overrides = {}
    for param, dotted in keys.items():
        if ctx.get_parameter_source(param) in (ParameterSource.COMMANDLINE, ParameterSource.ENVIRONMENT):
            for key in (dotted,) if isinstance(dotted, str) else dotted:
                overrides[key] = ctx.params[param]
    try:
        return config.updated(overrides)
    except ConfigError as exc:
        raise click.UsageError(str(exc), ctx) from exc


def _from_model(ctx: click.Context, param: str, given: T, recorded: T | None) -> T:
    """The value recorded in the model file, unless the command line asks for a different one."""
    if recorded is None:
        return given
    explicit = ctx.get_parameter_source(param) in (ParameterSource.COMMANDLINE, ParameterSource.ENVIRONMENT)
    if explicit and not math.isclose(given, recorded):
        raise DataError(f"--{param} {given} does not match the model, which was trained with {param} {recorded}")
    return recorded


def _data_path(ctx: click.Context, data: pathlib.Path | None, config: RunConfig) -> pathlib.Path:
    if data is None and config.data is None:
        raise click.UsageError("missing option '--data' (or 'data' in --config)", ctx)
    path = data if data is not None else pathlib.Path(config.data)  # type: ignore[arg-type]
    _require_input(path)
    return path


def _read_dataset(path: pathlib.Path, config: RunConfig) -> Dataset:
    dataset, _ = etexshape.file_io.read_dataset_csv(path, strict=True, length=config.length)
    if len(dataset) == 0:
        raise DataError(f"no samples in {path}")
    return dataset


_length_option = click.option(
    "--length", type=click.FloatRange(min=0, min_open=True), default=_DEFAULTS.length, show_default=True,
    help="Arc length of the section, m.",
)

_sensor_options = [
    click.option("--noise-sigma", type=click.FloatRange(min=0), default=_SENSOR.noise_sigma, show_default=True,
                 help="Std of Gaussian noise on the normalized bridge voltage."),
    click.option("--sat-pressure", type=click.FloatRange(min=0, min_open=True), default=_SENSOR.sat_pressure,
                 show_default=True, help="Saturation pressure of the fabric, Pa."),
    click.option("--p-scale", type=click.FloatRange(min=0, min_open=True), default=_SENSOR.p_scale,
                 show_default=True, help="Contact pressure per unit curvature, Pa m."),
    _length_option,
    click.option("--unsaturated", is_flag=True, default=False,
                 help="Noise-free sensor with a saturation pressure above the workspace's reach."),
]
_SENSOR_KEYS = {
    "noise_sigma": "sensor.noise_sigma",
    "sat_pressure": "sensor.sat_pressure",
    "p_scale": "sensor.p_scale",
    "length": "length",
}


def sensor_options(f: Callable) -> Callable:
    for option in reversed(_sensor_options):
        f = option(f)
    return f


def _sensor_config(config: RunConfig, unsaturated: bool) -> SensorModelConfig:
    sensor = config.sensor
    if unsaturated:
        sensor = dataclasses.replace(
            sensor,
            noise_sigma=0.0,
            sat_pressure=max(sensor.sat_pressure, math.ceil(sensor.p_scale * kappa_max(config.length)) + 1.0),
        )
    return sensor


@click.group()
@click.option("--config", "config_path", type=_FILE, default=None, help="JSON file of run settings.")
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default="WARNING",
    show_default=True,
)
@click.version_option(package_name="etexshape")
@click.pass_context
def main(ctx: click.Context, config_path: pathlib.Path | None, log_level: str) -> None:
    """Shape sensing of a continuum robot from a 4x4 e-textile matrix."""
    logging.basicConfig(level=log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    if config_path is None:
        ctx.obj = RunConfig()
        return
    _require_input(config_path)
    try:
        ctx.obj = load_run_config(config_path)
    except ValueError as exc:
        raise click.BadParameter(str(exc), ctx, param_hint="'--config'") from exc


@main.command()
@click.option("--out", type=_FILE, required=True, help="Dataset CSV to write.")
@click.option("--n-kappa", type=click.IntRange(min=2), default=_DEFAULTS.n_kappa, show_default=True)
@click.option("--n-phi", type=click.IntRange(min=1), default=_DEFAULTS.n_phi, show_default=True)
@click.option("--seed", type=int, default=_SENSOR.seed, show_default=True, help="Sensor noise seed.")
@sensor_options
@click.pass_context
def generate(ctx: click.Context, out: pathlib.Path, unsaturated: bool, **_) -> None:
    """Simulate a labeled dataset on a regular (kappa, phi) grid."""
    config = _settings(ctx, {"n_kappa": "n_kappa", "n_phi": "n_phi", "seed": "sensor.seed", **_SENSOR_KEYS})
    _require_output(out)
    with _exit_codes():
        dataset = generate_dataset(config.n_kappa, config.n_phi, _sensor_config(config, unsaturated), config.length)
        etexshape.file_io.write_dataset_csv(dataset, out)
    click.echo(
        f"wrote {len(dataset)} samples to {out}: kappa in [0, {kappa_max(config.length):.6f}] 1/m,"
        f" phi in (-pi, pi], length {config.length} m"
    )


@main.command()
@click.argument("log_file", metavar="INPUT", type=_FILE)
@click.option("--out", type=_FILE, required=True, help="Canonical dataset CSV to write.")
@click.option("--strict", is_flag=True, default=False, help="Abort on the first malformed line.")
@_length_option
@click.pass_context
def ingest(ctx: click.Context, log_file: pathlib.Path, out: pathlib.Path, strict: bool, **_) -> None:
    """Validate a recorded frame log and rewrite it as a dataset CSV."""
    config = _settings(ctx, {"length": "length"})
    _require_input(log_file)
    _require_output(out)
    with _exit_codes():
        dataset, errors = etexshape.file_io.read_dataset_csv(log_file, strict=strict, length=config.length)
        for error in errors:
            logger.warning(f"skipping {error}")
        if errors:
            click.echo(f"warning: skipped {len(errors)} line(s)", err=True)
        etexshape.file_io.write_dataset_csv(dataset, out)
    click.echo(f"wrote {len(dataset)} records to {out}")


@main.command()
@click.option("--data", type=_FILE, default=None, help="Dataset CSV.")
@click.option("--arch", type=click.Choice(sorted(ARCHITECTURES)), default=_DEFAULTS.arch, show_default=True)
@click.option("--out", type=_FILE, required=True, help="Model JSON to write.")
@click.option("--history", type=_FILE, default=None, help="Per-epoch loss CSV to write.")
@click.option("--epochs", type=click.IntRange(min=1), default=_DEFAULTS.train.epochs, show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=_DEFAULTS.train.batch_size, show_default=True)
@click.option("--lr", type=click.FloatRange(min=0, min_open=True), default=_DEFAULTS.train.lr, show_default=True)
@click.option("--seed", type=int, default=_DEFAULTS.seed, show_default=True, help="Split, initialization and shuffle seed.")
@_length_option
@click.option("--progress/--no-progress", default=False, help="Show a progress bar.")
@click.pass_context
def train(
    ctx: click.Context,
    data: pathlib.Path | None,
    out: pathlib.Path,
    history: pathlib.Path | None,
    progress: bool,
    **_,
) -> None:
    """Train one architecture on the 70% split; validation MSE is tracked per epoch."""
    config = _settings(
        ctx,
        {
            "arch": "arch",
            "epochs": "train.epochs",
            "batch_size": "train.batch_size",
            "lr": "train.lr",
            "seed": ("seed", "train.seed"),
            "length": "length",
        },
    )
    data = _data_path(ctx, data, config)
    for path in (out, history):
        if path is not None:
            _require_output(path)
    if config.arch not in ARCHITECTURES:
        raise click.UsageError(f"unknown architecture {config.arch!r}", ctx)
    with _exit_codes():
        dataset = with_normalization(split(_read_dataset(data, config), seed=config.seed))
        model, losses = train_model(ARCHITECTURES[config.arch], dataset, config.train, progress=progress)
        etexshape.file_io.save_model(model, out)
        if history is not None:
            etexshape.file_io.write_table(losses.to_polars(), history)
    click.echo(
        f"trained {config.arch} ({model.param_count} params, {losses.n_steps} steps):"
        f" train_mse={losses.train_mse[-1]:.6g}, val_mse={losses.val_mse[-1]:.6g}"
    )


@main.command(name="eval")
@click.option("--model", "model_path", type=_FILE, required=True, help="Model JSON.")
@click.option("--data", type=_FILE, default=None, help="Dataset CSV the model was trained on.")
@click.option("--out", type=_FILE, required=True, help="Per-sample report CSV to write.")
@click.option("--split", "split_name", type=click.Choice([s.value for s in SplitName]), default="test", show_default=True)
@click.option("--first", type=click.IntRange(min=0), default=None, help=f"Keep only the first N rows (e.g. {EVAL_SERIES_LENGTH}).")
@click.option("--seed", type=int, default=_DEFAULTS.seed, show_default=True,
              help="Split seed, if the model does not record the one it was trained with.")
@_length_option
@click.pass_context
def eval_(
    ctx: click.Context,
    model_path: pathlib.Path,
    data: pathlib.Path | None,
    out: pathlib.Path,
    split_name: str,
    first: int | None,
    **_,
) -> None:
    """Target vs estimate for one split, with absolute errors and RMSE."""
    config = _settings(ctx, {"seed": "seed", "length": "length"})
    _require_input(model_path)
    data = _data_path(ctx, data, config)
    _require_output(out)
    with _exit_codes():
        model = etexshape.file_io.load_model(model_path)
        config = dataclasses.replace(
            config,
            seed=_from_model(ctx, "seed", config.seed, model.split_seed),
            length=_from_model(ctx, "length", config.length, model.length),
        )
        dataset = split(_read_dataset(data, config), seed=config.seed)
        if model.norm is None:
            dataset = with_normalization(dataset)
        report = evaluate(model, dataset, split_name)
        etexshape.file_io.write_table(report.to_polars(first), out, comments=[report.summary()])
    click.echo(report.summary())


@main.command()
@click.option("--data", type=_FILE, default=None, help="Dataset CSV.")
@click.option("--out", type=_FILE, required=True, help="Fold scores + summary CSV to write.")
@click.option("--folds", type=click.IntRange(min=2), default=_DEFAULTS.folds, show_default=True)
@click.option("--epochs", type=click.IntRange(min=1), default=_DEFAULTS.cv_epochs, show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=_DEFAULTS.train.batch_size, show_default=True)
@click.option("--lr", type=click.FloatRange(min=0, min_open=True), default=_DEFAULTS.train.lr, show_default=True)
@click.option("--seed", type=int, default=_DEFAULTS.seed, show_default=True, help="Fold assignment and training seed.")
@_length_option
@click.option("--models", type=click.Choice(sorted(ARCHITECTURES)), multiple=True, default=STUDY_MODELS, show_default=True)
@click.option("--curves", type=_FILE, default=None, help="Per-fold loss curves CSV to write.")
@click.option("--workers", type=click.IntRange(min=1), default=_DEFAULTS.workers, show_default=True)
@click.option("--progress/--no-progress", default=False, help="Show a progress bar.")
@click.pass_context
def crossval(
    ctx: click.Context,
    data: pathlib.Path | None,
    out: pathlib.Path,
    models: tuple[str, ...],
    curves: pathlib.Path | None,
    progress: bool,
    **_,
) -> None:
    """k-fold cross-validation of the study architectures on a shared fold assignment."""
    config = _settings(
        ctx,
        {
            "folds": "folds",
            "epochs": "cv_epochs",
            "batch_size": "train.batch_size",
            "lr": "train.lr",
            "seed": ("seed", "train.seed"),
            "workers": "workers",
            "length": "length",
        },
    )
    data = _data_path(ctx, data, config)
    for path in (out, curves):
        if path is not None:
            _require_output(path)
    with _exit_codes():
        dataset = _read_dataset(data, config)
        report = crossval_study(
            {name: ARCHITECTURES[name] for name in models},
            dataset,
            config.train,
            k=config.folds,
            epochs=config.cv_epochs,
            seed=config.seed,
            max_workers=config.workers,
            progress=progress,
        )
        etexshape.file_io.write_tables([report.folds_table(), report.summary_table()], out)
        if curves is not None:
            etexshape.file_io.write_table(report.curves_table(), curves)
    click.echo(report.summary_table().write_csv(), nl=False)


@main.command()
@click.option("--out", type=_FILE, required=True, help="Response CSV to write.")
@click.option("--phi", type=float, default=0.0, show_default=True, help="Bending-plane angle, rad.")
@click.option("--n-kappa", type=click.IntRange(min=2), default=_DEFAULTS.n_kappa, show_default=True)
@sensor_options
@click.pass_context
def sweep(ctx: click.Context, out: pathlib.Path, phi: float, unsaturated: bool, **_) -> None:
    """Noise-free count of every sensing point along a curvature sweep."""
    config = _settings(ctx, {"n_kappa": "n_kappa", **_SENSOR_KEYS})
    _require_output(out)
    with _exit_codes():
        df = response_sweep(phi, config.n_kappa, _sensor_config(config, unsaturated), config.length)
        etexshape.file_io.write_table(df, out)
    click.echo(f"wrote {df.height} rows to {out}")


@main.command()
@click.option("--out", type=_FILE, default=None, help="CSV to write instead of printing.")
def audit(out: pathlib.Path | None) -> None:
    """Parameter counts of the registered architectures next to the published sizes."""
    df = param_count_audit()
    if out is None:
        click.echo(df.write_csv(), nl=False)
    else:
        _require_output(out)
        with _exit_codes():
            etexshape.file_io.write_table(df, out)
    for row in df.filter(~pl.col("matches")).iter_rows(named=True):
        click.echo(
            f"{row['model']}: {row['param_count']} parameters, published size {row['published_size']}",
            err=True,
        )


if __name__ == "__main__":
    main()
