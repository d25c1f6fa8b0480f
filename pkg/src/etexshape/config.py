"""
Run settings shared by the command-line tools, loadable from JSON.

The file mirrors the field names below, with the sensor model and the
training hyperparameters as nested objects::

    {"n_kappa": 35, "seed": 1, "sensor": {"noise_sigma": 0.0}, "train": {"epochs": 200}}
"""
from __future__ import annotations

import dataclasses
import logging
from collections.abc import Mapping
from typing import Any

import npc_io

import etexshape.file_io
from etexshape.kinematics import DEFAULT_LENGTH
from etexshape.nn import TrainConfig
from etexshape.sensor import SensorModelConfig

logger = logging.getLogger(__name__)

_NESTED = {"sensor": SensorModelConfig, "train": TrainConfig}


class ConfigError(ValueError):
    """Unknown keys or invalid values in run settings."""


@dataclasses.dataclass(frozen=True)
class RunConfig:
    sensor: SensorModelConfig = dataclasses.field(default_factory=SensorModelConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    n_kappa: int = 35
    n_phi: int = 38
    length: float = DEFAULT_LENGTH
    seed: int = 0
    """Shuffle seed for the train/val/test split and the cross-validation folds."""
    arch: str = "ref"
    folds: int = 5
    cv_epochs: int = 100
    workers: int = 1
    data: str | None = None
    """Default dataset file for commands that read one."""

    def __post_init__(self) -> None:
        if self.n_kappa < 2 or self.n_phi < 1:
            raise ConfigError(f"grid too small: {self.n_kappa=}, {self.n_phi=}")
        if self.folds < 2:
            raise ConfigError(f"need at least 2 folds: {self.folds=}")
        if self.cv_epochs < 1 or self.workers < 1:
            raise ConfigError(f"{self.cv_epochs=} and {self.workers=} must be >= 1")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RunConfig:
        """
        Examples:
            >>> RunConfig.from_dict({"train": {"epochs": 3}}).train.epochs
            3
            >>> RunConfig.from_dict({"epochs": 3})
            Traceback (most recent call last):
            ...
            etexshape.config.ConfigError: unknown settings: ['epochs']
        """
        if not isinstance(data, Mapping):
            raise ConfigError(f"settings must be a JSON object, got {type(data).__name__}")
        _check_keys(cls, data, prefix="")
        kwargs: dict[str, Any] = dict(data)
        for key, nested_cls in _NESTED.items():
            if key in kwargs:
                if not isinstance(kwargs[key], Mapping):
                    raise ConfigError(f"{key!r} must be an object")
                _check_keys(nested_cls, kwargs[key], prefix=f"{key}.")
                kwargs[key] = _build(nested_cls, **kwargs[key])
        return _build(cls, **kwargs)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def updated(self, overrides: Mapping[str, Any]) -> RunConfig:
        """Copy with dotted-key overrides, e.g. `{"train.epochs": 1, "n_phi": 4}`.

        >>> RunConfig().updated({"sensor.noise_sigma": 0.0, "seed": 3}).sensor.noise_sigma
        0.0
        """
        top: dict[str, Any] = {}
        nested: dict[str, dict[str, Any]] = {key: {} for key in _NESTED}
        for key, value in overrides.items():
            head, _, tail = key.partition(".")
            if tail:
                if head not in _NESTED:
                    raise ConfigError(f"unknown settings group {head!r} in {key!r}")
                nested[head][tail] = value
            else:
                top[key] = value
        _check_keys(type(self), top, prefix="")
        for key, values in nested.items():
            if values:
                _check_keys(_NESTED[key], values, prefix=f"{key}.")
                top[key] = _build(dataclasses.replace, getattr(self, key), **values)
        return _build(dataclasses.replace, self, **top)


def _check_keys(cls: type, data: Mapping[str, Any], prefix: str) -> None:
    unknown = sorted(set(data) - {f.name for f in dataclasses.fields(cls)})
    if unknown:
        raise ConfigError(f"unknown settings: {[prefix + k for k in unknown]}")


def _build(factory: Any, *args: Any, **kwargs: Any) -> Any:
    try:
        return factory(*args, **kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_run_config(path: npc_io.PathLike) -> RunConfig:
    config = RunConfig.from_dict(etexshape.file_io.read_json(path))
    logger.info(f"loaded settings from {path}: {config}")
    return config


if __name__ == "__main__":
    from npc_io import testmod

    testmod()
