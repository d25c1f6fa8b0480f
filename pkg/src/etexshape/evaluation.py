"""
Test-split metrics, the architecture registry and k-fold cross-validation.
"""
from __future__ import annotations

import concurrent.futures
import dataclasses
import logging
import math
import time
from collections.abc import Mapping, Sequence

import numpy as np
import numpy.typing as npt
import polars as pl
import tqdm

from etexshape.dataset import (
    Dataset,
    MissingNormalization,
    SplitName,
    apply_normalization,
    decode_targets,
    norm_stats_from_counts,
)
from etexshape.kinematics import kappa_max
from etexshape.nn import Model, ModelSpec, TrainConfig, TrainHistory, fit, mse_loss, param_count, predict

logger = logging.getLogger(__name__)

ARCHITECTURES: dict[str, ModelSpec] = {
    name: ModelSpec.from_notation(notation, name=name)
    for name, notation in {
        "m1": "F16,F3",
        "m2": "C(8,2),F3",
        "m3": "C(8,2),C(4,2),F3",
        "m4": "C(16,2),C(8,2),F3",
        "m5": "C(32,2),C(16,2),F8,F3",
        "ref": "C(16,2),C(8,2),F16,F8,F3",
    }.items()
}
"""The five cross-validation models and the reference regressor, by CLI name."""

STUDY_MODELS = ("m1", "m2", "m3", "m4", "m5")

PUBLISHED_SIZES: dict[str, int] = {"m1": 306, "m2": 186, "m3": 206, "m4": 666, "m5": 2762}
"""Published "Size" column for the study models; it does not follow from the layer lists."""

EVAL_SERIES_LENGTH = 100


def study_registry() -> dict[str, ModelSpec]:
    return {name: ARCHITECTURES[name] for name in STUDY_MODELS}


def param_count_audit(registry: Mapping[str, ModelSpec] | None = None) -> pl.DataFrame:
    """Computed parameter counts next to the published sizes.

    Examples:
        >>> df = param_count_audit()
        >>> df.select("model", "param_count", "matches").rows()[:2]
        [('m1', 323, False), ('m2', 259, False)]
    """
    registry = ARCHITECTURES if registry is None else registry
    return pl.DataFrame(
        {
            "model": list(registry),
            "layers": [spec.notation for spec in registry.values()],
            "param_count": [param_count(spec) for spec in registry.values()],
            "published_size": [PUBLISHED_SIZES.get(name) for name in registry],
            "matches": [
                None if name not in PUBLISHED_SIZES else PUBLISHED_SIZES[name] == param_count(spec)
                for name, spec in registry.items()
            ],
        },
        schema={
            "model": pl.String,
            "layers": pl.String,
            "param_count": pl.Int64,
            "published_size": pl.Int64,
            "matches": pl.Boolean,
        },
    )


# evaluation ------------------------------------------------------------------- #


def angle_error(phi_true: npt.ArrayLike, phi_pred: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Absolute angular difference, wrapped so it never exceeds pi.

    >>> float(angle_error(3.1, -3.1).round(6))
    0.083185
    """
    d = np.asarray(phi_pred, dtype=np.float64) - np.asarray(phi_true, dtype=np.float64)
    return np.abs(np.remainder(d + math.pi, math.tau) - math.pi)


@dataclasses.dataclass(frozen=True, eq=False)
class EvalReport:
    """Per-sample target vs estimate, in physical units, for one split."""

    indices: npt.NDArray[np.int64]
    kappa_true: npt.NDArray[np.float64]
    kappa_pred: npt.NDArray[np.float64]
    phi_true: npt.NDArray[np.float64]
    phi_pred: npt.NDArray[np.float64]
    mse: float
    """MSE in the encoded (normalized) target space."""
    length: float
    n_degenerate: int = 0

    @property
    def abs_err_kappa(self) -> npt.NDArray[np.float64]:
        return np.abs(self.kappa_pred - self.kappa_true)

    @property
    def abs_err_phi(self) -> npt.NDArray[np.float64]:
        return angle_error(self.phi_true, self.phi_pred)

    def rmse(self, min_kappa: float = 0.0) -> tuple[float, float]:
        """(kappa RMSE in 1/m, phi RMSE in rad) over samples with true kappa > `min_kappa`.

        phi is not identifiable for a straight robot, so pass e.g. `0.05 * kappa_max`
        to judge the angle only where it is defined.
        """
        mask = self.kappa_true > min_kappa if min_kappa > 0 else np.ones(len(self.kappa_true), dtype=bool)
        if not mask.any():
            return math.nan, math.nan
        return (
            float(np.sqrt(np.mean(self.abs_err_kappa[mask] ** 2))),
            float(np.sqrt(np.mean(self.abs_err_phi[mask] ** 2))),
        )

    @property
    def rmse_kappa(self) -> float:
        return self.rmse()[0]

    @property
    def rmse_phi(self) -> float:
        return self.rmse()[1]

    @property
    def rmse_phi_identifiable(self) -> float:
        return self.rmse(min_kappa=0.05 * kappa_max(self.length))[1]

    def summary(self) -> str:
        return (
            f"mse={self.mse:.6g}, rmse_kappa={self.rmse_kappa:.6g}, rmse_phi={self.rmse_phi:.6g},"
            f" rmse_phi_identifiable={self.rmse_phi_identifiable:.6g}, n={len(self.indices)}"
        )

    def to_polars(self, first: int | None = None) -> pl.DataFrame:
        df = pl.DataFrame(
            {
                "index": self.indices,
                "kappa_true": self.kappa_true,
                "kappa_pred": self.kappa_pred,
                "phi_true": self.phi_true,
                "phi_pred": self.phi_pred,
                "abs_err_kappa": self.abs_err_kappa,
                "abs_err_phi": self.abs_err_phi,
            }
        )
        return df if first is None else df.head(first)


def evaluate_predictions(
    dataset: Dataset, indices: npt.ArrayLike, predictions: npt.ArrayLike
) -> EvalReport:
    """Metrics for raw network outputs on `dataset[indices]`."""
    indices = np.asarray(indices, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.float64).reshape(len(indices), -1)
    kappa_pred, phi_pred, degenerate = decode_targets(predictions, dataset.length)
    if degenerate.any():
        logger.warning(f"{int(degenerate.sum())} predictions had no usable angle: phi set to 0")
    return EvalReport(
        indices=indices,
        kappa_true=np.asarray(dataset.kappa[indices]),
        kappa_pred=kappa_pred,
        phi_true=np.asarray(dataset.phi[indices]),
        phi_pred=phi_pred,
        mse=mse_loss(predictions, dataset.targets(indices)),
        length=dataset.length,
        n_degenerate=int(degenerate.sum()),
    )


def evaluate(model: Model, dataset: Dataset, split_name: str | SplitName = SplitName.TEST) -> EvalReport:
    """Forward pass over one split, decoded and compared against its labels.

    Inputs are normalized with the model's own NormStats when it carries them.
    """
    indices = dataset.indices(split_name)
    norm = model.norm or dataset.norm
    if norm is None:
        raise MissingNormalization("neither the model nor the dataset carries NormStats")
    if model.norm is not None and dataset.norm is not None and model.norm != dataset.norm:
        logger.warning("model was trained with different NormStats than the dataset's: using the model's")
    if model.length is not None and not math.isclose(model.length, dataset.length):
        logger.warning(f"model was trained at length {model.length} m, dataset is at {dataset.length} m")
    t0 = time.time()
    predictions = predict(model, dataset.images(indices, norm))
    report = evaluate_predictions(dataset, indices, predictions)
    logger.info(f"evaluated {model.spec.notation} on {split_name} in {time.time() - t0:.2f} s: {report.summary()}")
    return report


# cross-validation ------------------------------------------------------------- #


def fold_indices(n: int, k: int = 5, seed: int = 0) -> list[npt.NDArray[np.int64]]:
    """Seeded shuffle, then k contiguous folds whose sizes differ by at most 1.

    >>> [len(f) for f in fold_indices(1330, 5)]
    [266, 266, 266, 266, 266]
    >>> [len(f) for f in fold_indices(11, 3)]
    [4, 4, 3]
    """
    if k < 2:
        raise ValueError(f"need at least 2 folds: {k=}")
    if n < k:
        raise ValueError(f"cannot make {k} folds from {n} samples")
    order = np.random.default_rng(seed).permutation(n)
    return list(np.array_split(order, k))


@dataclasses.dataclass(frozen=True)
class FoldResult:
    fold: int
    mse: float
    """Held-out fold MSE after the last epoch."""
    history: TrainHistory


def _run_fold(
    spec: ModelSpec,
    dataset: Dataset,
    folds: Sequence[npt.NDArray[np.int64]],
    fold: int,
    config: TrainConfig,
) -> FoldResult:
    held_out = folds[fold]
    train_idx = np.concatenate([f for i, f in enumerate(folds) if i != fold])
    # statistics from the training folds only
    norm = norm_stats_from_counts(dataset.counts[train_idx])
    _, history = fit(
        spec,
        apply_normalization(dataset.counts[train_idx], norm),
        dataset.targets(train_idx),
        apply_normalization(dataset.counts[held_out], norm),
        dataset.targets(held_out),
        config=config,
        norm=norm,
    )
    logger.debug(f"{spec.name or spec.notation} fold {fold}: held-out mse={history.val_mse[-1]:.5f}")
    return FoldResult(fold, history.val_mse[-1], history)


def _run_jobs(jobs: list[tuple], max_workers: int | None, progress: bool, desc: str) -> list[FoldResult]:
    """Run (spec, dataset, folds, fold, config) jobs; results come back in job order."""
    results: list[FoldResult | None] = [None] * len(jobs)
    bar = tqdm.tqdm(total=len(jobs), desc=desc, unit="run", ncols=80, disable=not progress)
    if max_workers == 1:
        for i, job in enumerate(jobs):
            results[i] = _run_fold(*job)
            bar.update()
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as pool:
            future_to_job = {pool.submit(_run_fold, *job): i for i, job in enumerate(jobs)}
            for future in concurrent.futures.as_completed(future_to_job):
                results[future_to_job[future]] = future.result()
                bar.update()
    bar.close()
    assert all(r is not None for r in results), f"missing fold results: {results}"
    return results  # type: ignore[return-value]


def kfold(
    spec: ModelSpec,
    dataset: Dataset,
    k: int = 5,
    epochs: int = 100,
    config: TrainConfig | None = None,
    seed: int = 0,
    max_workers: int | None = 1,
    progress: bool = False,
) -> list[FoldResult]:
    """Train once per held-out fold; NormStats are refitted on each fold's training part."""
    config = dataclasses.replace(config or TrainConfig(), epochs=epochs)
    folds = fold_indices(len(dataset), k, seed)
    jobs = [(spec, dataset, folds, fold, config) for fold in range(k)]
    return _run_jobs(jobs, max_workers, progress, desc=f"kfold {spec.name or spec.notation}")


@dataclasses.dataclass(frozen=True)
class ModelCv:
    name: str
    notation: str
    fold_mse: tuple[float, ...]
    param_count: int
    histories: tuple[TrainHistory, ...] = ()

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.fold_mse))

    @property
    def std_mse(self) -> float:
        """Population standard deviation across folds."""
        return float(np.std(self.fold_mse))


@dataclasses.dataclass(frozen=True)
class CvReport:
    results: tuple[ModelCv, ...]
    k: int
    epochs: int
    seed: int

    def __getitem__(self, name: str) -> ModelCv:
        for result in self.results:
            if result.name == name:
                return result
        raise KeyError(name)

    @property
    def best(self) -> ModelCv:
        return min(self.results, key=lambda r: r.mean_mse)

    def folds_table(self) -> pl.DataFrame:
        return pl.DataFrame(
            [(r.name, fold, mse) for r in self.results for fold, mse in enumerate(r.fold_mse)],
            schema={"model": pl.String, "fold": pl.Int64, "mse": pl.Float64},
            orient="row",
        )

    def summary_table(self) -> pl.DataFrame:
        return pl.DataFrame(
            [(r.name, r.mean_mse, r.std_mse, r.param_count) for r in self.results],
            schema={"model": pl.String, "mean_mse": pl.Float64, "std_mse": pl.Float64, "param_count": pl.Int64},
            orient="row",
        )

    def curves_table(self) -> pl.DataFrame:
        frames = [
            history.to_polars().select(
                pl.lit(r.name).alias("model"), pl.lit(fold, dtype=pl.Int64).alias("fold"), pl.all()
            )
            for r in self.results
            for fold, history in enumerate(r.histories)
        ]
        if not frames:
            return pl.DataFrame(
                schema={"model": pl.String, "fold": pl.Int64, "epoch": pl.Int64, "train_mse": pl.Float64, "val_mse": pl.Float64}
            )
        return pl.concat(frames)


def crossval_study(
    registry: Mapping[str, ModelSpec] | None,
    dataset: Dataset,
    config: TrainConfig | None = None,
    k: int = 5,
    epochs: int = 100,
    seed: int = 0,
    max_workers: int | None = 1,
    progress: bool = False,
) -> CvReport:
    """k-fold CV of every model in `registry` (default: the five study models) on one shared fold assignment."""
    registry = study_registry() if registry is None else dict(registry)
    config = dataclasses.replace(config or TrainConfig(), epochs=epochs)
    folds = fold_indices(len(dataset), k, seed)
    for name, spec in registry.items():
        if name in PUBLISHED_SIZES and PUBLISHED_SIZES[name] != param_count(spec):
            logger.warning(
                f"{name} ({spec.notation}) has {param_count(spec)} parameters; the published size is {PUBLISHED_SIZES[name]}"
            )
    t0 = time.time()
    jobs = [(spec, dataset, folds, fold, config) for spec in registry.values() for fold in range(k)]
    runs = _run_jobs(jobs, max_workers, progress, desc="crossval")
    results = []
    for i, (name, spec) in enumerate(registry.items()):
        model_runs = runs[i * k : (i + 1) * k]
        results.append(
            ModelCv(
                name=name,
                notation=spec.notation,
                fold_mse=tuple(r.mse for r in model_runs),
                param_count=param_count(spec),
                histories=tuple(r.history for r in model_runs),
            )
        )
    report = CvReport(tuple(results), k=k, epochs=epochs, seed=seed)
    logger.info(
        f"cross-validated {len(registry)} models x {k} folds x {epochs} epochs in {time.time() - t0:.2f} s;"
        f" best: {report.best.name} (mean mse {report.best.mean_mse:.5f})"
    )
    return report


if __name__ == "__main__":
    from npc_io import testmod

    testmod()
