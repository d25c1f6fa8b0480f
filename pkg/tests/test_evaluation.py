import dataclasses
import logging
import math

import hypothesis
import hypothesis.strategies as st
import numpy as np
import pytest

from etexshape.dataset import (
    Dataset,
    MissingNormalization,
    MissingSplit,
    NormStats,
    generate,
    split,
    with_normalization,
)
from etexshape.evaluation import (
    ARCHITECTURES,
    STUDY_MODELS,
    PUBLISHED_SIZES,
    angle_error,
    crossval_study,
    evaluate,
    evaluate_predictions,
    fold_indices,
    kfold,
    param_count_audit,
)
from etexshape.kinematics import kappa_max
from etexshape.nn import ModelSpec, TrainConfig, init_model
from etexshape.sensor import SensorModelConfig

L = 0.18


@pytest.fixture(scope="module")
def dataset() -> Dataset:
    return with_normalization(split(generate(6, 5, SensorModelConfig.noise_free_unsaturated(L)), seed=0))


def test_param_count_audit() -> None:
    df = param_count_audit()
    counts = dict(zip(df["model"], df["param_count"]))
    assert counts == {"m1": 323, "m2": 259, "m3": 223, "m4": 699, "m5": 2771, "ref": 1291}
    assert df.filter(df["model"] == "ref")["matches"].to_list() == [None]
    assert not any(df.filter(df["model"].is_in(list(PUBLISHED_SIZES)))["matches"])


def test_registry_notation() -> None:
    assert [ARCHITECTURES[name].notation for name in STUDY_MODELS] == [
        "F16,F3",
        "C(8,2),F3",
        "C(8,2),C(4,2),F3",
        "C(16,2),C(8,2),F3",
        "C(32,2),C(16,2),F8,F3",
    ]


def test_angle_error_wraps() -> None:
    assert angle_error(math.pi, -math.pi) == pytest.approx(0.0, abs=1e-12)
    assert angle_error(0.0, 3 * math.pi / 2) == pytest.approx(math.pi / 2)
    assert angle_error(0.1, -0.1) == pytest.approx(0.2)


@hypothesis.given(
    n=st.integers(min_value=2, max_value=500),
    k=st.integers(min_value=2, max_value=10),
    seed=st.integers(0, 1000),
)
def test_folds_partition_the_samples(n: int, k: int, seed: int) -> None:
    hypothesis.assume(n >= k)
    folds = fold_indices(n, k, seed)
    sizes = [len(f) for f in folds]
    assert len(folds) == k
    assert max(sizes) - min(sizes) <= 1
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))


@pytest.mark.parametrize("n, k", [(10, 1), (3, 4)])
def test_invalid_folds(n: int, k: int) -> None:
    with pytest.raises(ValueError):
        fold_indices(n, k)


def test_perfect_predictions(dataset: Dataset) -> None:
    idx = dataset.split.test
    report = evaluate_predictions(dataset, idx, dataset.targets(idx))
    assert report.mse == 0.0
    assert report.rmse_kappa == pytest.approx(0.0, abs=1e-12)
    assert report.rmse_phi == pytest.approx(0.0, abs=1e-12)
    assert report.n_degenerate == 0


def test_mean_predictor_scores_the_target_variance(dataset: Dataset) -> None:
    idx = dataset.split.test
    targets = dataset.targets(idx)
    report = evaluate_predictions(dataset, idx, np.tile(targets.mean(axis=0), (len(idx), 1)))
    assert report.mse == pytest.approx(float(targets.var(axis=0).sum()), rel=1e-12)


def test_rmse_is_root_mean_square(dataset: Dataset) -> None:
    idx = np.arange(len(dataset))
    noisy = dataset.targets(idx) + np.random.default_rng(0).normal(0, 0.1, size=(len(idx), 3))
    report = evaluate_predictions(dataset, idx, noisy)
    assert report.rmse_kappa**2 == pytest.approx(float(np.mean(report.abs_err_kappa**2)))
    assert report.rmse_phi**2 == pytest.approx(float(np.mean(report.abs_err_phi**2)))
    straight = report.kappa_true <= 0.05 * kappa_max(L)
    expected = math.sqrt(np.mean(report.abs_err_phi[~straight] ** 2))
    assert report.rmse_phi_identifiable == pytest.approx(expected)


def test_degenerate_predictions_are_counted(dataset: Dataset, caplog: pytest.LogCaptureFixture) -> None:
    idx = dataset.split.test[:2]
    with caplog.at_level(logging.WARNING):
        report = evaluate_predictions(dataset, idx, [[0.5, 0.0, 0.0], [0.5, 1.0, 0.0]])
    assert report.n_degenerate == 1
    assert report.phi_pred.tolist() == [0.0, 0.0]
    assert "no usable angle" in caplog.text


def test_report_table(dataset: Dataset) -> None:
    idx = dataset.split.test
    report = evaluate_predictions(dataset, idx, dataset.targets(idx))
    df = report.to_polars(first=3)
    assert df.columns == [
        "index", "kappa_true", "kappa_pred", "phi_true", "phi_pred", "abs_err_kappa", "abs_err_phi"
    ]
    assert df.height == 3 and df["index"].to_list() == idx[:3].tolist()
    assert report.to_polars().height == len(idx)
    assert report.summary().startswith("mse=0, ") and report.summary().endswith(f"n={len(idx)}")


def test_evaluate_uses_the_model_normalization(
    dataset: Dataset, caplog: pytest.LogCaptureFixture
) -> None:
    model = init_model(ARCHITECTURES["m1"], seed=0, norm=dataset.norm)
    report = evaluate(model, dataset)
    assert len(report.indices) == len(dataset.split.test)
    other = NormStats(mu=np.full(16, 500.0), sigma=np.full(16, 50.0))
    with caplog.at_level(logging.WARNING):
        again = evaluate(model, dataclasses.replace(dataset, norm=other))
    assert "different NormStats" in caplog.text
    assert np.array_equal(again.kappa_pred, report.kappa_pred)
    # without its own stats the model falls back on the dataset's
    bare = dataclasses.replace(model, norm=None)
    assert np.array_equal(evaluate(bare, dataset).kappa_pred, report.kappa_pred)


def test_evaluate_warns_about_a_different_length(dataset: Dataset, caplog: pytest.LogCaptureFixture) -> None:
    model = init_model(ARCHITECTURES["m1"], seed=0, norm=dataset.norm)
    model.length = 0.3
    with caplog.at_level(logging.WARNING):
        evaluate(model, dataset)
    assert "trained at length 0.3 m" in caplog.text


def test_evaluate_needs_split_and_normalization(dataset: Dataset) -> None:
    bare = init_model(ARCHITECTURES["m1"], seed=0)
    with pytest.raises(MissingNormalization):
        evaluate(bare, dataclasses.replace(dataset, norm=None))
    with pytest.raises(MissingSplit):
        evaluate(init_model(ARCHITECTURES["m1"], seed=0, norm=dataset.norm), generate(2, 2))


def test_kfold_on_four_samples() -> None:
    results = kfold(ModelSpec.from_notation("F3"), generate(2, 2), k=2, epochs=3)
    assert [r.fold for r in results] == [0, 1]
    assert all(math.isfinite(r.mse) and r.history.epochs == 3 for r in results)
    assert [r.mse for r in results] == [r.history.val_mse[-1] for r in results]


def test_kfold_normalizes_with_training_folds_only() -> None:
    data = generate(6, 5, SensorModelConfig(seed=4))
    spec = ARCHITECTURES["m2"]
    before = kfold(spec, data, k=3, epochs=2, seed=1)
    held_out = fold_indices(len(data), 3, seed=1)[0]
    counts = np.array(data.counts)
    counts[held_out] = 1023 - counts[held_out]
    after = kfold(spec, dataclasses.replace(data, counts=counts), k=3, epochs=2, seed=1)
    # fold 0 trains on folds 1 and 2, which are untouched
    assert after[0].history.train_mse == before[0].history.train_mse
    assert after[1].history.train_mse != before[1].history.train_mse


@pytest.fixture(scope="module")
def cv_report():
    registry = {name: ARCHITECTURES[name] for name in ("m1", "m2")}
    data = generate(6, 5, SensorModelConfig(seed=2))
    return crossval_study(registry, data, TrainConfig(batch_size=8), k=3, epochs=2, seed=0)


def test_crossval_report(cv_report) -> None:
    assert [r.name for r in cv_report.results] == ["m1", "m2"]
    folds = cv_report.folds_table()
    assert folds.columns == ["model", "fold", "mse"] and folds.height == 6
    summary = cv_report.summary_table()
    assert summary.columns == ["model", "mean_mse", "std_mse", "param_count"]
    for row in summary.iter_rows(named=True):
        mse = folds.filter(folds["model"] == row["model"])["mse"].to_numpy()
        assert row["mean_mse"] == pytest.approx(mse.mean())
        assert row["std_mse"] == pytest.approx(mse.std(ddof=0))
    assert summary["param_count"].to_list() == [323, 259]
    assert cv_report.best.mean_mse == summary["mean_mse"].min()
    assert cv_report["m2"].notation == "C(8,2),F3"
    with pytest.raises(KeyError):
        cv_report["m9"]


def test_crossval_curves(cv_report) -> None:
    curves = cv_report.curves_table()
    assert curves.columns == ["model", "fold", "epoch", "train_mse", "val_mse"]
    assert curves.height == 2 * 3 * 2
    last = curves.filter(curves["epoch"] == 2).sort("model", "fold")["val_mse"].to_list()
    assert last == pytest.approx(cv_report.folds_table().sort("model", "fold")["mse"].to_list())


def test_crossval_is_deterministic(cv_report) -> None:
    registry = {name: ARCHITECTURES[name] for name in ("m1", "m2")}
    data = generate(6, 5, SensorModelConfig(seed=2))
    again = crossval_study(registry, data, TrainConfig(batch_size=8), k=3, epochs=2, seed=0, max_workers=2)
    for a, b in zip(again.results, cv_report.results):
        assert a.fold_mse == pytest.approx(b.fold_mse, rel=1e-12)


def test_crossval_warns_about_published_sizes(caplog: pytest.LogCaptureFixture) -> None:
    with caplog.at_level(logging.WARNING):
        crossval_study({"m1": ARCHITECTURES["m1"]}, generate(2, 2), k=2, epochs=1)
    assert "published size is 306" in caplog.text


if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO)
    pytest.main([__file__])
