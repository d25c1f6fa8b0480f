import logging
import math

import numpy as np
import pytest

from etexshape.dataset import MissingNormalization, MissingSplit, generate, split, with_normalization
from etexshape.evaluation import ARCHITECTURES, STUDY_MODELS
from etexshape.nn import (
    Activation,
    AdamState,
    LayerKind,
    LayerSpec,
    Model,
    ModelSpec,
    ShapeMismatch,
    TrainConfig,
    adam_step,
    backward,
    conv2d_forward,
    dense_forward,
    fit,
    forward,
    gradient_check,
    init_model,
    loss_and_gradients,
    mse_loss,
    param_count,
    predict,
    train,
)
from etexshape.sensor import SensorModelConfig


def zero_model(spec: ModelSpec) -> Model:
    model = init_model(spec)
    model.params = [np.zeros_like(p) for p in model.params]
    return model


def naive_forward(model: Model, image: np.ndarray) -> np.ndarray:
    """Loop-by-loop reference: one output element at a time."""
    a = np.asarray(image, dtype=np.float64).reshape(model.spec.input_shape)
    params = iter(zip(model.weights, model.biases))
    for layer in model.spec.resolved:
        if layer.kind == LayerKind.FLATTEN:
            a = a.reshape(-1)
            continue
        w, b = next(params)
        act = np.tanh if layer.activation == Activation.TANH else (lambda z: z)
        if layer.kind == LayerKind.DENSE:
            a = np.array([act(b[j] + sum(a[i] * w[i, j] for i in range(len(a)))) for j in range(len(b))])
            continue
        k, s, _, c = w.shape
        h, wd = a.shape[0] - s + 1, a.shape[1] - s + 1
        out = np.zeros((h, wd, k))
        for y in range(h):
            for x in range(wd):
                for kk in range(k):
                    total = b[kk]
                    for dy in range(s):
                        for dx in range(s):
                            for cc in range(c):
                                total += w[kk, dy, dx, cc] * a[y + dy, x + dx, cc]
                    out[y, x, kk] = act(total)
        a = out
    return a


# layers ----------------------------------------------------------------------- #


def test_conv_output_shape() -> None:
    rng = np.random.default_rng(0)
    out = conv2d_forward(rng.normal(size=(4, 4, 1)), rng.normal(size=(8, 2, 2, 1)), np.zeros(8), Activation.TANH)
    assert out.shape == (3, 3, 8)


def test_conv_identity_kernel() -> None:
    x = np.random.default_rng(1).normal(size=(4, 4, 1))
    assert np.array_equal(conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1)), x)


def test_conv_all_ones() -> None:
    out = conv2d_forward(np.ones((4, 4, 1)), np.ones((1, 2, 2, 1)), np.zeros(1))
    assert out.shape == (3, 3, 1) and (out == 4.0).all()


@pytest.mark.parametrize("size", [1, 2, 3, 4])
@pytest.mark.parametrize("hw", [(4, 4), (5, 3), (6, 6)])
def test_conv_shape_algebra(size: int, hw: tuple[int, int]) -> None:
    h, w = hw
    if size > min(h, w):
        with pytest.raises(ShapeMismatch):
            conv2d_forward(np.zeros((h, w, 2)), np.zeros((3, size, size, 2)), np.zeros(3))
        return
    out = conv2d_forward(np.zeros((h, w, 2)), np.zeros((3, size, size, 2)), np.zeros(3))
    assert out.shape == (h - size + 1, w - size + 1, 3)


def test_conv_channel_mismatch() -> None:
    with pytest.raises(ShapeMismatch):
        conv2d_forward(np.zeros((4, 4, 2)), np.zeros((3, 2, 2, 1)), np.zeros(3))


def test_dense_examples() -> None:
    x = np.array([0.3, -1.2, 2.0])
    assert np.array_equal(dense_forward(x, np.eye(3), np.zeros(3)), x)
    assert np.allclose(dense_forward(x, np.zeros((3, 2)), [0.5, -1.0], Activation.TANH), np.tanh([0.5, -1.0]))
    assert dense_forward([1.0, 2.0], [[1.0], [1.0]], [0.5]).tolist() == [3.5]
    with pytest.raises(ShapeMismatch):
        dense_forward([1.0, 2.0, 3.0], [[1.0], [1.0]], [0.5])


@pytest.mark.parametrize("kind", ["conv", "dense"])
def test_linear_layers_are_affine(kind: str) -> None:
    rng = np.random.default_rng(2)
    if kind == "conv":
        w, b, shape = rng.normal(size=(4, 2, 2, 1)), rng.normal(size=4), (4, 4, 1)
        f = lambda v: conv2d_forward(v, w, b)  # noqa: E731
    else:
        w, b, shape = rng.normal(size=(16, 5)), rng.normal(size=5), (16,)
        f = lambda v: dense_forward(v, w, b)  # noqa: E731
    x, y = rng.normal(size=shape), rng.normal(size=shape)
    a, c = 1.7, -0.4
    assert np.allclose(f(a * x + c * y), a * f(x) + c * f(y) - (a + c - 1) * f(np.zeros(shape)), atol=1e-12)


# model ------------------------------------------------------------------------ #


@pytest.mark.parametrize("name", sorted(ARCHITECTURES))
def test_zero_model_outputs_zero(name: str) -> None:
    model = zero_model(ARCHITECTURES[name])
    assert not forward(model, np.random.default_rng(3).normal(size=(4, 4))).any()


def test_reference_head_has_three_outputs() -> None:
    model = init_model(ARCHITECTURES["ref"], seed=4)
    assert forward(model, np.zeros((4, 4))).shape == (3,)
    assert forward(model, np.zeros((7, 4, 4))).shape == (7, 3)
    assert forward(model, np.zeros((7, 4, 4, 1))).shape == (7, 3)
    with pytest.raises(ShapeMismatch):
        forward(model, np.zeros((4, 5)))


@pytest.mark.parametrize("name", sorted(ARCHITECTURES))
def test_forward_matches_naive_loops(name: str) -> None:
    rng = np.random.default_rng(5)
    model = init_model(ARCHITECTURES[name], seed=rng)
    images = rng.normal(size=(10, 4, 4))
    batched = forward(model, images)
    for image, out in zip(images, batched):
        assert np.allclose(out, naive_forward(model, image), rtol=1e-12, atol=1e-12)


def test_predict_matches_forward() -> None:
    model = init_model(ARCHITECTURES["m5"], seed=6)
    images = np.random.default_rng(6).normal(size=(150, 4, 4))
    assert np.allclose(predict(model, images, batch_size=64), forward(model, images), rtol=0, atol=1e-12)
    assert predict(model, np.zeros((0, 4, 4))).shape == (0, 3)


def test_param_counts() -> None:
    counts = {name: param_count(ARCHITECTURES[name]) for name in ARCHITECTURES}
    assert counts == {"m1": 323, "m2": 259, "m3": 223, "m4": 699, "m5": 2771, "ref": 1291}
    assert param_count(ModelSpec.from_notation("F3")) == 51
    for name, spec in ARCHITECTURES.items():
        assert init_model(spec).param_count == counts[name]


def test_implicit_flatten() -> None:
    assert [str(l) for l in ARCHITECTURES["m1"].resolved] == ["flatten", "F16", "F3"]
    assert [str(l) for l in ARCHITECTURES["m3"].resolved] == ["C(8,2)", "C(4,2)", "flatten", "F3"]
    assert [l.activation for l in ARCHITECTURES["m5"].layers] == ["tanh", "tanh", "tanh", "linear"]


@pytest.mark.parametrize("text", ["", "C(8,2)", "F3,,F3", "C(8;2),F3", "F3,C(8,2)", "C(0,2),F3", "C(8,5),F3"])
def test_bad_notation(text: str) -> None:
    with pytest.raises(ValueError):
        ModelSpec.from_notation(text)


def test_layer_spec_validation() -> None:
    with pytest.raises(ValueError):
        LayerSpec.dense(0)
    with pytest.raises(ValueError):
        LayerSpec(LayerKind.FLATTEN, units=3)
    assert str(LayerSpec.conv(16, 2)) == "C(16,2)"


def test_model_dict_round_trip() -> None:
    model = init_model(ARCHITECTURES["m4"], seed=7)
    again = Model.from_dict(model.to_dict())
    assert again.spec == model.spec
    assert all(np.array_equal(a, b) for a, b in zip(again.params, model.params))
    model.split_seed, model.length = 3, 0.2
    again = Model.from_dict(model.to_dict())
    assert (again.split_seed, again.length) == (3, 0.2)
    data = model.to_dict()
    data["params"][0]["bias"] = data["params"][0]["bias"][:-1]
    with pytest.raises(ShapeMismatch):
        Model.from_dict(data)


# loss and gradients ----------------------------------------------------------- #


def test_mse_examples() -> None:
    pred = np.random.default_rng(8).normal(size=(6, 3))
    assert mse_loss(pred, pred) == 0.0
    assert mse_loss([[1.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]]) == 1.0
    target = np.zeros((6, 3))
    assert mse_loss(2 * pred, target) == pytest.approx(4 * mse_loss(pred, target), rel=1e-14)
    with pytest.raises(ShapeMismatch):
        mse_loss(np.zeros((2, 3)), np.zeros((3, 3)))


@pytest.mark.parametrize("name", STUDY_MODELS)
def test_gradients_match_finite_differences(name: str) -> None:
    rng = np.random.default_rng(STUDY_MODELS.index(name))
    for _ in range(5):
        model = init_model(ARCHITECTURES[name], seed=rng)
        image, target = rng.normal(size=(4, 4)), rng.normal(size=3)
        analytic, numerical = gradient_check(model, image, target, h=1e-6)
        assert [a.shape for a in analytic] == [p.shape for p in model.params]
        for a, n in zip(analytic, numerical):
            assert np.allclose(a, n, rtol=1e-4, atol=1e-8), f"{name}: max abs diff {np.abs(a - n).max():.3g}"


def test_gradients_match_finite_differences_on_a_batch() -> None:
    rng = np.random.default_rng(9)
    model = init_model(ARCHITECTURES["m3"], seed=rng)
    analytic, numerical = gradient_check(model, rng.normal(size=(5, 4, 4)), rng.normal(size=(5, 3)))
    for a, n in zip(analytic, numerical):
        assert np.allclose(a, n, rtol=1e-4, atol=1e-8)


def test_output_bias_gradient_is_mean_residual() -> None:
    rng = np.random.default_rng(10)
    model = init_model(ARCHITECTURES["ref"], seed=rng)
    images, targets = rng.normal(size=(8, 4, 4)), rng.normal(size=(8, 3))
    residual = forward(model, images) - targets
    grads = backward(model, images, targets)
    assert np.allclose(grads[-1], 2 * residual.mean(axis=0), rtol=1e-12, atol=1e-15)


def test_zero_model_has_zero_output_weight_gradient() -> None:
    model = zero_model(ARCHITECTURES["ref"])
    grads = backward(model, np.random.default_rng(11).normal(size=(4, 4)), np.zeros(3))
    assert not grads[-2].any()


def test_loss_and_gradients_report_the_loss() -> None:
    rng = np.random.default_rng(12)
    model = init_model(ARCHITECTURES["m2"], seed=rng)
    images, targets = rng.normal(size=(4, 4, 4)), rng.normal(size=(4, 3))
    loss, _ = loss_and_gradients(model, images, targets)
    assert loss == pytest.approx(mse_loss(forward(model, images), targets), rel=1e-14)


# optimizer -------------------------------------------------------------------- #


def test_adam_zero_gradient_keeps_parameters() -> None:
    params = [np.array([1.0, -2.0]), np.array([[0.5]])]
    new, state = adam_step(params, [np.zeros(2), np.zeros((1, 1))], AdamState.zeros_like(params), TrainConfig())
    assert all(np.array_equal(a, b) for a, b in zip(new, params))
    assert state.t == 1


@pytest.mark.parametrize("g", [1e-5, 0.3, -2.0, 1e4])
def test_adam_first_step_is_about_lr(g: float) -> None:
    config = TrainConfig()
    params = [np.array([0.0])]
    new, _ = adam_step(params, [np.array([g])], AdamState.zeros_like(params), config)
    step = float(new[0][0])
    assert math.copysign(1.0, step) == -math.copysign(1.0, g)
    assert config.lr * abs(g) / (abs(g) + config.eps_adam) * (1 - 1e-12) <= abs(step) <= config.lr


def test_adam_descends_a_quadratic() -> None:
    config = TrainConfig(lr=0.01)
    params = [np.array([1.0])]
    state = AdamState.zeros_like(params)
    history = [1.0]
    for _ in range(50):
        params, state = adam_step(params, [2 * params[0]], state, config)
        history.append(float(params[0][0]))
    assert (np.diff(history) < 0).all()


# training --------------------------------------------------------------------- #


@pytest.fixture(scope="module")
def small_dataset():
    data = generate(12, 10, SensorModelConfig.noise_free_unsaturated())
    return with_normalization(split(data, seed=0))


def test_train_needs_split_and_normalization() -> None:
    data = generate(3, 4)
    with pytest.raises(MissingSplit):
        train(ARCHITECTURES["m1"], data, TrainConfig(epochs=1))
    with pytest.raises(MissingNormalization):
        train(ARCHITECTURES["m1"], split(data), TrainConfig(epochs=1))


def test_one_full_batch_epoch_is_one_step(small_dataset) -> None:
    n_train = len(small_dataset.split.train)
    model, history = train(ARCHITECTURES["m2"], small_dataset, TrainConfig(epochs=1, batch_size=n_train))
    assert history.n_steps == 1
    assert len(history.train_mse) == len(history.val_mse) == 1
    assert model.norm == small_dataset.norm


def test_training_reduces_loss(small_dataset) -> None:
    _, history = train(ARCHITECTURES["ref"], small_dataset, TrainConfig(epochs=50))
    assert history.epochs == 50
    assert history.train_mse[-1] < history.train_mse[0]
    assert history.n_steps == 50 * math.ceil(len(small_dataset.split.train) / 32)


def test_training_is_deterministic(small_dataset) -> None:
    config = TrainConfig(epochs=5, seed=3)
    a, history_a = train(ARCHITECTURES["m3"], small_dataset, config)
    b, history_b = train(ARCHITECTURES["m3"], small_dataset, config)
    assert history_a == history_b
    assert all(np.array_equal(p, q) for p, q in zip(a.params, b.params))
    c, _ = train(ARCHITECTURES["m3"], small_dataset, TrainConfig(epochs=5, seed=4))
    assert not all(np.array_equal(p, q) for p, q in zip(a.params, c.params))


def test_fit_without_validation_records_nan() -> None:
    rng = np.random.default_rng(13)
    _, history = fit(ARCHITECTURES["m1"], rng.normal(size=(10, 4, 4)), rng.normal(size=(10, 3)), config=TrainConfig(epochs=2))
    assert all(math.isnan(v) for v in history.val_mse)
    assert history.to_polars().columns == ["epoch", "train_mse", "val_mse"]


@pytest.mark.parametrize("kwargs", [{"lr": 0.0}, {"batch_size": 0}, {"epochs": 0}, {"beta1": 1.0}])
def test_invalid_train_config(kwargs: dict) -> None:
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO)
    pytest.main([__file__])
