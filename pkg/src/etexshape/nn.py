"""
A small neural-network engine for 4x4 feature images: valid (stride 1, no
padding) 2D convolution, dense layers, tanh/linear activations, MSE loss,
analytic backpropagation, Adam and a mini-batch training loop.

Everything is float64 numpy. Conv activations are laid out (N, H, W, C),
conv weights (kernels, size, size, in_channels), dense weights (in, out).
"""
from __future__ import annotations

import dataclasses
import enum
import logging
import math
import re
import time
from collections.abc import Sequence
from typing import Any

import numpy as np
import numpy.typing as npt
import polars as pl
import tqdm

from etexshape.dataset import Dataset, MissingNormalization, NormStats, SplitName

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]
Shape = tuple[int, ...]

INPUT_SHAPE = (4, 4, 1)
PREDICT_BATCH_SIZE = 64


class ShapeMismatch(ValueError):
    """Tensor or parameter shapes are inconsistent with each other or with a model spec."""


class Activation(enum.StrEnum):
    TANH = "tanh"
    LINEAR = "linear"


class LayerKind(enum.StrEnum):
    CONV = "conv"
    DENSE = "dense"
    FLATTEN = "flatten"


@dataclasses.dataclass(frozen=True)
class LayerSpec:
    """One layer. `units` is the kernel count of a conv layer or the width of a dense layer."""

    kind: LayerKind
    units: int = 0
    size: int = 0
    """Square kernel size (conv only)."""
    activation: Activation = Activation.LINEAR

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LayerKind(self.kind))
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.kind == LayerKind.CONV and (self.units < 1 or self.size < 1):
            raise ValueError(f"conv layer needs kernels >= 1 and size >= 1: {self}")
        if self.kind == LayerKind.DENSE and self.units < 1:
            raise ValueError(f"dense layer needs units >= 1: {self}")
        if self.kind == LayerKind.FLATTEN and (self.units or self.size):
            raise ValueError(f"flatten layer takes no units or size: {self}")

    @classmethod
    def conv(cls, kernels: int, size: int, activation: Activation = Activation.TANH) -> LayerSpec:
        return cls(LayerKind.CONV, kernels, size, activation)

    @classmethod
    def dense(cls, units: int, activation: Activation = Activation.TANH) -> LayerSpec:
        return cls(LayerKind.DENSE, units, 0, activation)

    @classmethod
    def flatten(cls) -> LayerSpec:
        return cls(LayerKind.FLATTEN)

    @property
    def has_params(self) -> bool:
        return self.kind != LayerKind.FLATTEN

    def __str__(self) -> str:
        if self.kind == LayerKind.CONV:
            return f"C({self.units},{self.size})"
        if self.kind == LayerKind.DENSE:
            return f"F{self.units}"
        return "flatten"


_TOKEN = re.compile(r"C\(\d+,\d+\)|F\d+")


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    """Declarative layer list for a (4, 4, 1) input.

    A flatten is implied before the first dense layer that follows spatial
    activations, including at the very start when there is no conv layer.

    Examples:
        >>> spec = ModelSpec.from_notation("C(8,2),F3")
        >>> [str(layer) for layer in spec.resolved]
        ['C(8,2)', 'flatten', 'F3']
        >>> [str(layer) for layer in ModelSpec.from_notation("F16,F3").resolved]
        ['flatten', 'F16', 'F3']
    """

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int] = INPUT_SHAPE
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        if not self.layers:
            raise ValueError("model needs at least one layer")
        if self.layers[-1].kind != LayerKind.DENSE:
            raise ValueError(f"the output layer must be dense, got {self.layers[-1]}")
        self.shapes()  # validates

    @classmethod
    def from_notation(cls, text: str, name: str = "") -> ModelSpec:
        """Parse compact layer notation, e.g. "C(32,2),C(16,2),F8,F3".

        Hidden layers use tanh, the last dense layer is linear.
        """
        normalized = re.sub(r"\s+", "", text).upper().replace("_", "")
        tokens = _TOKEN.findall(normalized)
        if not tokens or ",".join(tokens) != normalized:
            raise ValueError(f"cannot parse layer notation {text!r} (expected e.g. 'C(8,2),F3')")
        layers = []
        for i, token in enumerate(tokens):
            activation = Activation.LINEAR if i == len(tokens) - 1 else Activation.TANH
            if token.startswith("C"):
                kernels, size = (int(v) for v in token[2:-1].split(","))
                layers.append(LayerSpec.conv(kernels, size, activation))
            else:
                layers.append(LayerSpec.dense(int(token[1:]), activation))
        return cls(tuple(layers), name=name)

    @property
    def notation(self) -> str:
        return ",".join(str(layer) for layer in self.layers if layer.kind != LayerKind.FLATTEN)

    @property
    def resolved(self) -> tuple[LayerSpec, ...]:
        """Layers with the implicit flatten inserted."""
        resolved: list[LayerSpec] = []
        spatial = True
        for layer in self.layers:
            if layer.kind == LayerKind.DENSE and spatial:
                resolved.append(LayerSpec.flatten())
                spatial = False
            elif layer.kind == LayerKind.FLATTEN:
                spatial = False
            resolved.append(layer)
        return tuple(resolved)

    def shapes(self) -> list[tuple[LayerSpec, Shape, Shape]]:
        """(layer, input shape, output shape) for every resolved layer, without the batch axis."""
        result = []
        shape: Shape = self.input_shape
        for layer in self.resolved:
            if layer.kind == LayerKind.CONV:
                if len(shape) != 3:
                    raise ShapeMismatch(f"{layer} cannot follow a flattened activation")
                h, w, _ = shape
                if layer.size > min(h, w):
                    raise ShapeMismatch(f"{layer} kernel larger than its {h}x{w} input")
                out: Shape = (h - layer.size + 1, w - layer.size + 1, layer.units)
            elif layer.kind == LayerKind.FLATTEN:
                if len(shape) != 3:
                    raise ShapeMismatch("flatten applied twice")
                out = (math.prod(shape),)
            else:
                out = (layer.units,)
            result.append((layer, shape, out))
            shape = out
        return result

    def param_shapes(self) -> list[tuple[Shape, Shape]]:
        """(weights shape, bias shape) for every layer that has parameters."""
        shapes = []
        for layer, in_shape, _ in self.shapes():
            if layer.kind == LayerKind.CONV:
                shapes.append(((layer.units, layer.size, layer.size, in_shape[-1]), (layer.units,)))
            elif layer.kind == LayerKind.DENSE:
                shapes.append(((in_shape[0], layer.units), (layer.units,)))
        return shapes

    @property
    def output_dim(self) -> int:
        return self.layers[-1].units

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "layers": [
                {"kind": str(l.kind), "units": l.units, "size": l.size, "activation": str(l.activation)}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelSpec:
        return cls(
            layers=tuple(LayerSpec(**layer) for layer in data["layers"]),
            input_shape=tuple(data.get("input_shape", INPUT_SHAPE)),
            name=data.get("name", ""),
        )


def param_count(spec: ModelSpec) -> int:
    """Learnable scalars (weights + biases).

    >>> param_count(ModelSpec.from_notation("C(8,2),F3"))
    259
    >>> param_count(ModelSpec.from_notation("F3"))
    51
    >>> param_count(ModelSpec.from_notation("C(32,2),C(16,2),F8,F3"))
    2771
    """
    return sum(math.prod(w) + math.prod(b) for w, b in spec.param_shapes())


@dataclasses.dataclass(eq=False)
class Model:
    """A ModelSpec with its parameter tensors and the NormStats its inputs were normalized with.

    `split_seed` and `length` record the split and arc length of the dataset it was
    trained on, when known, so that evaluation can rebuild the same test split.
    """

    spec: ModelSpec
    weights: list[Array]
    biases: list[Array]
    norm: NormStats | None = None
    split_seed: int | None = None
    length: float | None = None

    def __post_init__(self) -> None:
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        expected = self.spec.param_shapes()
        actual = [(w.shape, b.shape) for w, b in zip(self.weights, self.biases)]
        if len(self.weights) != len(self.biases) or actual != expected:
            raise ShapeMismatch(f"parameter shapes {actual} do not match spec {expected}")

    @property
    def params(self) -> list[Array]:
        """Parameter tensors in layer order: [W0, b0, W1, b1, ...]."""
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    @params.setter
    def params(self, values: Sequence[Array]) -> None:
        if len(values) != 2 * len(self.weights):
            raise ShapeMismatch(f"expected {2 * len(self.weights)} tensors, got {len(values)}")
        self.weights = list(values[0::2])
        self.biases = list(values[1::2])

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.params)

    def to_dict(self) -> dict[str, Any]:
        return {
            "spec": self.spec.to_dict(),
            "params": [
                {"weights": w.reshape(-1).tolist(), "bias": b.reshape(-1).tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
            "norm": None if self.norm is None else self.norm.to_dict(),
            "split_seed": self.split_seed,
            "length": self.length,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Model:
        spec = ModelSpec.from_dict(data["spec"])
        shapes = spec.param_shapes()
        if len(data["params"]) != len(shapes):
            raise ShapeMismatch(f"{len(data['params'])} parameter groups for {len(shapes)} layers")
        weights, biases = [], []
        for (w_shape, b_shape), group in zip(shapes, data["params"]):
            w, b = np.asarray(group["weights"], dtype=np.float64), np.asarray(group["bias"], dtype=np.float64)
            if w.size != math.prod(w_shape) or b.size != math.prod(b_shape):
                raise ShapeMismatch(f"parameter group sizes {w.size}/{b.size} do not fit {w_shape}/{b_shape}")
            weights.append(w.reshape(w_shape))
            biases.append(b.reshape(b_shape))
        norm = data.get("norm")
        split_seed, length = data.get("split_seed"), data.get("length")
        return cls(
            spec,
            weights,
            biases,
            norm=None if norm is None else NormStats.from_dict(norm),
            split_seed=None if split_seed is None else int(split_seed),
            length=None if length is None else float(length),
        )


def init_model(spec: ModelSpec, seed: int | np.random.Generator = 0, norm: NormStats | None = None) -> Model:
    """Glorot-uniform weights, zero biases.

    >>> model = init_model(ModelSpec.from_notation("C(8,2),F3"), seed=1)
    >>> [w.shape for w in model.weights]
    [(8, 2, 2, 1), (72, 3)]
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for w_shape, b_shape in spec.param_shapes():
        if len(w_shape) == 4:
            k, s, _, c = w_shape
            fan_in, fan_out = s * s * c, s * s * k
        else:
            fan_in, fan_out = w_shape
        limit = math.sqrt(6 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=w_shape))
        biases.append(np.zeros(b_shape))
    return Model(spec, weights, biases, norm)


# forward ---------------------------------------------------------------------- #


def activate(z: Array, activation: Activation) -> Array:
    return np.tanh(z) if activation == Activation.TANH else z


def _activation_grad(a: Array, activation: Activation) -> Array:
    """Derivative of the activation, written in terms of its output."""
    return 1.0 - a * a if activation == Activation.TANH else np.ones_like(a)


def _windows(x: Array, size: int) -> Array:
    """(N, H, W, C) -> (N, H-size+1, W-size+1, C, size, size) view of every receptive field."""
    return np.lib.stride_tricks.sliding_window_view(x, (size, size), axis=(1, 2))


def conv2d_forward(
    x: npt.ArrayLike, weights: npt.ArrayLike, bias: npt.ArrayLike, activation: Activation = Activation.LINEAR
) -> Array:
    """Valid cross-correlation with stride 1, then the activation.

    Accepts one (H, W, C) input or a (N, H, W, C) batch.

    Examples:
        >>> out = conv2d_forward(np.ones((4, 4, 1)), np.ones((1, 2, 2, 1)), np.zeros(1))
        >>> out.shape, float(out.min()), float(out.max())
        ((3, 3, 1), 4.0, 4.0)
    """
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    single = x.ndim == 3
    batch = x[np.newaxis] if single else x
    if batch.ndim != 4 or weights.ndim != 4:
        raise ShapeMismatch(f"expected (N, H, W, C) input and 4D weights: {x.shape=}, {weights.shape=}")
    k, s, s2, c = weights.shape
    if s != s2 or c != batch.shape[-1] or bias.shape != (k,):
        raise ShapeMismatch(f"{weights.shape=} / {bias.shape=} do not fit input {x.shape}")
    if s > min(batch.shape[1:3]):
        raise ShapeMismatch(f"kernel size {s} larger than input {batch.shape[1:3]}")
    out = activate(np.einsum("nyxcij,kijc->nyxk", _windows(batch, s), weights) + bias, activation)
    return out[0] if single else out


def dense_forward(
    x: npt.ArrayLike, weights: npt.ArrayLike, bias: npt.ArrayLike, activation: Activation = Activation.LINEAR
) -> Array:
    """act(W^T x + b) for one vector or a (N, in) batch.

    >>> dense_forward([1.0, 2.0], [[1.0], [1.0]], [0.5]).tolist()
    [3.5]
    """
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 2 or x.shape[-1] != weights.shape[0] or bias.shape != (weights.shape[1],):
        raise ShapeMismatch(f"{x.shape=} does not fit {weights.shape=} / {bias.shape=}")
    return activate(x @ weights + bias, activation)


def _as_batch(images: npt.ArrayLike, input_shape: Shape) -> tuple[Array, bool]:
    """Images as a (N, H, W, C) batch, and whether a single image was given."""
    x = np.asarray(images, dtype=np.float64)
    if x.shape in (input_shape, input_shape[:2]):
        return x.reshape(1, *input_shape), True
    if x.shape[1:] in (input_shape, input_shape[:2]):
        return x.reshape(len(x), *input_shape), False
    raise ShapeMismatch(f"cannot interpret shape {x.shape} as image(s) of shape {input_shape}")


def _forward_trace(model: Model, batch: Array) -> list[Array]:
    """Activations of every resolved layer, starting with the input batch."""
    trace = [batch]
    params = iter(zip(model.weights, model.biases))
    for layer in model.spec.resolved:
        a = trace[-1]
        if layer.kind == LayerKind.FLATTEN:
            trace.append(a.reshape(len(a), -1))
            continue
        w, b = next(params)
        forward_fn = conv2d_forward if layer.kind == LayerKind.CONV else dense_forward
        trace.append(forward_fn(a, w, b, layer.activation))
    return trace


def forward(model: Model, images: npt.ArrayLike) -> Array:
    """Prediction for one 4x4 image, shape (output_dim,), or a batch, shape (N, output_dim).

    >>> model = init_model(ModelSpec.from_notation("C(16,2),C(8,2),F16,F8,F3"))
    >>> forward(model, np.zeros((4, 4))).shape
    (3,)
    """
    batch, single = _as_batch(images, model.spec.input_shape)
    out = _forward_trace(model, batch)[-1]
    return out[0] if single else out


def predict(model: Model, images: npt.ArrayLike, batch_size: int = PREDICT_BATCH_SIZE) -> Array:
    """Batched inference over a stack of images, shape (N, output_dim)."""
    batch, _ = _as_batch(images, model.spec.input_shape)
    if len(batch) == 0:
        return np.zeros((0, model.spec.output_dim))
    return np.concatenate(
        [_forward_trace(model, batch[i : i + batch_size])[-1] for i in range(0, len(batch), batch_size)]
    )


# loss and gradients ----------------------------------------------------------- #


def mse_loss(pred: npt.ArrayLike, target: npt.ArrayLike) -> float:
    """Squared error summed over target components, averaged over the batch.

    >>> mse_loss([[1.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]])
    1.0
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if pred.shape != target.shape:
        raise ShapeMismatch(f"{pred.shape=} != {target.shape=}")
    if len(pred) == 0:
        return math.nan
    return float(np.sum((pred - target) ** 2) / len(pred))


def loss_and_gradients(model: Model, images: npt.ArrayLike, targets: npt.ArrayLike) -> tuple[float, list[Array]]:
    """MSE over the batch and its exact gradient w.r.t. `model.params` (same order and shapes)."""
    batch, _ = _as_batch(images, model.spec.input_shape)
    y = np.asarray(targets, dtype=np.float64).reshape(len(batch), -1)
    trace = _forward_trace(model, batch)
    if trace[-1].shape != y.shape:
        raise ShapeMismatch(f"prediction shape {trace[-1].shape} != target shape {y.shape}")
    n = len(batch)
    loss = float(np.sum((trace[-1] - y) ** 2) / n)

    grad_w: list[Array] = []
    grad_b: list[Array] = []
    param_index = len(model.weights)
    delta = 2.0 * (trace[-1] - y) / n  # dL/d(output activation)
    layers = model.spec.resolved
    for i in range(len(layers) - 1, -1, -1):
        layer, a_in, a_out = layers[i], trace[i], trace[i + 1]
        if layer.kind == LayerKind.FLATTEN:
            delta = delta.reshape(a_in.shape)
            continue
        param_index -= 1
        w = model.weights[param_index]
        dz = delta * _activation_grad(a_out, layer.activation)
        if layer.kind == LayerKind.DENSE:
            grad_w.append(a_in.T @ dz)
            grad_b.append(dz.sum(axis=0))
            delta = dz @ w.T
            continue
        s = layer.size
        grad_w.append(np.einsum("nyxcij,nyxk->kijc", _windows(a_in, s), dz))
        grad_b.append(dz.sum(axis=(0, 1, 2)))
        if i == 0:
            break  # no need for the gradient w.r.t. the input image
        h_out, w_out = dz.shape[1:3]
        delta = np.zeros_like(a_in)
        for dy in range(s):
            for dx in range(s):
                delta[:, dy : dy + h_out, dx : dx + w_out, :] += np.einsum("nyxk,kc->nyxc", dz, w[:, dy, dx, :])
    grads = [g for pair in zip(reversed(grad_w), reversed(grad_b)) for g in pair]
    return loss, grads


def backward(model: Model, images: npt.ArrayLike, targets: npt.ArrayLike) -> list[Array]:
    """Gradient of `mse_loss(forward(model, images), targets)` w.r.t. `model.params`."""
    return loss_and_gradients(model, images, targets)[1]


def numerical_gradients(
    model: Model, images: npt.ArrayLike, targets: npt.ArrayLike, h: float = 1e-6
) -> list[Array]:
    """Central finite-difference gradients of the MSE w.r.t. every parameter (slow)."""
    batch, _ = _as_batch(images, model.spec.input_shape)
    y = np.asarray(targets, dtype=np.float64).reshape(len(batch), -1)
    params = [p.copy() for p in model.params]
    probe = Model(model.spec, [p.copy() for p in model.weights], [p.copy() for p in model.biases])
    grads = []
    for k, p in enumerate(params):
        g = np.zeros_like(p)
        for index in np.ndindex(p.shape):
            values = []
            for step in (h, -h):
                shifted = [q.copy() if j == k else q for j, q in enumerate(params)]
                shifted[k][index] += step
                probe.params = shifted
                values.append(mse_loss(_forward_trace(probe, batch)[-1], y))
            g[index] = (values[0] - values[1]) / (2 * h)
        grads.append(g)
    return grads


def gradient_check(
    model: Model, images: npt.ArrayLike, targets: npt.ArrayLike, h: float = 1e-6
) -> tuple[list[Array], list[Array]]:
    """(analytic, numerical) gradients; compare with `np.allclose(a, n, rtol=1e-4, atol=1e-8)`."""
    return backward(model, images, targets), numerical_gradients(model, images, targets, h)


# optimizer and training loop ---------------------------------------------------- #


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    batch_size: int = 32
    epochs: int = 500
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0: {self.lr!r}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1: {self.batch_size!r}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1: {self.epochs!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"Adam betas must lie in [0, 1): {self.beta1=}, {self.beta2=}")


@dataclasses.dataclass(frozen=True)
class AdamState:
    m: tuple[Array, ...]
    v: tuple[Array, ...]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[Array]) -> AdamState:
        return cls(m=tuple(np.zeros_like(p) for p in params), v=tuple(np.zeros_like(p) for p in params))


def adam_step(
    params: Sequence[Array], grads: Sequence[Array], state: AdamState, config: TrainConfig
) -> tuple[list[Array], AdamState]:
    """One bias-corrected Adam update; returns new parameter tensors and state.

    >>> params, state = adam_step([np.array([1.0])], [np.array([0.5])], AdamState.zeros_like([np.zeros(1)]), TrainConfig())
    >>> round(float(params[0][0]), 6), state.t
    (0.99, 1)
    """
    if not len(params) == len(grads) == len(state.m):
        raise ShapeMismatch(f"{len(params)} params, {len(grads)} grads, {len(state.m)} moments")
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params.append(p - config.lr * m_hat / (np.sqrt(v_hat) + config.eps_adam))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(tuple(new_m), tuple(new_v), t)


@dataclasses.dataclass(frozen=True)
class TrainHistory:
    train_mse: tuple[float, ...]
    val_mse: tuple[float, ...]
    n_steps: int = 0
    """Optimizer steps taken (one per mini-batch)."""

    @property
    def epochs(self) -> int:
        return len(self.train_mse)

    def to_polars(self) -> pl.DataFrame:
        return pl.DataFrame(
            {
                "epoch": list(range(1, self.epochs + 1)),
                "train_mse": list(self.train_mse),
                "val_mse": list(self.val_mse),
            },
            schema={"epoch": pl.Int64, "train_mse": pl.Float64, "val_mse": pl.Float64},
        )


def fit(
    spec: ModelSpec,
    x_train: npt.ArrayLike,
    y_train: npt.ArrayLike,
    x_val: npt.ArrayLike | None = None,
    y_val: npt.ArrayLike | None = None,
    config: TrainConfig | None = None,
    norm: NormStats | None = None,
    progress: bool = False,
) -> tuple[Model, TrainHistory]:
    """Mini-batch Adam on already normalized images and encoded targets."""
    config = config or TrainConfig()
    x, _ = _as_batch(x_train, spec.input_shape)
    y = np.asarray(y_train, dtype=np.float64).reshape(len(x), -1)
    if len(x) == 0:
        raise ValueError("no training samples")
    has_val = x_val is not None and len(np.asarray(x_val)) > 0
    if has_val:
        xv, _ = _as_batch(x_val, spec.input_shape)
        yv = np.asarray(y_val, dtype=np.float64).reshape(len(xv), -1)

    init_seq, shuffle_seq = np.random.SeedSequence(config.seed).spawn(2)
    model = init_model(spec, np.random.default_rng(init_seq), norm)
    rng = np.random.default_rng(shuffle_seq)
    state = AdamState.zeros_like(model.params)
    train_mse, val_mse = [], []
    t0 = time.time()
    epochs = range(config.epochs)
    if progress:
        epochs = tqdm.tqdm(epochs, desc=f"training {spec.name or spec.notation}", unit="epoch", ncols=80)
    for _ in epochs:
        order = rng.permutation(len(x)) if config.shuffle else np.arange(len(x))
        total = 0.0
        for start in range(0, len(x), config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_gradients(model, x[idx], y[idx])
            model.params, state = adam_step(model.params, grads, state, config)
            total += loss * len(idx)
        train_mse.append(total / len(x))
        val_mse.append(mse_loss(predict(model, xv), yv) if has_val else math.nan)
    history = TrainHistory(tuple(train_mse), tuple(val_mse), state.t)
    logger.info(
        f"trained {spec.notation} ({model.param_count} params) for {config.epochs} epochs"
        f" in {time.time() - t0:.2f} s: train_mse={train_mse[-1]:.5f}, val_mse={val_mse[-1]:.5f}"
    )
    return model, history


def train(
    spec: ModelSpec, dataset: Dataset, config: TrainConfig | None = None, progress: bool = False
) -> tuple[Model, TrainHistory]:
    """Train on the dataset's training split, tracking validation MSE each epoch.

    The dataset must already be split and carry NormStats fitted on its training split.
    The returned model records the split seed and arc length of the dataset.
    """
    train_idx = dataset.indices(SplitName.TRAIN)
    val_idx = dataset.indices(SplitName.VAL)
    if dataset.norm is None:
        raise MissingNormalization("fit normalization on the training split before training")
    model, history = fit(
        spec,
        dataset.images(train_idx),
        dataset.targets(train_idx),
        dataset.images(val_idx),
        dataset.targets(val_idx),
        config=config,
        norm=dataset.norm,
        progress=progress,
    )
    model.split_seed = dataset.split.seed if dataset.split is not None else None
    model.length = dataset.length
    return model, history


if __name__ == "__main__":
    from npc_io import testmod

    testmod()
