"""
Labeled datasets of (sensor frame, curvature state) pairs: grid generation,
train/validation/test splitting, Z-score normalization, target encoding and
the one-record-per-line CSV format.
"""
from __future__ import annotations

import dataclasses
import enum
import logging
import math
import re
import time
import warnings
from collections.abc import Iterable, Iterator

import numpy as np
import numpy.typing as npt

from etexshape.kinematics import DEFAULT_LENGTH, CurvatureState, kappa_max
from etexshape.sensor import ADC_MAX, GRID_SHAPE, N_CHANNELS, SensorFrame, SensorModelConfig, frames_from_states

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8
DEGENERATE_NORM = 1e-9

CSV_COLUMNS: tuple[str, ...] = (
    *(f"a{row}{col}" for row in range(GRID_SHAPE[0]) for col in range(GRID_SHAPE[1])),
    "kappa",
    "phi",
)
CSV_HEADER = ",".join(CSV_COLUMNS)
_COUNT_PATTERN = re.compile(r"[0-9]+")

FeatureImage = npt.NDArray[np.float64]
"""Normalized 4x4 grid (or a stack of them, shape (n, 4, 4))."""

TargetVector = npt.NDArray[np.float64]
"""(kappa / kappa_max, cos(phi), sin(phi)), or a stack of them, shape (n, 3)."""


class ParseError(ValueError):
    """A frame record that cannot be turned into a Sample."""

    def __init__(self, column: str, reason: str, line_number: int | None = None) -> None:
        self.column = column
        self.reason = reason
        self.line_number = line_number
        where = f"line {line_number}, " if line_number is not None else ""
        super().__init__(f"{where}column {column!r}: {reason}")

    def at_line(self, line_number: int) -> ParseError:
        return ParseError(self.column, self.reason, line_number)


class MissingSplit(ValueError):
    """The dataset has no train/val/test assignment yet."""


class MissingNormalization(ValueError):
    """No normalization statistics are available."""


class DegenerateAngle(UserWarning):
    """A predicted (cos, sin) pair is too short to define an angle; phi was set to 0."""


class SplitName(enum.StrEnum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclasses.dataclass(frozen=True)
class Sample:
    frame: SensorFrame
    label: CurvatureState


@dataclasses.dataclass(frozen=True, eq=False)
class Split:
    train: npt.NDArray[np.int64]
    val: npt.NDArray[np.int64]
    test: npt.NDArray[np.int64]
    seed: int | None = None

    def __getitem__(self, name: str | SplitName) -> npt.NDArray[np.int64]:
        return getattr(self, SplitName(name).value)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


@dataclasses.dataclass(frozen=True, eq=False)
class NormStats:
    """Per-channel mean and standard deviation of the raw counts, fitted on training samples."""

    mu: npt.NDArray[np.float64]
    sigma: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=np.float64).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=np.float64).reshape(-1)
        if mu.shape != (N_CHANNELS,) or sigma.shape != (N_CHANNELS,):
            raise ValueError(f"expected {N_CHANNELS} channels: {mu.shape=}, {sigma.shape=}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("normalization statistics must be finite")
        if np.any(sigma < SIGMA_FLOOR):
            raise ValueError(f"sigma entries must be >= {SIGMA_FLOOR}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NormStats):
            return NotImplemented
        return bool(np.array_equal(self.mu, other.mu) and np.array_equal(self.sigma, other.sigma))

    def to_dict(self) -> dict[str, list[float]]:
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> NormStats:
        return cls(mu=np.asarray(data["mu"]), sigma=np.asarray(data["sigma"]))


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered (frame, label) pairs stored column-wise, plus optional split and normalization."""

    counts: npt.NDArray[np.int64]
    """(n, 4, 4) ADC counts."""
    kappa: npt.NDArray[np.float64]
    phi: npt.NDArray[np.float64]
    length: float = DEFAULT_LENGTH
    split: Split | None = None
    norm: NormStats | None = None

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1, *GRID_SHAPE)
        kappa = np.asarray(self.kappa, dtype=np.float64).reshape(-1)
        phi = np.asarray(self.phi, dtype=np.float64).reshape(-1)
        if not len(counts) == len(kappa) == len(phi):
            raise ValueError(f"length mismatch: {len(counts)=}, {len(kappa)=}, {len(phi)=}")
        if self.split is not None:
            indices = np.concatenate([self.split.train, self.split.val, self.split.test])
            assert np.array_equal(np.sort(indices), np.arange(len(counts))), (
                "split index lists must partition the dataset"
            )
        for name, value in (("counts", counts), ("kappa", kappa), ("phi", phi)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def __len__(self) -> int:
        return len(self.kappa)

    def __getitem__(self, index: int) -> Sample:
        return Sample(
            frame=SensorFrame(self.counts[index]),
            label=CurvatureState(float(self.kappa[index]), float(self.phi[index]), self.length),
        )

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))

    @property
    def samples(self) -> tuple[Sample, ...]:
        return tuple(self)

    @classmethod
    def from_samples(cls, samples: Iterable[Sample]) -> Dataset:
        samples = tuple(samples)
        lengths = {s.label.length for s in samples}
        if len(lengths) > 1:
            raise ValueError(f"samples from sections of different length: {sorted(lengths)}")
        return cls(
            counts=np.array([s.frame.counts for s in samples], dtype=np.int64).reshape(-1, *GRID_SHAPE),
            kappa=np.array([s.label.kappa for s in samples], dtype=np.float64),
            phi=np.array([s.label.phi for s in samples], dtype=np.float64),
            length=lengths.pop() if lengths else DEFAULT_LENGTH,
        )

    def indices(self, name: str | SplitName) -> npt.NDArray[np.int64]:
        if self.split is None:
            raise MissingSplit("dataset has no train/val/test split: call split() first")
        return self.split[name]

    def targets(self, indices: npt.ArrayLike | None = None) -> TargetVector:
        """Encoded regression targets, shape (n, 3)."""
        idx = slice(None) if indices is None else np.asarray(indices)
        return encode_targets(self.kappa[idx], self.phi[idx], self.length)

    def images(self, indices: npt.ArrayLike | None = None, norm: NormStats | None = None) -> FeatureImage:
        """Normalized feature images, shape (n, 4, 4)."""
        norm = norm or self.norm
        if norm is None:
            raise MissingNormalization("no NormStats: call fit_normalization() first")
        idx = slice(None) if indices is None else np.asarray(indices)
        return apply_normalization(self.counts[idx], norm)


def kappa_grid(n_kappa: int, length: float = DEFAULT_LENGTH) -> npt.NDArray[np.float64]:
    return np.linspace(0.0, kappa_max(length), n_kappa)


def phi_grid(n_phi: int) -> npt.NDArray[np.float64]:
    """`n_phi` evenly spaced angles over (-pi, pi], ending exactly at pi.

    >>> phi_grid(4).tolist() == [-math.pi / 2, 0.0, math.pi / 2, math.pi]
    True
    """
    step = math.tau / n_phi
    return np.array([math.pi - step * m for m in range(n_phi - 1, -1, -1)])


def generate(
    n_kappa: int = 35,
    n_phi: int = 38,
    config: SensorModelConfig | None = None,
    length: float = DEFAULT_LENGTH,
) -> Dataset:
    """Simulate one frame per (kappa, phi) grid point; kappa varies slowest.

    Examples:
        >>> len(generate())
        1330
        >>> generate(2, 1).kappa.tolist() == [0.0, kappa_max()]
        True
    """
    if n_kappa < 2 or n_phi < 1:
        raise ValueError(f"grid too small: {n_kappa=} (>= 2), {n_phi=} (>= 1)")
    config = config or SensorModelConfig()
    t0 = time.time()
    states = [
        CurvatureState(float(kappa), float(phi), length)
        for kappa in kappa_grid(n_kappa, length)
        for phi in phi_grid(n_phi)
    ]
    counts = frames_from_states(states, config)
    dataset = Dataset(
        counts=counts,
        kappa=np.array([s.kappa for s in states]),
        phi=np.array([s.phi for s in states]),
        length=length,
    )
    logger.info(f"generated {len(dataset)} samples in {time.time() - t0:.2f} s ({config = })")
    return dataset


def split_sizes(n: int) -> tuple[int, int, int]:
    """70/15/15 partition sizes, floors for train and val and the remainder for test.

    >>> split_sizes(1330)
    (931, 199, 200)
    >>> split_sizes(10)
    (7, 1, 2)
    """
    n_train = 7 * n // 10
    n_val = 3 * n // 20
    return n_train, n_val, n - n_train - n_val


def split(dataset: Dataset, seed: int = 0) -> Dataset:
    """Shuffle sample indices with a seeded generator and partition them 70/15/15.

    Any previously fitted normalization is dropped, since it belonged to the old split.
    """
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(len(dataset))
    n_train, n_val, _ = split_sizes(len(dataset))
    parts = Split(
        train=order[:n_train],
        val=order[n_train : n_train + n_val],
        test=order[n_train + n_val :],
        seed=seed,
    )
    logger.debug(f"split {len(dataset)} samples into {parts.sizes} with {seed = }")
    return dataclasses.replace(dataset, split=parts, norm=None)


def norm_stats_from_counts(counts: npt.ArrayLike) -> NormStats:
    """Population mean and standard deviation of each of the 16 channels, sigma floored.

    >>> stats = norm_stats_from_counts([np.full((4, 4), 500), np.full((4, 4), 540)])
    >>> float(stats.mu[0]), float(stats.sigma[0])
    (520.0, 20.0)
    """
    channels = np.asarray(counts, dtype=np.float64).reshape(-1, N_CHANNELS)
    if len(channels) == 0:
        raise ValueError("cannot fit normalization on zero samples")
    return NormStats(mu=channels.mean(axis=0), sigma=np.maximum(channels.std(axis=0), SIGMA_FLOOR))


def fit_normalization(dataset: Dataset) -> NormStats:
    """Z-score statistics from the training split only."""
    train = dataset.indices(SplitName.TRAIN)
    if len(train) == 0:
        raise ValueError("training split is empty")
    return norm_stats_from_counts(dataset.counts[train])


def with_normalization(dataset: Dataset) -> Dataset:
    """`dataset` with NormStats fitted on its training split attached."""
    return dataclasses.replace(dataset, norm=fit_normalization(dataset))


def apply_normalization(frame: SensorFrame | npt.ArrayLike, norm: NormStats) -> FeatureImage:
    """(count - mu) / sigma at each grid position; accepts one frame or a stack.

    >>> norm = NormStats(mu=np.full(16, 512.0), sigma=np.full(16, 100.0))
    >>> apply_normalization(SensorFrame(np.full((4, 4), 612)), norm).tolist()[0]
    [1.0, 1.0, 1.0, 1.0]
    """
    counts = frame.counts if isinstance(frame, SensorFrame) else np.asarray(frame)
    shape = counts.shape
    channels = counts.reshape(-1, N_CHANNELS).astype(np.float64)
    return ((channels - norm.mu) / norm.sigma).reshape(shape)


def denormalize(image: npt.ArrayLike, norm: NormStats) -> npt.NDArray[np.float64]:
    """Inverse of `apply_normalization` (counts as floats)."""
    image = np.asarray(image, dtype=np.float64)
    return (image.reshape(-1, N_CHANNELS) * norm.sigma + norm.mu).reshape(image.shape)


def encode_targets(
    kappa: npt.ArrayLike, phi: npt.ArrayLike, length: float = DEFAULT_LENGTH
) -> TargetVector:
    kappa = np.asarray(kappa, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    return np.stack([kappa / kappa_max(length), np.cos(phi), np.sin(phi)], axis=-1)


def encode_target(label: CurvatureState) -> TargetVector:
    """(kappa / kappa_max, cos(phi), sin(phi)) for one label.

    >>> encode_target(CurvatureState(0.0)).tolist()
    [0.0, 1.0, 0.0]
    """
    return encode_targets(label.kappa, label.phi, label.length)


def decode_targets(
    t: npt.ArrayLike, length: float = DEFAULT_LENGTH
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64], npt.NDArray[np.bool_]]:
    """Decode a stack of (possibly unnormalized) predictions to (kappa, phi, degenerate).

    phi is 0 wherever the (cos, sin) part is shorter than 1e-9.
    """
    t = np.asarray(t, dtype=np.float64).reshape(-1, 3)
    kappa = np.clip(t[:, 0], 0.0, 1.0) * kappa_max(length)
    degenerate = np.hypot(t[:, 1], t[:, 2]) < DEGENERATE_NORM
    phi = np.where(degenerate, 0.0, np.arctan2(t[:, 2], t[:, 1]))
    # arctan2 returns -pi for (-1, -0.0); keep phi in (-pi, pi]
    phi = np.where(phi <= -math.pi, math.pi, phi)
    return kappa, phi, degenerate


def decode_target(
    t: npt.ArrayLike, length: float = DEFAULT_LENGTH, strict: bool = False
) -> CurvatureState:
    """Curvature state from one target/prediction vector.

    Examples:
        >>> s = decode_target([1.0, 0.0, 1.0])
        >>> round(s.kappa, 4), round(s.phi, 4)
        (8.7266, 1.5708)
        >>> decode_target([0.5, 0.0, 0.0], strict=True)
        Traceback (most recent call last):
        ...
        etexshape.dataset.DegenerateAngle: ...
    """
    kappa, phi, degenerate = decode_targets(t, length)
    if degenerate[0]:
        message = DegenerateAngle(f"cannot recover phi from {np.asarray(t).tolist()}: set to 0")
        if strict:
            raise message
        warnings.warn(message, stacklevel=2)
    return CurvatureState(float(kappa[0]), float(phi[0]), length)


def _parse_int(field: str, column: str) -> int:
    # ASCII digits only, no sign or underscores
    if not _COUNT_PATTERN.fullmatch(field):
        raise ParseError(column, f"not an integer: {field!r}")
    value = int(field)
    if not 0 <= value <= ADC_MAX:
        raise ParseError(column, f"count {value} outside [0, {ADC_MAX}]")
    return value


def _parse_float(field: str, column: str) -> float:
    try:
        value = float(field)
    except ValueError:
        raise ParseError(column, f"not a number: {field!r}") from None
    if not math.isfinite(value):
        raise ParseError(column, f"not finite: {field!r}")
    return value


def parse_frame_line(line: str, length: float = DEFAULT_LENGTH) -> Sample:
    """One CSV record: 16 counts a00..a33 (row-major), then kappa (1/m) and phi (rad).

    Comment lines ('#') and the header are the caller's business.

    Examples:
        >>> s = parse_frame_line("700," + "512," * 15 + "5.0, 0.0")
        >>> int(s.frame.counts[0, 0]), s.label.kappa, s.label.phi
        (700, 5.0, 0.0)
        >>> parse_frame_line("512," * 14 + "512")
        Traceback (most recent call last):
        ...
        etexshape.dataset.ParseError: column '<record>': expected 18 fields, got 15
    """
    fields = [f.strip() for f in line.strip().split(",")]
    if len(fields) != len(CSV_COLUMNS):
        raise ParseError("<record>", f"expected {len(CSV_COLUMNS)} fields, got {len(fields)}")
    counts = [_parse_int(f, c) for f, c in zip(fields[:N_CHANNELS], CSV_COLUMNS)]
    kappa = _parse_float(fields[N_CHANNELS], "kappa")
    phi = _parse_float(fields[N_CHANNELS + 1], "phi")
    if not 0 <= kappa <= kappa_max(length) * (1 + 1e-12):
        raise ParseError("kappa", f"{kappa} outside the workspace [0, {kappa_max(length):.6f}]")
    if not -math.pi <= phi <= math.pi:
        raise ParseError("phi", f"{phi} outside [-pi, pi]")
    return Sample(
        frame=SensorFrame(np.array(counts, dtype=np.int64).reshape(GRID_SHAPE)),
        label=CurvatureState(kappa, phi, length),
    )


def format_frame_line(sample: Sample) -> str:
    """Canonical CSV record for a sample; `parse_frame_line` inverts it exactly.

    >>> format_frame_line(parse_frame_line("512," * 16 + "0.0,0.0"))
    '512,512,512,512,512,512,512,512,512,512,512,512,512,512,512,512,0.0,0.0'
    """
    counts = ",".join(str(int(c)) for c in sample.frame.channels)
    return f"{counts},{float(sample.label.kappa)!r},{float(sample.label.phi)!r}"


if __name__ == "__main__":
    from npc_io import testmod

    testmod()
