"""
Synthetic forward model of the 4x4 e-textile piezoresistive matrix.

curvature -> contact pressure per sensing point -> fabric resistance ->
quarter Wheatstone bridge -> 10-bit ADC count.

Rows of a frame run along the section (base to tip), columns around it at
azimuths 0, pi/2, pi, 3pi/2. Noise comes from numpy's PCG64 generator
(`numpy.random.default_rng`) with Gaussian draws from `standard_normal`, so a
fixed seed gives the same frames on every platform.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from collections.abc import Iterable

import numpy as np
import numpy.typing as npt
import polars as pl

from etexshape.kinematics import DEFAULT_LENGTH, CurvatureState, kappa_max

logger = logging.getLogger(__name__)

GRID_SHAPE = (4, 4)
N_CHANNELS = 16
ADC_MAX = 1023
"""Full-scale count of the 10-bit converter."""

COLUMN_AZIMUTHS = np.arange(4) * (math.pi / 2)
ROW_WEIGHTS = np.array([0.85, 1.0, 1.0, 0.85])
"""Taper of the contact pressure toward both ends of the section."""


@dataclasses.dataclass(frozen=True)
class SensorModelConfig:
    r0: float = 10_000.0
    """Unloaded resistance of a sensing point, ohms. Also the three fixed bridge arms."""
    alpha: float = 2e-4
    """Pressure sensitivity, 1/Pa."""
    p_scale: float = 1_000.0
    """Contact pressure per unit curvature, Pa m."""
    sat_pressure: float = 5_000.0
    """Pressure at which the fabric stack saturates, Pa."""
    noise_sigma: float = 0.005
    """Std of additive Gaussian noise on the normalized bridge voltage."""
    vref: float = 5.0
    """Bridge excitation, volts."""
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("r0", "alpha", "p_scale", "sat_pressure", "vref"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and > 0: {value!r}")
        if not math.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be finite and >= 0: {self.noise_sigma!r}")

    @classmethod
    def noise_free_unsaturated(cls, length: float = DEFAULT_LENGTH, **kwargs) -> SensorModelConfig:
        """No noise, and a saturation pressure above anything reachable in the workspace.

        Under this configuration the map (kappa, phi) -> frame is injective on the generation grid.

        >>> SensorModelConfig.noise_free_unsaturated().sat_pressure > 1000 * kappa_max()
        True
        """
        p_scale = kwargs.pop("p_scale", cls.p_scale)
        return cls(
            noise_sigma=0.0,
            p_scale=p_scale,
            sat_pressure=math.ceil(p_scale * kappa_max(length)) + 1.0,
            **kwargs,
        )


@dataclasses.dataclass(frozen=True, eq=False)
class SensorFrame:
    """One sample of the matrix: 4x4 ADC counts, row-major.

    >>> SensorFrame(np.full((4, 4), 512)).counts.dtype
    dtype('int64')
    """

    counts: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.shape != GRID_SHAPE:
            raise ValueError(f"frame must be {GRID_SHAPE}, got shape {counts.shape}")
        if not np.issubdtype(counts.dtype, np.integer):
            raise ValueError(f"frame counts must be integers, got {counts.dtype}")
        if counts.min() < 0 or counts.max() > ADC_MAX:
            raise ValueError(f"frame counts must lie in [0, {ADC_MAX}]: {counts.tolist()}")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SensorFrame):
            return NotImplemented
        return bool(np.array_equal(self.counts, other.counts))

    def __hash__(self) -> int:
        return hash(self.counts.tobytes())

    @property
    def channels(self) -> npt.NDArray[np.int64]:
        """The 16 counts in row-major order (a00, a01, ..., a33)."""
        return self.counts.reshape(-1)


def pressure_field(state: CurvatureState, config: SensorModelConfig) -> npt.NDArray[np.float64]:
    """Contact pressure (Pa) at each sensing point, shape (4, 4).

    Examples:
        >>> p = pressure_field(CurvatureState(5.0, 0.0), SensorModelConfig())
        >>> p[:, 0].tolist()
        [4250.0, 5000.0, 5000.0, 4250.0]
        >>> float(p[:, 1:].max())
        0.0
    """
    azimuthal = np.maximum(0.0, np.cos(COLUMN_AZIMUTHS - state.phi))
    p = config.p_scale * state.kappa * np.outer(ROW_WEIGHTS, azimuthal)
    # round-off leaves ~1e-13 Pa on the columns orthogonal to the bend
    p[p < 1e-9] = 0.0
    return np.clip(p, 0.0, config.sat_pressure)


def resistance(pressure: npt.ArrayLike, config: SensorModelConfig) -> npt.NDArray[np.float64]:
    """Fabric resistance (ohms), inversely related to pressure.

    >>> float(resistance(0.0, SensorModelConfig()))
    10000.0
    >>> float(resistance(5000.0, SensorModelConfig()))
    5000.0
    """
    p = np.asarray(pressure, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("pressure must be >= 0")
    return config.r0 / (1 + config.alpha * p)


def bridge_and_adc(
    resistance: npt.ArrayLike,
    config: SensorModelConfig,
    rng: np.random.Generator | None = None,
) -> npt.NDArray[np.int64]:
    """Quarter Wheatstone bridge (three fixed arms r0) followed by a 10-bit ADC.

    If noise is enabled and no `rng` is given, a generator seeded with
    `config.seed` is used.

    Examples:
        >>> quiet = SensorModelConfig(noise_sigma=0.0)
        >>> int(bridge_and_adc(10_000.0, quiet))
        512
        >>> int(bridge_and_adc(5_000.0, quiet))
        682
    """
    r = np.asarray(resistance, dtype=np.float64)
    if np.any(r <= 0):
        raise ValueError("resistance must be > 0")
    v = config.vref * (config.r0 / (config.r0 + r) - 0.5)
    u = np.clip(v / config.vref + 0.5, 0.0, 1.0)
    if config.noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(config.seed)
        u = u + config.noise_sigma * rng.standard_normal(u.shape)
    return np.clip(np.rint(u * ADC_MAX), 0, ADC_MAX).astype(np.int64)


def frame_from_state(
    state: CurvatureState,
    config: SensorModelConfig,
    rng: np.random.Generator | None = None,
) -> SensorFrame:
    """Simulated reading of the whole matrix for one robot configuration.

    >>> frame = frame_from_state(CurvatureState(0.0), SensorModelConfig(noise_sigma=0.0))
    >>> set(frame.channels.tolist())
    {512}
    """
    counts = bridge_and_adc(resistance(pressure_field(state, config), config), config, rng)
    return SensorFrame(counts)


def frames_from_states(
    states: Iterable[CurvatureState],
    config: SensorModelConfig,
) -> npt.NDArray[np.int64]:
    """Frames for many states, shape (n, 4, 4).

    Each sample gets its own noise stream spawned from `config.seed`, so
    the result does not depend on how the states are batched.
    """
    states = tuple(states)
    if config.noise_sigma > 0:
        children = np.random.SeedSequence(config.seed).spawn(len(states))
        rngs: list[np.random.Generator | None] = [np.random.default_rng(c) for c in children]
    else:
        rngs = [None] * len(states)
    if not states:
        return np.zeros((0, *GRID_SHAPE), dtype=np.int64)
    return np.stack([frame_from_state(s, config, rng).counts for s, rng in zip(states, rngs)])


def response_sweep(
    phi: float = 0.0,
    n_kappa: int = 35,
    config: SensorModelConfig | None = None,
    length: float = DEFAULT_LENGTH,
) -> pl.DataFrame:
    """Noise-free count of every sensing point along a curvature sweep at fixed phi.

    >>> df = response_sweep(0.0, n_kappa=3)
    >>> df.columns
    ['kappa', 'row', 'col', 'count']
    >>> df.height
    48
    """
    config = dataclasses.replace(config or SensorModelConfig(), noise_sigma=0.0)
    rows = []
    for kappa in np.linspace(0.0, kappa_max(length), n_kappa):
        frame = frame_from_state(CurvatureState(float(kappa), phi, length), config)
        for (row, col), count in np.ndenumerate(frame.counts):
            rows.append((float(kappa), row, col, int(count)))
    return pl.DataFrame(
        rows,
        schema={"kappa": pl.Float64, "row": pl.Int64, "col": pl.Int64, "count": pl.Int64},
        orient="row",
    )


if __name__ == "__main__":
    from npc_io import testmod

    testmod()
