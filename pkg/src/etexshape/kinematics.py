"""
Constant-curvature kinematics of a one-section continuum robot.

The section bends as a circular arc of curvature `kappa` in the plane at
azimuth `phi` about the base z-axis, with no axial twist. The tip frame is
`Rz(phi) @ Ry(kappa * length) @ Rz(-phi)`.
"""
from __future__ import annotations

import dataclasses
import logging
import math

import numpy as np
import numpy.typing as npt

logger = logging.getLogger(__name__)

DEFAULT_LENGTH = 0.18
"""Arc length of the robot section, meters."""

SMALL_KAPPA = 1e-6
"""Below this curvature (m^-1) the straight-robot limit is used."""

ORTHONORMAL_TOL = 1e-9
CONSTANT_CURVATURE_TOL = 1e-9


class NotConstantCurvature(ValueError):
    """The rotation is not of the form Rz(phi) Ry(theta) Rz(-phi)."""


class OutsideWorkspace(ValueError):
    """The bend angle kappa * length exceeds a quarter circle."""


def wrap_angle(phi: float) -> float:
    """Wrap an angle into (-pi, pi].

    >>> wrap_angle(3 * math.pi / 2)
    -1.5707963267948966
    >>> wrap_angle(-math.pi)
    3.141592653589793
    """
    wrapped = math.remainder(phi, math.tau)
    if wrapped <= -math.pi:
        return math.pi
    return wrapped


def kappa_max(length: float = DEFAULT_LENGTH) -> float:
    """Largest curvature in the workspace: a quarter-circle bend.

    >>> round(kappa_max(0.18), 4)
    8.7266
    """
    return math.pi / (2 * length)


@dataclasses.dataclass(frozen=True)
class CurvatureState:
    """Configuration (kappa, phi, length) of the section.

    `phi` is wrapped into (-pi, pi] on construction and is stored as 0 for a
    straight robot.

    >>> CurvatureState(0.0, 1.2)
    CurvatureState(kappa=0.0, phi=0.0, length=0.18)
    >>> CurvatureState(2.0, -math.pi).phi
    3.141592653589793
    """

    kappa: float
    phi: float = 0.0
    length: float = DEFAULT_LENGTH

    def __post_init__(self) -> None:
        if not math.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"kappa must be finite and >= 0: {self.kappa!r}")
        if not math.isfinite(self.length) or self.length <= 0:
            raise ValueError(f"length must be finite and > 0: {self.length!r}")
        if not math.isfinite(self.phi):
            raise ValueError(f"phi must be finite: {self.phi!r}")
        # frozen: write through object.__setattr__
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "phi", 0.0 if self.kappa == 0 else wrap_angle(float(self.phi)))

    @property
    def theta(self) -> float:
        """Bend angle kappa * length, radians."""
        return self.kappa * self.length

    @property
    def in_workspace(self) -> bool:
        return self.kappa <= kappa_max(self.length) * (1 + 1e-12)


@dataclasses.dataclass(frozen=True)
class TipPose:
    position: npt.NDArray[np.float64]
    """(3,) tip position, meters."""
    orientation: npt.NDArray[np.float64]
    """(3, 3) rotation from base frame to tip frame."""


def rot_z(angle: float) -> npt.NDArray[np.float64]:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(angle: float) -> npt.NDArray[np.float64]:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def tip_pose(state: CurvatureState) -> TipPose:
    """Forward kinematics: tip position and orientation of the arc.

    Examples:
        >>> pose = tip_pose(CurvatureState(0.0))
        >>> pose.position.tolist()
        [0.0, 0.0, 0.18]
        >>> pose = tip_pose(CurvatureState(kappa_max(0.18), 0.0, 0.18))
        >>> np.round(pose.position, 5).tolist()
        [0.11459, 0.0, 0.11459]
    """
    if state.kappa < SMALL_KAPPA:
        return TipPose(position=np.array([0.0, 0.0, state.length]), orientation=np.eye(3))
    theta = state.theta
    # 1 - cos(theta) written as 2 sin^2(theta / 2) to keep precision at small theta
    radial = 2 * math.sin(theta / 2) ** 2 / state.kappa
    position = np.array(
        [
            math.cos(state.phi) * radial,
            math.sin(state.phi) * radial,
            math.sin(theta) / state.kappa,
        ]
    )
    orientation = rot_z(state.phi) @ rot_y(theta) @ rot_z(-state.phi)
    return TipPose(position=position, orientation=orientation)


def backbone(state: CurvatureState, n_points: int = 50) -> npt.NDArray[np.float64]:
    """Positions along the arc from base (s = 0) to tip (s = length), shape (n_points, 3).

    >>> points = backbone(CurvatureState(5.0, 1.2), n_points=11)
    >>> points.shape
    (11, 3)
    >>> bool(np.allclose(points[-1], tip_pose(CurvatureState(5.0, 1.2)).position))
    True
    """
    if n_points < 2:
        raise ValueError(f"need at least 2 points along the backbone: {n_points=}")
    s = np.linspace(0.0, state.length, n_points)
    if state.kappa < SMALL_KAPPA:
        return np.column_stack([np.zeros_like(s), np.zeros_like(s), s])
    radial = 2 * np.sin(state.kappa * s / 2) ** 2 / state.kappa
    return np.column_stack(
        [
            math.cos(state.phi) * radial,
            math.sin(state.phi) * radial,
            np.sin(state.kappa * s) / state.kappa,
        ]
    )


def curvature_from_orientation(
    orientation: npt.ArrayLike,
    length: float = DEFAULT_LENGTH,
    tol: float = CONSTANT_CURVATURE_TOL,
) -> CurvatureState:
    """Invert a tip orientation (e.g. from an IMU at the tip) to (kappa, phi).

    Examples:
        >>> curvature_from_orientation(np.eye(3))
        CurvatureState(kappa=0.0, phi=0.0, length=0.18)
        >>> s = curvature_from_orientation(tip_pose(CurvatureState(5.0, 1.2)).orientation)
        >>> round(s.kappa, 9), round(s.phi, 9)
        (5.0, 1.2)
        >>> curvature_from_orientation(rot_z(0.3))
        Traceback (most recent call last):
        ...
        etexshape.kinematics.NotConstantCurvature: ...
    """
    R = np.asarray(orientation, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValueError(f"orientation must be 3x3, got shape {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), rtol=0, atol=ORTHONORMAL_TOL):
        raise ValueError(f"orientation is not orthonormal within {ORTHONORMAL_TOL}")
    # third column is the tip tangent: (cos(phi) sin(theta), sin(phi) sin(theta), cos(theta))
    theta = math.atan2(math.hypot(R[0, 2], R[1, 2]), R[2, 2])
    kappa = theta / length
    if kappa < SMALL_KAPPA:
        state = CurvatureState(0.0, 0.0, length)
    else:
        state = CurvatureState(kappa, math.atan2(R[1, 2], R[0, 2]), length)
    residual = float(np.max(np.abs(tip_pose(state).orientation - R)))
    if residual > tol:
        raise NotConstantCurvature(
            f"rotation differs from the constant-curvature frame by {residual:.3g} (> {tol})"
        )
    if theta > math.pi / 2 + tol:
        raise OutsideWorkspace(f"bend angle {theta:.6f} rad exceeds a quarter circle")
    logger.debug(f"recovered {state} from orientation ({residual = :.2e})")
    return state


if __name__ == "__main__":
    from npc_io import testmod

    testmod()
