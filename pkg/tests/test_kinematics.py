import logging
import math

import hypothesis
import hypothesis.strategies as st
import numpy as np
import pytest

from etexshape.kinematics import (
    CurvatureState,
    NotConstantCurvature,
    OutsideWorkspace,
    backbone,
    curvature_from_orientation,
    kappa_max,
    rot_y,
    rot_z,
    tip_pose,
    wrap_angle,
)

L = 0.18

workspace_states = st.builds(
    CurvatureState,
    kappa=st.floats(min_value=0.0, max_value=kappa_max(L)),
    phi=st.floats(min_value=-math.pi, max_value=math.pi),
    length=st.just(L),
)


def test_straight_robot() -> None:
    pose = tip_pose(CurvatureState(0.0, 0.7, L))
    assert pose.position.tolist() == [0.0, 0.0, L]
    assert np.array_equal(pose.orientation, np.eye(3))


def test_quarter_circle_tip_position() -> None:
    pose = tip_pose(CurvatureState(kappa_max(L), 0.0, L))
    expected = 2 * L / math.pi
    assert np.allclose(pose.position, [expected, 0.0, expected], rtol=0, atol=1e-12)
    assert round(expected, 5) == 0.11459


@pytest.mark.parametrize("phi", [0.0, 0.4, math.pi / 2, -2.0, math.pi])
@pytest.mark.parametrize("kappa", [0.5, 5.0, kappa_max(L)])
def test_arc_length_of_backbone(kappa: float, phi: float) -> None:
    points = backbone(CurvatureState(kappa, phi, L), n_points=20001)
    arc_length = np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1))
    assert abs(arc_length - L) < 1e-9


def test_backbone_is_planar() -> None:
    """Every point lies in the vertical plane at azimuth phi."""
    phi = 1.1
    points = backbone(CurvatureState(6.0, phi, L))
    normal = np.array([-math.sin(phi), math.cos(phi), 0.0])
    assert np.allclose(points @ normal, 0.0, atol=1e-15)


def test_limit_at_zero_curvature() -> None:
    near = tip_pose(CurvatureState(1e-9, 0.3, L)).position
    assert np.max(np.abs(near - tip_pose(CurvatureState(0.0, 0.0, L)).position)) < 1e-9


def test_small_kappa_is_continuous() -> None:
    below = tip_pose(CurvatureState(0.999e-6, 0.3, L)).position
    above = tip_pose(CurvatureState(1.001e-6, 0.3, L)).position
    assert np.allclose(below, above, atol=1e-7)


def test_orientation_is_a_rotation() -> None:
    R = tip_pose(CurvatureState(7.0, -2.5, L)).orientation
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert math.isclose(np.linalg.det(R), 1.0, abs_tol=1e-12)


def test_round_trip_over_workspace_grid() -> None:
    for kappa in np.linspace(0.0, kappa_max(L), 50):
        for phi in np.linspace(-math.pi, math.pi, 50, endpoint=False) + math.pi / 50:
            state = CurvatureState(float(kappa), float(phi), L)
            recovered = curvature_from_orientation(tip_pose(state).orientation, L)
            assert abs(recovered.kappa - state.kappa) < 1e-8
            if state.kappa >= 1e-6:
                assert abs(wrap_angle(recovered.phi - state.phi)) < 1e-8


@hypothesis.given(state=workspace_states)
def test_round_trip_property(state: CurvatureState) -> None:
    hypothesis.assume(state.kappa == 0 or state.kappa > 1e-3)
    recovered = curvature_from_orientation(tip_pose(state).orientation, L)
    assert recovered.kappa == pytest.approx(state.kappa, abs=1e-8)
    if state.kappa > 0:
        assert abs(wrap_angle(recovered.phi - state.phi)) < 1e-8


def test_identity_orientation() -> None:
    assert curvature_from_orientation(np.eye(3), L) == CurvatureState(0.0, 0.0, L)


def test_twisted_frame_is_rejected() -> None:
    R = tip_pose(CurvatureState(4.0, 0.5, L)).orientation @ rot_z(0.2)
    with pytest.raises(NotConstantCurvature):
        curvature_from_orientation(R, L)


def test_non_orthonormal_matrix_is_rejected() -> None:
    with pytest.raises(ValueError):
        curvature_from_orientation(np.eye(3) * 1.01, L)


def test_bend_past_quarter_circle_is_rejected() -> None:
    with pytest.raises(OutsideWorkspace):
        curvature_from_orientation(rot_y(2.0), L)


@pytest.mark.parametrize(
    "kwargs",
    [{"kappa": -1.0}, {"kappa": math.nan}, {"kappa": 1.0, "length": 0.0}, {"kappa": 1.0, "phi": math.inf}],
)
def test_invalid_states(kwargs: dict) -> None:
    with pytest.raises(ValueError):
        CurvatureState(**kwargs)


def test_state_wraps_phi() -> None:
    assert CurvatureState(1.0, 3 * math.pi / 2).phi == pytest.approx(-math.pi / 2)
    assert CurvatureState(1.0, -math.pi).phi == math.pi
    assert CurvatureState(0.0, 2.0).phi == 0.0


def test_in_workspace() -> None:
    assert CurvatureState(kappa_max(L), 0.0, L).in_workspace
    assert not CurvatureState(kappa_max(L) * 1.01, 0.0, L).in_workspace


if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO)
    pytest.main([__file__])
