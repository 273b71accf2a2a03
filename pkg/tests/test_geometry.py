import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gouda.geometry import (
    AngleMode,
    DegenerateKeypointsError,
    circular_view_distance,
    estimate_yaw,
    read_keypoint_csv,
    write_keypoint_csv,
    wrap_degrees,
)

angles = st.floats(min_value=-720, max_value=720, allow_nan=False)
modes = st.sampled_from([AngleMode.FULL, AngleMode.AXIAL])


def facing_camera_frame():
    return {
        "left_hip": np.array([0.1, 0.0, 2.0]),
        "right_hip": np.array([-0.1, 0.0, 2.0]),
        "left_shoulder": np.array([0.15, 0.5, 2.0]),
        "right_shoulder": np.array([-0.15, 0.5, 2.0]),
    }


def rotate_y(frame, degrees, center=(0.0, 0.0, 2.0)):
    t = np.radians(degrees)
    R = np.array([[np.cos(t), 0, np.sin(t)], [0, 1, 0], [-np.sin(t), 0, np.cos(t)]])
    c = np.asarray(center)
    return {k: R @ (np.asarray(v) - c) + c for k, v in frame.items()}


@pytest.mark.parametrize(
    "a, b, mode, expected",
    [(350, 10, "full", 20), (0, 180, "axial", 0), (90, 120, "full", 30), (10, 350, "axial", 20), (0, 180, "full", 180)],
)
def test_circular_view_distance_examples(a, b, mode, expected):
    assert circular_view_distance(a, b, mode) == pytest.approx(expected)


@given(angles, angles, modes)
def test_circular_distance_symmetric_and_bounded(a, b, mode):
    d = circular_view_distance(a, b, mode)
    assert d == circular_view_distance(b, a, mode)
    assert 0 <= d <= (180 if mode is AngleMode.FULL else 90)
    assert circular_view_distance(a, a, mode) == 0


@given(angles, angles, angles)
def test_circular_distance_triangle_inequality(a, b, c):
    ab = circular_view_distance(a, b)
    bc = circular_view_distance(b, c)
    ac = circular_view_distance(a, c)
    assert ac <= ab + bc + 1e-9


def test_wrap_degrees_range():
    assert wrap_degrees(-1e-17) == 0.0
    assert wrap_degrees(360.0) == 0.0
    assert wrap_degrees(-90) == 270.0


def test_yaw_facing_camera_is_zero():
    assert estimate_yaw([facing_camera_frame()]) == pytest.approx(0.0, abs=1e-12)


def test_yaw_quarter_turn():
    assert estimate_yaw([rotate_y(facing_camera_frame(), 90)]) == pytest.approx(90.0, abs=1e-9)


def test_yaw_median_discards_outlier_frame():
    outlier = facing_camera_frame()
    outlier["left_hip"] = outlier["left_hip"] + np.array([10.0, 0.0, 0.0])
    # per-coordinate median over (0.1, 10.1, 0.1) is 0.1, so the outlier vanishes
    frames = [facing_camera_frame(), outlier, facing_camera_frame()]
    assert estimate_yaw(frames) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(min_value=0, max_value=360, exclude_max=True))
def test_yaw_rotation_equivariance(theta):
    base = [facing_camera_frame(), rotate_y(facing_camera_frame(), 7.0)]
    base_yaw = estimate_yaw(base)
    rotated = estimate_yaw([rotate_y(f, theta) for f in base])
    assert circular_view_distance(rotated, base_yaw + theta) < 1e-9


@given(
    st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 10),
)
def test_yaw_translation_and_scale_invariance(dx, dy, dz, scale):
    frame = rotate_y(facing_camera_frame(), 33.0)
    moved = {k: scale * np.asarray(v) + np.array([dx, dy, dz]) for k, v in frame.items()}
    assert circular_view_distance(estimate_yaw([moved]), estimate_yaw([frame])) < 1e-9


def test_yaw_errors():
    with pytest.raises(ValueError):
        estimate_yaw([])
    bad = facing_camera_frame()
    bad["right_hip"] = bad["left_hip"] + np.array([0.0, 0.3, 0.0])
    with pytest.raises(DegenerateKeypointsError, match="degenerate keypoints"):
        estimate_yaw([bad])
    missing = facing_camera_frame()
    del missing["left_shoulder"]
    with pytest.raises(ValueError, match="left_shoulder"):
        estimate_yaw([missing])


def test_keypoint_csv_roundtrip(tmp_path):
    frames = [rotate_y(facing_camera_frame(), a) for a in (40, 45, 50)]
    path = tmp_path / "kp.csv"
    write_keypoint_csv(path, frames)
    header = path.read_text().splitlines()[0]
    assert header == "frame,lhip_x,lhip_y,lhip_z,rhip_x,rhip_y,rhip_z,lsho_x,lsho_y,lsho_z,rsho_x,rsho_y,rsho_z"
    assert estimate_yaw(read_keypoint_csv(path)) == pytest.approx(45.0)
