"""Viewing-angle arithmetic and yaw estimation from 3D body keypoints."""

from __future__ import annotations

import csv
import enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

REQUIRED_JOINTS = ("left_hip", "right_hip", "left_shoulder", "right_shoulder")

_CSV_COLUMNS = {
    "left_hip": ("lhip_x", "lhip_y", "lhip_z"),
    "right_hip": ("rhip_x", "rhip_y", "rhip_z"),
    "left_shoulder": ("lsho_x", "lsho_y", "lsho_z"),
    "right_shoulder": ("rsho_x", "rsho_y", "rsho_z"),
}
KEYPOINT_CSV_HEADER = ["frame"] + [c for cols in _CSV_COLUMNS.values() for c in cols]

KeypointFrame = Mapping[str, Sequence[float]]


class AngleMode(str, enum.Enum):
    """How two viewing angles are compared.

    ``FULL`` treats angles on the whole circle. ``AXIAL`` folds them modulo
    180 first, for silhouettes where front and back views are ambiguous.
    """

    FULL = "full"
    AXIAL = "axial"

    @classmethod
    def parse(cls, value: "AngleMode | str") -> "AngleMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown angle mode {value!r}; expected 'full' or 'axial'") from None


class DegenerateKeypointsError(ValueError):
    pass


def wrap_degrees(angle):
    """Reduce angle(s) into [0, 360)."""
    out = np.mod(np.asarray(angle, dtype=float), 360.0)
    # np.mod(-1e-17, 360) rounds to 360.0
    out = np.where(out >= 360.0, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def circular_view_distance(v1, v2, mode: AngleMode | str = AngleMode.FULL):
    """Shortest angular distance between views, in degrees.

    Works elementwise on arrays. Result lies in [0, 180] for ``FULL`` and
    [0, 90] for ``AXIAL``.
    """
    mode = AngleMode.parse(mode)
    period = 360.0 if mode is AngleMode.FULL else 180.0
    delta = np.mod(np.abs(np.asarray(v1, dtype=float) - np.asarray(v2, dtype=float)), period)
    dist = np.minimum(delta, period - delta)
    if dist.ndim == 0:
        return float(dist)
    return dist


def view_distance_matrix(views, mode: AngleMode | str = AngleMode.FULL) -> np.ndarray:
    views = np.asarray(views, dtype=float)
    return circular_view_distance(views[:, None], views[None, :], mode)


def _facing_yaw(left: np.ndarray, right: np.ndarray) -> float:
    across = left - right
    # rotate the right->left vector +90 deg about the vertical (y) axis
    fx, fz = across[2], -across[0]
    if np.hypot(fx, fz) < 1e-12:
        raise DegenerateKeypointsError("degenerate keypoints")
    # yaw 0 = facing the camera (-z); a rotation of the body by +theta about y adds theta
    return float(np.arctan2(-fx, -fz))


def estimate_yaw(frames: Sequence[KeypointFrame]) -> float:
    """Estimate the walking direction of a sequence from hips and shoulders.

    The per-coordinate median of each joint over all frames is taken first,
    so isolated outlier frames do not move the estimate. Hip and shoulder
    facing directions are combined by circular mean.

    Args:
        frames: Per-frame mappings from joint name to an (x, y, z) point in
            camera coordinates (x right, y up, z away from the camera).

    Returns:
        Yaw in degrees, in [0, 360). A subject facing the camera has yaw 0.

    Raises:
        ValueError: If ``frames`` is empty or a required joint is missing or
            non-finite.
        DegenerateKeypointsError: If the left and right joints of a pair
            coincide in the ground plane.
    """
    if len(frames) == 0:
        raise ValueError("estimate_yaw needs at least one frame")
    stacked = {}
    for joint in REQUIRED_JOINTS:
        try:
            pts = np.array([np.asarray(f[joint], dtype=float) for f in frames])
        except KeyError:
            raise ValueError(f"missing joint {joint!r}") from None
        if pts.shape[1:] != (3,) or not np.all(np.isfinite(pts)):
            raise ValueError(f"joint {joint!r} must be finite 3D points")
        stacked[joint] = np.median(pts, axis=0)

    hip = _facing_yaw(stacked["left_hip"], stacked["right_hip"])
    shoulder = _facing_yaw(stacked["left_shoulder"], stacked["right_shoulder"])
    s = np.sin(hip) + np.sin(shoulder)
    c = np.cos(hip) + np.cos(shoulder)
    if np.hypot(s, c) < 1e-12:
        raise DegenerateKeypointsError("degenerate keypoints")
    return wrap_degrees(np.degrees(np.arctan2(s, c)))


def read_keypoint_csv(path: str | Path) -> list[dict[str, np.ndarray]]:
    """Load a keypoint CSV (one row per frame) into frames for :func:`estimate_yaw`."""
    frames = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in KEYPOINT_CSV_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for row in reader:
            frames.append(
                {joint: np.array([float(row[c]) for c in cols]) for joint, cols in _CSV_COLUMNS.items()}
            )
    return frames


def write_keypoint_csv(path: str | Path, frames: Sequence[KeypointFrame]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(KEYPOINT_CSV_HEADER)
        for i, frame in enumerate(frames):
            row = [i]
            for joint in REQUIRED_JOINTS:
                row.extend(repr(float(v)) for v in frame[joint])
            writer.writerow(row)
