"""Shared helpers for the test suite.

Random rigid motions are built from scratch here (Rodrigues form) so the
tests never lean on the library's own pose constructors for expected values.
"""

import numpy as np
import pytest

from xmodreg import CameraIntrinsics, Pose


def rotation_about(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix, written out longhand as an oracle."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    k = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(angle_rad) * k + (1.0 - np.cos(angle_rad)) * (k @ k)


def random_rotation(rng: np.random.Generator, max_deg: float = 180.0) -> np.ndarray:
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-9:
        axis = rng.normal(size=3)
    angle = np.deg2rad(rng.uniform(-max_deg, max_deg))
    return rotation_about(axis, angle)


def random_pose(rng: np.random.Generator, max_deg: float = 180.0, max_t: float = 2.0) -> Pose:
    return Pose(random_rotation(rng, max_deg), rng.uniform(-max_t, max_t, size=3))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def intr_vga():
    return CameraIntrinsics(fx=570.0, fy=570.0, cx=320.0, cy=240.0, width=640, height=480)
