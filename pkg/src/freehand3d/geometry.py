"""Pose parameters, rigid transforms and trajectory composition.

A pose parameter row is (tx, ty, tz, phix, phiy, phiz): millimetres and degrees.
The rotation is R = Rz(phiz) @ Ry(phiy) @ Rx(phix). This single convention is
shared by the data generator, the IMU simulator, the network targets and the
metrics.

Frame-local coordinates: x lateral, y axial (depth), z elevational. Pixel
(row r, column c) sits at ((c - (W-1)/2) * sx, r * sy, 0), so the local origin
is the centre of the transducer face.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

GIMBAL_TOL_DEG = 1e-6


class GimbalLockWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FrameGeometry:
    height: int = 32
    width: int = 32
    sx: float = 0.15
    sy: float = 0.15

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.sx <= 0 or self.sy <= 0:
            raise ValueError(f"frame geometry must be positive: {self}")

    def pixel_grid(self) -> np.ndarray:
        """[H, W, 3] local coordinates of every pixel centre."""
        cols = (np.arange(self.width) - (self.width - 1) / 2.0) * self.sx
        rows = np.arange(self.height) * self.sy
        grid = np.zeros((self.height, self.width, 3))
        grid[..., 0] = cols[None, :]
        grid[..., 1] = rows[:, None]
        return grid

    def center(self) -> np.ndarray:
        return np.array([0.0, (self.height - 1) / 2.0 * self.sy, 0.0])

    def corners(self) -> np.ndarray:
        half = (self.width - 1) / 2.0 * self.sx
        depth = (self.height - 1) * self.sy
        return np.array([[-half, 0.0, 0.0], [half, 0.0, 0.0], [-half, depth, 0.0], [half, depth, 0.0]])


def euler_to_matrix(angles_deg) -> np.ndarray:
    """[..., 3] (phix, phiy, phiz) degrees -> [..., 3, 3] rotation Rz Ry Rx."""
    a = np.radians(np.asarray(angles_deg, dtype=np.float64))
    cx, cy, cz = np.cos(a[..., 0]), np.cos(a[..., 1]), np.cos(a[..., 2])
    sx, sy, sz = np.sin(a[..., 0]), np.sin(a[..., 1]), np.sin(a[..., 2])
    R = np.empty(a.shape[:-1] + (3, 3))
    R[..., 0, 0] = cz * cy
    R[..., 0, 1] = cz * sy * sx - sz * cx
    R[..., 0, 2] = cz * sy * cx + sz * sx
    R[..., 1, 0] = sz * cy
    R[..., 1, 1] = sz * sy * sx + cz * cx
    R[..., 1, 2] = sz * sy * cx - cz * sx
    R[..., 2, 0] = -sy
    R[..., 2, 1] = cy * sx
    R[..., 2, 2] = cy * cx
    return R


def matrix_to_euler(R) -> np.ndarray:
    """Inverse of :func:`euler_to_matrix`, angles in degrees with phiy in [-90, 90]."""
    R = np.asarray(R, dtype=np.float64)
    phiy = np.degrees(np.arcsin(np.clip(-R[..., 2, 0], -1.0, 1.0)))
    if np.any(np.abs(np.abs(phiy) - 90.0) < GIMBAL_TOL_DEG):
        log.warning("matrix_to_euler: gimbal lock, roll and yaw are not separable")
    phix = np.degrees(np.arctan2(R[..., 2, 1], R[..., 2, 2]))
    phiz = np.degrees(np.arctan2(R[..., 1, 0], R[..., 0, 0]))
    return np.stack([phix, phiy, phiz], axis=-1)


def near_gimbal_lock(params) -> bool:
    phiy = np.asarray(params, dtype=np.float64)[..., 4]
    return bool(np.any(np.abs(np.abs(wrap_degrees(phiy)) - 90.0) < GIMBAL_TOL_DEG))


def params_to_transform(params) -> np.ndarray:
    """[..., 6] pose parameters -> [..., 4, 4] homogeneous transforms."""
    p = np.asarray(params, dtype=np.float64)
    T = np.zeros(p.shape[:-1] + (4, 4))
    T[..., :3, :3] = euler_to_matrix(p[..., 3:])
    T[..., :3, 3] = p[..., :3]
    T[..., 3, 3] = 1.0
    return T


def transform_to_params(T) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    return np.concatenate([T[..., :3, 3], matrix_to_euler(T[..., :3, :3])], axis=-1)


def invert_transform(T) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    out = np.zeros_like(T)
    Rt = np.swapaxes(T[..., :3, :3], -1, -2)
    out[..., :3, :3] = Rt
    out[..., :3, 3] = -(Rt @ T[..., :3, 3, None])[..., 0]
    out[..., 3, 3] = 1.0
    return out


def relative_params(T_a, T_b) -> np.ndarray:
    """Pose parameters of T_a^-1 T_b."""
    return transform_to_params(invert_transform(T_a) @ T_b)


def compose_trajectory(params) -> np.ndarray:
    """[N-1, 6] relative parameters -> [N, 4, 4] absolute transforms with T_1 = I."""
    steps = params_to_transform(np.asarray(params, dtype=np.float64).reshape(-1, 6))
    out = np.empty((steps.shape[0] + 1, 4, 4))
    out[0] = np.eye(4)
    for i, step in enumerate(steps):
        out[i + 1] = out[i] @ step
    return out


def apply_transform(T, points) -> np.ndarray:
    """Map [P, 3] local points through [..., 4, 4] transforms -> [..., P, 3]."""
    T = np.asarray(T, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64)
    return np.einsum("...ij,pj->...pi", T[..., :3, :3], pts) + T[..., None, :3, 3]


def frame_centers(transforms, geometry: FrameGeometry) -> np.ndarray:
    return apply_transform(transforms, geometry.center()[None])[..., 0, :]


def frame_corners(transforms, geometry: FrameGeometry) -> np.ndarray:
    """[N, 4, 3] corner positions of every frame."""
    return apply_transform(transforms, geometry.corners())


def wrap_degrees(a) -> np.ndarray:
    """Wrap to [-180, 180)."""
    return (np.asarray(a, dtype=np.float64) + 180.0) % 360.0 - 180.0
