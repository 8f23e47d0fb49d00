from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..geometry import FrameGeometry, apply_transform

log = logging.getLogger(__name__)


@dataclass
class Phantom:
    """Voxel volume centred on the world origin, values in [0, 1]."""

    volume: np.ndarray
    voxel_mm: float
    seed: int

    @property
    def side_mm(self) -> float:
        return (self.volume.shape[0] - 1) * self.voxel_mm

    @property
    def origin(self) -> np.ndarray:
        return np.full(3, -self.side_mm / 2.0)

    def contains(self, points) -> np.ndarray:
        idx = (np.asarray(points) - self.origin) / self.voxel_mm
        return np.all((idx >= 0) & (idx <= self.volume.shape[0] - 1), axis=-1)

    def sample(self, points) -> tuple[np.ndarray, int]:
        """Trilinear samples at [..., 3] world points; outside points read 0."""
        pts = np.asarray(points, dtype=np.float64)
        idx = (pts.reshape(-1, 3) - self.origin) / self.voxel_mm
        vals = ndimage.map_coordinates(self.volume, idx.T, order=1, mode="constant", cval=0.0, prefilter=False)
        outside = int((~self.contains(pts.reshape(-1, 3))).sum())
        return vals.reshape(pts.shape[:-1]), outside


def _standardize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / (x.std() + 1e-12)


def make_phantom(seed: int, side_mm: float = 24.0, voxel_mm: float = 0.3, n_tubes: int = 4, smooth: bool = False) -> Phantom:
    """Band-limited noise at two scales with a few dark tubular structures.

    ``smooth`` drops the fine-scale texture (used for shift tests).
    """
    rng = np.random.default_rng(seed)
    n = int(np.ceil(side_mm / voxel_mm)) + 1
    fine = _standardize(ndimage.gaussian_filter(rng.normal(size=(n, n, n)), sigma=0.5 / voxel_mm * 0.6))
    coarse = _standardize(ndimage.gaussian_filter(rng.normal(size=(n, n, n)), sigma=2.0 / voxel_mm))
    vol = 0.55 + (0.0 if smooth else 0.18) * fine + 0.2 * coarse

    grid = (np.indices((n, n, n)).reshape(3, -1).T * voxel_mm) - (n - 1) * voxel_mm / 2.0
    for _ in range(n_tubes):
        point = rng.uniform(-side_mm / 4, side_mm / 4, size=3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        radius = rng.uniform(0.6, 1.6)
        rel = grid - point
        dist = np.linalg.norm(rel - np.outer(rel @ direction, direction), axis=1).reshape(n, n, n)
        inside = 1.0 / (1.0 + np.exp((dist - radius) / 0.08))
        vol = vol * (1.0 - 0.75 * inside) + 0.08 * inside
    return Phantom(np.clip(vol, 0.0, 1.0), voxel_mm, seed)


def render_frames(phantom: Phantom, world_transforms, geometry: FrameGeometry) -> tuple[np.ndarray, int]:
    """Slice the phantom on each pose's image plane -> ([N, 1, H, W], outside-sample count)."""
    pts = apply_transform(world_transforms, geometry.pixel_grid().reshape(-1, 3))
    vals, outside = phantom.sample(pts)
    if outside:
        log.warning("render_frames: %d samples fell outside the phantom and read 0", outside)
    frames = vals.reshape(-1, 1, geometry.height, geometry.width)
    return frames, outside
