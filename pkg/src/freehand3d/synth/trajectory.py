"""Probe motion patterns: linear, curved, loop and sector sweeps."""

from __future__ import annotations

import numpy as np

from ..config import ConfigError

TACTICS = ("linear", "curved", "loop", "sector")
_AXES = {"x": 3, "y": 4, "z": 5}


def curvature_step_angle(step: float, curvature: float) -> float:
    """Per-step turn (degrees) that puts chord-length ``step`` points on a circle of radius 1/curvature."""
    return float(np.degrees(2.0 * np.arcsin(step * curvature / 2.0)))


def gen_trajectory(
    tactic: str,
    n_frames: int,
    step: float,
    seed: int,
    jitter_deg: float = 0.15,
    jitter_mm: float = 0.02,
    curvature: float | None = None,
    axis: str = "y",
    sweep_deg: float | None = None,
) -> np.ndarray:
    """Relative pose parameters [N-1, 6] for one scan.

    linear: constant elevational step; curved: step plus a constant turn about
    the axial axis (centres on a circle of radius 1/curvature); loop: turns
    summing to 360 degrees about ``axis``; sector: fixed contact point, the
    image plane fans about the lateral axis. Jitter is Gaussian, drawn from
    ``seed``.
    """
    if tactic not in TACTICS:
        raise ConfigError(f"unknown scan tactic {tactic!r}; expected one of {TACTICS}")
    if n_frames < 2 or step <= 0:
        raise ConfigError("need n_frames >= 2 and a positive step")
    if axis not in _AXES:
        raise ConfigError(f"unknown rotation axis {axis!r}")
    rng = np.random.default_rng(seed)
    K = n_frames - 1
    theta = np.zeros((K, 6))
    if tactic == "sector":
        sweep = sweep_deg if sweep_deg is not None else rng.uniform(30.0, 60.0) * rng.choice([-1.0, 1.0])
        theta[:, 3] = sweep / K
    else:
        theta[:, 2] = step
        if tactic == "curved":
            kappa = curvature if curvature is not None else rng.uniform(1 / 25.0, 1 / 10.0) * rng.choice([-1.0, 1.0])
            theta[:, 4] = np.sign(kappa) * curvature_step_angle(step, abs(kappa))
        elif tactic == "loop":
            theta[:, _AXES[axis]] = 360.0 / K
    theta[:, 3:] += rng.normal(scale=jitter_deg, size=(K, 3)) if jitter_deg > 0 else 0.0
    if jitter_mm > 0:
        noise = rng.normal(scale=jitter_mm, size=(K, 3))
        if tactic == "sector":
            noise *= 0.25
        theta[:, :3] += noise
    return theta
