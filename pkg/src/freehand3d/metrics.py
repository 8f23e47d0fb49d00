"""Trajectory error metrics: drift rates, drift sums, Hausdorff distance, angle error."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geometry import FrameGeometry, compose_trajectory, frame_centers, frame_corners, wrap_degrees

METRIC_NAMES = ("FDR", "ADR", "MD", "SD", "HD", "MEA")
METRIC_UNITS = {"FDR": "%", "ADR": "%", "MD": "mm", "SD": "mm", "HD": "mm", "MEA": "deg"}


class MetricError(ValueError):
    pass


@dataclass
class ScanMetrics:
    FDR: float
    ADR: float
    MD: float
    SD: float
    HD: float
    MEA: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def drift_from_positions(est, gt) -> tuple[float, float, float, float]:
    """(FDR %, ADR %, MD, SD) from [N, 3] estimated and ground-truth frame centres."""
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape or est.ndim != 2 or est.shape[0] < 2:
        raise MetricError(f"need matching [N>=2, 3] positions, got {est.shape} and {gt.shape}")
    length = float(np.linalg.norm(np.diff(gt, axis=0), axis=1).sum())
    if length < 1e-6:
        raise MetricError("ground-truth trajectory has (near) zero length")
    d = np.linalg.norm(est - gt, axis=1)
    return 100.0 * d[-1] / length, 100.0 * d.mean() / length, float(d.max()), float(d.sum())


def drift_metrics(est_transforms, gt_transforms, geometry: FrameGeometry):
    return drift_from_positions(frame_centers(est_transforms, geometry), frame_centers(gt_transforms, geometry))


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance between two [P, 3] point sets (all pairs)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise MetricError("hausdorff: empty point set")
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def mean_angle_error(pred_params, gt_params) -> float:
    pred = np.asarray(pred_params, dtype=np.float64)
    gt = np.asarray(gt_params, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricError(f"shapes differ: {pred.shape} vs {gt.shape}")
    return float(np.abs(wrap_degrees(pred[..., 3:6] - gt[..., 3:6])).mean())


def scan_metrics(pred_params, gt_params, geometry: FrameGeometry) -> ScanMetrics:
    """All six metrics for one scan from relative pose parameters."""
    est_T = compose_trajectory(pred_params)
    gt_T = compose_trajectory(gt_params)
    fdr, adr, md, sd = drift_metrics(est_T, gt_T, geometry)
    hd = hausdorff(frame_corners(est_T, geometry), frame_corners(gt_T, geometry))
    return ScanMetrics(fdr, adr, md, sd, hd, mean_angle_error(pred_params, gt_params))


def aggregate(rows: list[ScanMetrics]) -> dict[str, tuple[float, float]]:
    """Mean and population standard deviation of every metric."""
    table = np.array([[getattr(r, k) for k in METRIC_NAMES] for r in rows])
    return {k: (float(table[:, i].mean()), float(table[:, i].std())) for i, k in enumerate(METRIC_NAMES)}


def format_row(label: str, agg: dict[str, tuple[float, float]]) -> str:
    """One table row in ``mean(std)`` form."""
    cells = [f"{agg[k][0]:.2f}({agg[k][1]:.1f})" for k in METRIC_NAMES]
    return " | ".join([label] + cells)
