import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freehand3d.geometry import FrameGeometry, compose_trajectory, frame_centers
from freehand3d.metrics import (
    MetricError,
    ScanMetrics,
    aggregate,
    drift_from_positions,
    drift_metrics,
    format_row,
    hausdorff,
    mean_angle_error,
    scan_metrics,
)


def brute_force_hausdorff(a, b):
    def directed(p, q):
        worst = 0.0
        for x in p:
            best = np.inf
            for y in q:
                best = min(best, float(np.sqrt(((x - y) ** 2).sum())))
            worst = max(worst, best)
        return worst

    return max(directed(a, b), directed(b, a))


def straight_example():
    gt = np.zeros((11, 3))
    gt[:, 2] = 10.0 * np.arange(11)
    est = gt.copy()
    est[:, 0] = 0.5 * np.arange(11)
    return est, gt


def test_drift_hand_example_exact():
    est, gt = straight_example()
    assert drift_from_positions(est, gt) == (5.0, 2.5, 5.0, 27.5)


def test_drift_zero_for_identical():
    _, gt = straight_example()
    assert drift_from_positions(gt, gt) == (0.0, 0.0, 0.0, 0.0)


def test_drift_rigid_offset_after_pinned_first_frame():
    geom = FrameGeometry()
    gt = np.zeros((6, 6))
    gt[:, 2] = 1.0
    est = gt.copy()
    est[0, 0] = 1.0  # first transition absorbs the offset; frame 1 is pinned
    d = np.linalg.norm(frame_centers(compose_trajectory(est), geom) - frame_centers(compose_trajectory(gt), geom), axis=1)
    np.testing.assert_allclose(d, [0, 1, 1, 1, 1, 1, 1], atol=1e-12)


def test_drift_degenerate_ground_truth():
    with pytest.raises(MetricError):
        drift_from_positions(np.zeros((3, 3)), np.zeros((3, 3)))


@pytest.mark.parametrize(
    "a, b, expected",
    [([[0, 0, 0]], [[3, 4, 0]], 5.0), ([[1, 2, 3], [4, 5, 6]], [[1, 2, 3], [4, 5, 6]], 0.0)],
)
def test_hausdorff_examples(a, b, expected):
    assert hausdorff(np.array(a, float), np.array(b, float)) == expected


@pytest.mark.parametrize("seed", range(10))
def test_hausdorff_matches_brute_force_exactly(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(20, 3)), rng.normal(size=(int(rng.integers(5, 30)), 3))
    assert hausdorff(a, b) == brute_force_hausdorff(a, b)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_hausdorff_symmetric_and_triangle(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.normal(size=(int(rng.integers(1, 10)), 3)) for _ in range(3))
    assert hausdorff(a, b) == hausdorff(b, a)
    assert hausdorff(a, c) <= hausdorff(a, b) + hausdorff(b, c) + 1e-12


def test_hausdorff_empty():
    with pytest.raises(MetricError):
        hausdorff(np.zeros((0, 3)), np.zeros((2, 3)))


def test_mea_examples():
    gt = np.random.default_rng(0).normal(size=(5, 6))
    assert mean_angle_error(gt, gt) == 0.0
    off = gt.copy()
    off[:, 3:] += 2.0
    assert mean_angle_error(off, gt) == pytest.approx(2.0)
    assert mean_angle_error([[0, 0, 0, 179.0, 0, 0]], [[0, 0, 0, -179.0, 0, 0]]) == pytest.approx(2.0 / 3.0)


def test_scan_metrics_perfect_prediction():
    gt = np.zeros((9, 6))
    gt[:, 2] = 0.25
    gt[:, 4] = 1.0
    m = scan_metrics(gt, gt, FrameGeometry())
    assert m == ScanMetrics(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def test_drift_metrics_from_transforms():
    geom = FrameGeometry()
    gt = np.zeros((4, 6))
    gt[:, 2] = 1.0
    fdr, adr, md, sd = drift_metrics(compose_trajectory(gt), compose_trajectory(gt), geom)
    assert (fdr, adr, md, sd) == (0.0, 0.0, 0.0, 0.0)


def test_aggregate_matches_recomputation():
    rng = np.random.default_rng(1)
    rows = [ScanMetrics(*rng.uniform(0, 10, size=6)) for _ in range(7)]
    agg = aggregate(rows)
    for key in ("FDR", "MEA"):
        vals = [getattr(r, key) for r in rows]
        mean = sum(vals) / len(vals)
        std = (sum((v - mean) ** 2 for v in vals) / len(vals)) ** 0.5
        assert agg[key][0] == pytest.approx(mean, rel=1e-12)
        assert agg[key][1] == pytest.approx(std, rel=1e-12)


def test_single_scan_std_zero():
    agg = aggregate([ScanMetrics(1, 2, 3, 4, 5, 6)])
    assert all(std == 0.0 for _, std in agg.values())


def test_format_row():
    agg = aggregate([ScanMetrics(0, 0, 0, 0, 0, 0)])
    assert format_row("model", agg) == "model | " + " | ".join(["0.00(0.0)"] * 6)
