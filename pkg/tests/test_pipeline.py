import hashlib

import numpy as np
import pytest

from freehand3d.autodiff import ContractError
from freehand3d.cli import main
from freehand3d.config import AdaptConfig, DataConfig, NetConfig, PipelineConfig, TrainConfig, format_config, replace
from freehand3d.fusion import PoseNet
from freehand3d.geometry import FrameGeometry
from freehand3d.losses import loss_sup
from freehand3d.nn import halving_lr
from freehand3d.pipeline import (
    TrainingError,
    adapt,
    evaluate,
    load_model,
    mean_val_loss,
    predict,
    read_trajectory,
    reconstruct,
    save_model,
    train,
    write_trajectory,
)
from freehand3d.synth import generate_scan, list_scans, read_scan
from freehand3d.synth.imu import ImuSample

TINY_NET = NetConfig(
    image_size=(16, 16), stem_channels=4, channels=(8, 12), feature_dim=8, coarse_dim=8,
    d_state=4, conv_kernel=3, heads=2, num_imus=2,
)
TINY_DATA = DataConfig(num_scans=4, image_size=(16, 16), num_imus=2, n_frames_min=6, n_frames_max=6, phantom_size_mm=12.0)


def replace_net(**kw):
    return replace(TINY_NET, **kw)


def tiny_scan(seed, tactic="curved", n=6, corrupt=False):
    return generate_scan(TINY_DATA, seed=seed, tactic=tactic, n_frames=n, corrupt=corrupt, scan_id=f"s{seed}")


@pytest.mark.parametrize("epoch, lr", [(1, 2e-4), (30, 2e-4), (31, 1e-4), (60, 1e-4), (61, 5e-5), (91, 2.5e-5)])
def test_lr_schedule(epoch, lr):
    assert halving_lr(2e-4, epoch, 30) == lr


def test_one_epoch_log_and_checkpoint(tmp_path):
    scans = [tiny_scan(0), tiny_scan(1)]
    cfg = TrainConfig(epochs=1, augment=False)
    model, history = train(TINY_NET, cfg, scans[:1], scans[1:], log_path=tmp_path / "log.csv")
    assert len(history) == 1
    rows = (tmp_path / "log.csv").read_text().splitlines()
    assert rows[0].startswith("epoch,lr") and len(rows) == 2
    save_model(model, tmp_path / "m.ckpt")
    again = load_model(tmp_path / "m.ckpt")
    assert mean_val_loss(again, scans[1:], cfg) == history[0].val_loss


def test_training_reproducible():
    scans = [tiny_scan(0), tiny_scan(1)]
    cfg = TrainConfig(epochs=2, crop_min=4)
    a, ha = train(TINY_NET, cfg, scans[:1], scans[1:])
    b, hb = train(TINY_NET, cfg, scans[:1], scans[1:])
    assert ha == hb
    assert all(np.array_equal(x, y) for x, y in zip(a.state_dict().values(), b.state_dict().values()))


def test_overfit_single_linear_scan():
    scan = tiny_scan(3, tactic="linear", n=8)
    cfg = TrainConfig(epochs=50, lr=1e-3, augment=False)
    fresh = PoseNet(replace_net(use_imu=False), seed=cfg.seed)
    initial = loss_sup(predict(fresh, scan), scan.params).item()
    model, _ = train(replace_net(use_imu=False), cfg, [scan], [scan])
    final = loss_sup(predict(model, scan), scan.params).item()
    assert final < 0.1 * initial


def test_nan_loss_names_scan():
    scan = tiny_scan(0)
    scan.params[0, 0] = np.nan
    with pytest.raises(TrainingError, match="s0"):
        train(TINY_NET, TrainConfig(epochs=1, augment=False), [scan], [])


def test_missing_imu_is_contract_error():
    scan = tiny_scan(0)
    scan.imu = ImuSample(np.zeros((0, 5, 3)), np.zeros((0, 5, 3)))
    with pytest.raises(ContractError):
        predict(PoseNet(TINY_NET), scan)


def test_zero_iterations_equals_inference():
    model, scan = PoseNet(TINY_NET, seed=1), tiny_scan(2)
    assert reconstruct(model, scan, AdaptConfig(iterations=0)).tobytes() == predict(model, scan).tobytes()


def test_adaptation_changes_prediction_but_not_model(tmp_path):
    model = PoseNet(TINY_NET, seed=1)
    a, b = tiny_scan(2), tiny_scan(3)
    save_model(model, tmp_path / "m.ckpt")
    digest = hashlib.sha256((tmp_path / "m.ckpt").read_bytes()).hexdigest()
    before_b = predict(model, b)
    adapted = reconstruct(model, a, AdaptConfig(iterations=3, lr=1e-3))
    assert not np.array_equal(adapted, predict(model, a))
    assert predict(model, b).tobytes() == before_b.tobytes()
    save_model(model, tmp_path / "m2.ckpt")
    assert hashlib.sha256((tmp_path / "m2.ckpt").read_bytes()).hexdigest() == digest


def test_adaptation_descends():
    model = PoseNet(TINY_NET, seed=0)
    ok = 0
    for seed in range(20):
        _, history = adapt(model, tiny_scan(100 + seed, corrupt=bool(seed % 2)), AdaptConfig(iterations=6))
        ok += all(b <= a for a, b in zip(history[:5], history[1:6]))
    assert ok >= 18


def test_adaptation_needs_imu_model():
    with pytest.raises(ContractError):
        adapt(PoseNet(replace_net(use_imu=False)), tiny_scan(0), AdaptConfig())


def test_trajectory_round_trip(tmp_path):
    params = np.random.default_rng(0).normal(size=(7, 6))
    write_trajectory(params, tmp_path / "t.csv")
    assert read_trajectory(tmp_path / "t.csv").tobytes() == params.tobytes()
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 9


def test_evaluate_perfect_and_mismatch():
    rng = np.random.default_rng(0)
    gt = {f"s{i}": np.column_stack([rng.normal(size=(5, 2)), np.full(5, 0.3), rng.normal(size=(5, 3))]) for i in range(3)}
    report = evaluate(dict(gt), gt, FrameGeometry())
    assert report.missing == []
    assert report.summary["FDR"] == (0.0, 0.0)
    assert report.as_text("x").splitlines()[-1] == "table=x | " + " | ".join(["0.00(0.0)"] * 6)
    pred = {"s0": gt["s0"], "s1": gt["s1"][:3], "zz": gt["s2"]}
    report = evaluate(pred, gt, FrameGeometry())
    assert report.missing == ["s1", "s2", "zz"]
    assert list(report.per_scan) == ["s0"]
    assert all(sd == 0.0 for _, sd in report.summary.values())


def write_tiny_config(path, epochs=1):
    cfg = PipelineConfig(
        data=DataConfig(num_scans=3, split=(1 / 3, 1 / 3, 1 / 3), image_size=(16, 16), num_imus=2,
                        n_frames_min=5, n_frames_max=6, phantom_size_mm=12.0),
        net=TINY_NET,
        train=TrainConfig(epochs=epochs, crop_min=4),
        adapt=AdaptConfig(iterations=2),
    )
    path.write_text(format_config(cfg))


def run_cli_pipeline(root):
    cfg = root / "c.ini"
    write_tiny_config(cfg)
    assert main(["gen-data", "--config", str(cfg), "--out", str(root / "data"), "--seed", "4"]) == 0
    assert main(["train", "--config", str(cfg), "--data", str(root / "data"), "--out", str(root / "m.ckpt"), "--seed", "1"]) == 0
    test_dir = root / "data" / "test"
    assert main(["reconstruct", "--ckpt", str(root / "m.ckpt"), "--scan", str(test_dir), "--config", str(cfg),
                 "--adapt", "--out", str(root / "pred")]) == 0
    assert main(["eval", "--pred", str(root / "pred"), "--gt", str(test_dir), "--report", str(root / "r.txt")]) == 0
    return (root / "r.txt").read_bytes()


def test_cli_end_to_end_deterministic(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    ra, rb = run_cli_pipeline(tmp_path / "a"), run_cli_pipeline(tmp_path / "b")
    assert ra == rb
    assert b"mean.FDR=" in ra and b"missing=\n" in ra


def test_cli_errors(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    write_tiny_config(cfg)
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nepoch = 3\n")
    assert main(["gen-data", "--config", str(bad), "--out", str(tmp_path / "e")]) == 2
    assert main(["reconstruct", "--ckpt", str(tmp_path / "none"), "--scan", str(tmp_path / "d"),
                 "--adapt-iters", "3", "--out", str(tmp_path / "p")]) == 2


def test_eval_exits_nonzero_on_missing(tmp_path):
    cfg = tmp_path / "c.ini"
    write_tiny_config(cfg)
    main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")])
    gt_dir = tmp_path / "d" / "test"
    (tmp_path / "pred").mkdir()
    scan = read_scan(list_scans(gt_dir)[0])
    write_trajectory(scan.params, tmp_path / "pred" / "unknown.csv")
    assert main(["eval", "--pred", str(tmp_path / "pred"), "--gt", str(gt_dir), "--report", str(tmp_path / "r")]) == 1
