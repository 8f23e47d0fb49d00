"""Training, per-scan online adaptation, reconstruction and evaluation."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import ContractError, Tensor, backward, no_grad
from .config import AdaptConfig, NetConfig, TrainConfig, net_config_text, parse_config
from .fusion import PoseNet, Prediction
from .geometry import FrameGeometry, compose_trajectory
from .losses import loss_align, loss_prior, loss_sup, weighted_mean_angle
from .metrics import METRIC_NAMES, ScanMetrics, aggregate, format_row, scan_metrics
from .nn import Adam, clip_grad_norm, halving_lr
from .synth.dataset import ScanSequence, augment

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


# -- model I/O -------------------------------------------------------------


def config_path(ckpt) -> Path:
    return Path(str(ckpt) + ".cfg")


def save_model(model: PoseNet, path) -> None:
    model.save(path)
    config_path(path).write_text(net_config_text(model.cfg))


def load_model(path) -> PoseNet:
    cfg = parse_config(config_path(path).read_text()).net
    model = PoseNet(cfg)
    model.load(path)
    return model


# -- forward helpers ---------------------------------------------------------


def run_model(model: PoseNet, scan: ScanSequence) -> Prediction:
    frames, acc, ang = scan.network_inputs()
    if model.cfg.use_imu:
        if acc.shape[0] == 0:
            raise ContractError(f"scan {scan.scan_id}: no IMU readings")
        return model(Tensor(frames), acc, ang)
    return model(Tensor(frames))


def predict(model: PoseNet, scan: ScanSequence) -> np.ndarray:
    with no_grad():
        return run_model(model, scan).theta.data.copy()


def supervised_loss(model: PoseNet, scan: ScanSequence, cfg: TrainConfig) -> Tensor:
    pred = run_model(model, scan)
    loss = loss_sup(pred.theta, scan.params, cfg.per_axis_pearson)
    if cfg.all_losses and model.cfg.use_imu:
        loss = loss + alignment_objective(pred, scan, cfg.tau, cfg.normalize_align)
    return loss


def alignment_objective(pred: Prediction, scan: ScanSequence, tau: float, normalize: bool = False) -> Tensor:
    """Label-free test-time loss: InfoNCE(F_I, F_A) + angle-prior Pearson loss.

    The angle-fusion weights act as a fixed prior, so they are detached.
    """
    _, _, ang = scan.network_inputs()
    mean_ang = weighted_mean_angle(pred.ang_weights.detach(), ang)
    return loss_align(pred.image_feat, pred.acc_feat, tau, normalize) + loss_prior(pred.theta[:, 3:], mean_ang)


# -- training ----------------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_fdr: float
    val_mea: float


def mean_val_loss(model: PoseNet, scans: list[ScanSequence], cfg: TrainConfig) -> float:
    with no_grad():
        return float(np.mean([supervised_loss(model, s, cfg).item() for s in scans]))


def train(
    net_cfg: NetConfig,
    cfg: TrainConfig,
    train_scans: list[ScanSequence],
    val_scans: list[ScanSequence],
    log_path=None,
    progress: bool = False,
) -> tuple[PoseNet, list[EpochLog]]:
    """Adam on the supervised loss, one scan per step; returns the best-validation model."""
    cfg.validate()
    if not train_scans:
        raise TrainingError("no training scans")
    model = PoseNet(net_cfg, seed=cfg.seed)
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    history: list[EpochLog] = []
    best_state, best_val = model.state_dict(), math.inf
    for epoch in range(1, cfg.epochs + 1):
        opt.lr = halving_lr(cfg.lr, epoch, cfg.lr_halving_interval)
        losses = []
        for idx in rng.permutation(len(train_scans)):
            scan = train_scans[idx]
            if cfg.augment:
                scan = augment(scan, rng, min(cfg.crop_min, scan.n_frames), cfg.reverse_prob)
            opt.zero_grad()
            loss = supervised_loss(model, scan, cfg)
            if not np.isfinite(loss.item()):
                raise TrainingError(f"non-finite loss on scan {scan.scan_id} (epoch {epoch})")
            backward(loss)
            if cfg.grad_clip > 0:
                clip_grad_norm(params, cfg.grad_clip)
            opt.step()
            losses.append(loss.item())
        val_scans_eval = val_scans or train_scans
        val_loss = mean_val_loss(model, val_scans_eval, cfg)
        rows = [scan_metrics(predict(model, s), s.params, s.geometry) for s in val_scans_eval]
        agg = aggregate(rows)
        history.append(EpochLog(epoch, opt.lr, float(np.mean(losses)), val_loss, agg["FDR"][0], agg["MEA"][0]))
        if progress:
            log.info("epoch %d lr %.2e train %.4f val %.4f FDR %.2f MEA %.3f", *vars(history[-1]).values())
        if val_loss < best_val:
            best_val, best_state = val_loss, model.state_dict()
    model.load_state_dict(best_state)
    if log_path is not None:
        write_train_log(history, log_path)
    return model, history


def write_train_log(history: list[EpochLog], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "lr", "train_loss", "val_loss", "val_fdr", "val_mea"])
        for h in history:
            w.writerow([h.epoch, repr(h.lr), repr(h.train_loss), repr(h.val_loss), repr(h.val_fdr), repr(h.val_mea)])


# -- online adaptation ---------------------------------------------------------


def adapt(model: PoseNet, scan: ScanSequence, cfg: AdaptConfig) -> tuple[PoseNet, list[float]]:
    """Fine-tune a private copy of ``model`` on one scan with the label-free objective.

    Returns the adapted copy and the objective value before each step. The
    input model is never modified.
    """
    cfg.validate()
    if not model.cfg.use_imu:
        raise ContractError("online adaptation needs the IMU-fused network")
    local = model.clone()
    params = local.parameters()
    opt = Adam(params, lr=cfg.lr)
    history = []
    for _ in range(cfg.iterations):
        opt.zero_grad()
        loss = alignment_objective(run_model(local, scan), scan, cfg.tau, cfg.normalize_align)
        history.append(loss.item())
        backward(loss)
        opt.step()
    return local, history


def reconstruct(model: PoseNet, scan: ScanSequence, adapt_cfg: AdaptConfig | None = None) -> np.ndarray:
    """Relative pose parameters for ``scan``, optionally after online adaptation."""
    if adapt_cfg is not None and adapt_cfg.iterations > 0:
        model, _ = adapt(model, scan, adapt_cfg)
    return predict(model, scan)


# -- trajectory files ------------------------------------------------------------

TRAJ_HEADER = (
    ["frame", "tx", "ty", "tz", "phix", "phiy", "phiz"]
    + [f"abs_r{i}{j}" for i in range(3) for j in range(3)]
    + ["abs_tx", "abs_ty", "abs_tz"]
)


def write_trajectory(params, path) -> None:
    """One row per frame: the transition into that frame (zeros for frame 0) and its absolute pose."""
    params = np.asarray(params, dtype=np.float64)
    T = compose_trajectory(params)
    rel = np.vstack([np.zeros((1, 6)), params])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_HEADER)
        for i in range(T.shape[0]):
            vals = list(rel[i]) + list(T[i, :3, :3].reshape(-1)) + list(T[i, :3, 3])
            w.writerow([i] + [repr(float(v)) for v in vals])


def read_trajectory(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRAJ_HEADER:
            raise ValueError(f"{path}: unexpected trajectory header")
        rows = list(reader)
    return np.array([[float(r[k]) for k in TRAJ_HEADER[1:7]] for r in rows[1:]]).reshape(-1, 6)


# -- evaluation ------------------------------------------------------------------


@dataclass
class EvalReport:
    per_scan: dict[str, ScanMetrics]
    missing: list[str]

    @property
    def summary(self) -> dict[str, tuple[float, float]]:
        return aggregate(list(self.per_scan.values())) if self.per_scan else {}

    def as_text(self, label: str = "model") -> str:
        lines = [f"scans={len(self.per_scan)}", f"missing={','.join(self.missing)}"]
        for sid in sorted(self.per_scan):
            m = self.per_scan[sid].as_dict()
            lines.extend(f"{sid}.{k}={m[k]:.6f}" for k in METRIC_NAMES)
        for k, (mu, sd) in self.summary.items():
            lines.append(f"mean.{k}={mu:.6f}")
            lines.append(f"std.{k}={sd:.6f}")
        if self.per_scan:
            lines.append("table=" + format_row(label, self.summary))
        return "\n".join(lines) + "\n"

    def as_json(self) -> str:
        return json.dumps(
            {
                "per_scan": {sid: self.per_scan[sid].as_dict() for sid in sorted(self.per_scan)},
                "mean": {k: v[0] for k, v in self.summary.items()},
                "std": {k: v[1] for k, v in self.summary.items()},
                "missing": self.missing,
            },
            indent=2,
            sort_keys=True,
        )


def evaluate(pred: dict[str, np.ndarray], gt: dict[str, np.ndarray], geometry: dict[str, FrameGeometry] | FrameGeometry) -> EvalReport:
    """Per-scan metrics for ids present in both ``pred`` and ``gt``; others are reported as missing."""
    missing = sorted(set(pred) ^ set(gt))
    per_scan = {}
    for sid in sorted(set(pred) & set(gt)):
        geom = geometry[sid] if isinstance(geometry, dict) else geometry
        if pred[sid].shape != gt[sid].shape:
            missing.append(sid)
            continue
        per_scan[sid] = scan_metrics(pred[sid], gt[sid], geom)
    return EvalReport(per_scan, sorted(missing))


def write_report(report: EvalReport, path, label: str = "model") -> None:
    Path(path).write_text(report.as_text(label))
    Path(str(path) + ".json").write_text(report.as_json() + "\n")
