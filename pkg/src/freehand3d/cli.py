"""Command-line entry point: gen-data, train, reconstruct, eval."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .autodiff import CheckpointError, ContractError
from .config import AdaptConfig, ConfigError, PipelineConfig, load_config, replace
from .pipeline import (
    TrainingError,
    evaluate,
    load_model,
    read_trajectory,
    reconstruct,
    save_model,
    train,
    write_report,
    write_trajectory,
)
from .synth.dataset import ScanFormatError, list_scans, load_split, make_dataset, read_scan

log = logging.getLogger("freehand3d")


def _config(path) -> PipelineConfig:
    return load_config(path) if path else PipelineConfig()


def cmd_gen_data(args) -> int:
    cfg = _config(args.config)
    plan = make_dataset(cfg.data, args.out, args.seed, force=args.force)
    log.info("wrote %d scans to %s", len(plan), args.out)
    return 0


def cmd_train(args) -> int:
    cfg = _config(args.config)
    tcfg = cfg.train if args.seed is None else replace(cfg.train, seed=args.seed)
    train_scans = load_split(args.data, "train")
    val_scans = load_split(args.data, "val")
    log.info("training on %d scans, validating on %d", len(train_scans), len(val_scans))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model, history = train(cfg.net, tcfg, train_scans, val_scans, log_path=str(out) + ".log.csv", progress=True)
    save_model(model, out)
    best = min(history, key=lambda h: h.val_loss)
    log.info("best val loss %.6f at epoch %d; checkpoint %s", best.val_loss, best.epoch, out)
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _config(args.config)
    model = load_model(args.ckpt)
    adapt_cfg = None
    if args.adapt:
        adapt_cfg = cfg.adapt if args.adapt_iters is None else replace(cfg.adapt, iterations=args.adapt_iters)
    elif args.adapt_iters is not None:
        raise ConfigError("--adapt-iters needs --adapt")
    scan_dirs = list_scans(args.scan)
    if not scan_dirs:
        raise ScanFormatError(f"no scans found under {args.scan}")
    single = (Path(args.scan) / "meta.txt").exists()
    out = Path(args.out)
    if not single:
        out.mkdir(parents=True, exist_ok=True)
    for path in scan_dirs:
        scan = read_scan(path)
        theta = reconstruct(model, scan, adapt_cfg)
        target = out if single else out / f"{scan.scan_id}.csv"
        write_trajectory(theta, target)
        log.info("%s -> %s", scan.scan_id, target)
    return 0


def cmd_eval(args) -> int:
    pred_root = Path(args.pred)
    files = [pred_root] if pred_root.is_file() else sorted(pred_root.rglob("*.csv"))
    pred = {f.stem: read_trajectory(f) for f in files}
    gt, geometry = {}, {}
    for path in list_scans(args.gt):
        scan = read_scan(path)
        gt[scan.scan_id] = scan.params
        geometry[scan.scan_id] = scan.geometry
    report = evaluate(pred, gt, geometry)
    write_report(report, args.report, label=args.label)
    sys.stdout.write(report.as_text(args.label))
    if report.missing:
        log.error("skipped scan ids without a match: %s", ", ".join(report.missing))
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freehand3d", description="Sensorless and IMU-fused freehand 3D ultrasound reconstruction.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic scan dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a pose network")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--seed", type=int, help="overrides [train] seed")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("reconstruct", help="predict trajectories for one scan or a directory of scans")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--scan", required=True)
    r.add_argument("--out", required=True, help="trajectory CSV, or a directory when --scan holds several scans")
    r.add_argument("--config", help="supplies the [adapt] section")
    r.add_argument("--adapt", action="store_true", help="run per-scan online adaptation first")
    r.add_argument("--adapt-iters", type=int)
    r.add_argument("--seed", type=int, default=0, help="accepted for symmetry; reconstruction is deterministic")
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("eval", help="score predicted trajectories against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--label", default="model")
    e.add_argument("--seed", type=int, default=0, help="accepted for symmetry; evaluation is deterministic")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ContractError, CheckpointError, ScanFormatError, TrainingError, FileExistsError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
