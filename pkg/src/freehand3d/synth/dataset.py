"""Scan records, the on-disk scan layout and deterministic dataset generation.

Scan directory::

    frames.f32      raw little-endian float32, N*H*W values
    meta.txt        key=value lines
    gt_params.csv   transition,tx,ty,tz,phix,phiy,phiz
    imu.csv         transition,imu_id,phix,phiy,phiz,ax,ay,az
"""

from __future__ import annotations

import csv
import io
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import DataConfig, format_config, PipelineConfig
from ..geometry import FrameGeometry, compose_trajectory, euler_to_matrix, matrix_to_euler, params_to_transform
from .imu import ImuNoise, ImuSample, preprocess_imu, simulate_imus
from .phantom import make_phantom, render_frames
from .trajectory import gen_trajectory

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step -> (next state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seeds(master: int, count: int) -> list[int]:
    state = master & _MASK64
    out = []
    for _ in range(count):
        state, z = splitmix64(state)
        out.append(z >> 33)  # 31-bit seeds keep numpy/csv round trips simple
    return out


@dataclass
class ScanSequence:
    frames: np.ndarray  # [N, 1, H, W] in [0, 1]
    params: np.ndarray  # [N-1, 6]
    imu: ImuSample
    geometry: FrameGeometry
    tactic: str
    seed: int
    scan_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def network_inputs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(frames, standardised accelerations, unwrapped angles)."""
        pre = preprocess_imu(self.imu)
        return self.frames, pre.accels, pre.angles


# -- generation ------------------------------------------------------------


def _scan_noise(cfg: DataConfig, rng: np.random.Generator, corrupt: bool) -> ImuNoise:
    M = cfg.num_imus
    spread = cfg.noise_spread ** rng.uniform(-1.0, 1.0, size=M) if cfg.noise_spread > 1 else np.ones(M)
    sigma = cfg.angle_sigma * spread
    if corrupt:
        sigma[rng.integers(M)] *= cfg.corrupt_factor
    return ImuNoise(angle_sigma=sigma, angle_bias=cfg.angle_bias, accel_sigma=cfg.accel_sigma * spread)


def place_scan(params: np.ndarray, geometry: FrameGeometry, rng: np.random.Generator, slack_mm: float = 1.0) -> np.ndarray:
    """Start pose: random yaw, translated so the frame-centre centroid sits near the origin."""
    yaw = rng.uniform(-180.0, 180.0)
    start = params_to_transform(np.array([0.0, 0.0, 0.0, 0.0, yaw, 0.0]))
    T = start @ compose_trajectory(params)
    corners = np.einsum("nij,pj->npi", T[:, :3, :3], geometry.corners()) + T[:, None, :3, 3]
    mid = (corners.reshape(-1, 3).max(axis=0) + corners.reshape(-1, 3).min(axis=0)) / 2.0
    start[:3, 3] = -mid + rng.uniform(-slack_mm, slack_mm, size=3)
    return start


def generate_scan(cfg: DataConfig, seed: int, tactic: str, n_frames: int, corrupt: bool = False, scan_id: str = "") -> ScanSequence:
    rng = np.random.default_rng(seed)
    traj_seed, phantom_seed, imu_seed = (int(s) for s in rng.integers(0, 2**31 - 1, size=3))
    geometry = FrameGeometry(cfg.image_size[0], cfg.image_size[1], cfg.spacing[0], cfg.spacing[1])
    step = cfg.step_mm * rng.uniform(0.7, 1.3)
    params = gen_trajectory(tactic, n_frames, step, traj_seed)
    start = place_scan(params, geometry, rng)
    noise = _scan_noise(cfg, rng, corrupt)
    phantom = make_phantom(phantom_seed, cfg.phantom_size_mm, cfg.voxel_mm)
    world = start @ compose_trajectory(params)
    frames, outside = render_frames(phantom, world, geometry)
    imu = simulate_imus(params, world, geometry, cfg.num_imus, noise, imu_seed)
    meta = {
        "N": n_frames,
        "H": geometry.height,
        "W": geometry.width,
        "sx": geometry.sx,
        "sy": geometry.sy,
        "tactic": tactic,
        "seed": seed,
        "M": cfg.num_imus,
        "phantom_seed": phantom_seed,
        "phantom_size_mm": cfg.phantom_size_mm,
        "voxel_mm": cfg.voxel_mm,
        "imu_seed": imu_seed,
        "start_pose": start,
        "angle_sigma": noise.per_imu(cfg.num_imus)[0],
        "angle_bias": noise.per_imu(cfg.num_imus)[1],
        "accel_sigma": noise.per_imu(cfg.num_imus)[2],
        "outside_samples": outside,
    }
    return ScanSequence(frames, params, imu, geometry, tactic, seed, scan_id, meta)


def rerender(scan: ScanSequence) -> np.ndarray:
    """Frames re-rendered from the stored pose parameters and phantom seed."""
    m = scan.meta
    phantom = make_phantom(int(m["phantom_seed"]), float(m["phantom_size_mm"]), float(m["voxel_mm"]))
    start = np.asarray(m["start_pose"], dtype=np.float64).reshape(4, 4)
    frames, _ = render_frames(phantom, start @ compose_trajectory(scan.params), scan.geometry)
    return frames


def resimulate_imu(scan: ScanSequence, angle_sigma=None, angle_bias=None, accel_sigma=None) -> ImuSample:
    """Regenerate IMU readings with the scan's noise draws, optionally rescaled per IMU."""
    m = scan.meta
    noise = ImuNoise(
        angle_sigma=m["angle_sigma"] if angle_sigma is None else angle_sigma,
        angle_bias=m["angle_bias"] if angle_bias is None else angle_bias,
        accel_sigma=m["accel_sigma"] if accel_sigma is None else accel_sigma,
    )
    start = np.asarray(m["start_pose"], dtype=np.float64).reshape(4, 4)
    world = start @ compose_trajectory(scan.params)
    return simulate_imus(scan.params, world, scan.geometry, int(m["M"]), noise, int(m["imu_seed"]))


def split_counts(n: int, split) -> tuple[int, int, int]:
    n_val = int(round(split[1] * n))
    n_test = int(round(split[2] * n))
    return n - n_val - n_test, n_val, n_test


def plan_dataset(cfg: DataConfig, seed: int) -> list[dict]:
    """Deterministic list of (split, id, tactic, seed, N, corrupt) scan specs."""
    seeds = derive_seeds(seed, 2 * cfg.num_scans)
    counts = split_counts(cfg.num_scans, cfg.split)
    plan = []
    k = 0
    for split, count in zip(SPLITS, counts):
        for i in range(count):
            s = seeds[k]
            rng = np.random.default_rng(seeds[cfg.num_scans + k])
            n = int(rng.integers(cfg.n_frames_min, cfg.n_frames_max + 1))
            corrupt = split == "train" and rng.uniform() < cfg.train_corrupt_prob
            plan.append({
                "split": split,
                "id": f"{split}_{i:04d}",
                "tactic": cfg.tactics[k % len(cfg.tactics)],
                "seed": s,
                "N": n,
                "corrupt": corrupt,
            })
            k += 1
    return plan


def make_dataset(cfg: DataConfig, out_dir, seed: int, force: bool = False) -> list[dict]:
    cfg.validate()
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise FileExistsError(f"{out} exists and is not empty; pass force to overwrite")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    plan = plan_dataset(cfg, seed)
    for spec in plan:
        scan = generate_scan(cfg, spec["seed"], spec["tactic"], spec["N"], spec["corrupt"], spec["id"])
        write_scan(scan, out / spec["split"] / spec["id"])
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["split", "scan_id", "tactic", "seed", "N", "corrupt"])
        for spec in plan:
            w.writerow([spec["split"], spec["id"], spec["tactic"], spec["seed"], spec["N"], int(spec["corrupt"])])
    (out / "data_config.txt").write_text(format_config(PipelineConfig(data=cfg), sections=("data",)) + f"seed = {seed}\n")
    return plan


# -- on-disk format ------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def _meta_value(v) -> str:
    if isinstance(v, np.ndarray):
        return ",".join(_fmt(x) for x in v.reshape(-1))
    if isinstance(v, float):
        return _fmt(v)
    return str(v)


def write_scan(scan: ScanSequence, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    scan.frames.astype("<f4").tofile(path / "frames.f32")
    (path / "meta.txt").write_text("".join(f"{k}={_meta_value(v)}\n" for k, v in scan.meta.items()))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["transition", "tx", "ty", "tz", "phix", "phiy", "phiz"])
    for i, row in enumerate(scan.params):
        w.writerow([i] + [_fmt(x) for x in row])
    (path / "gt_params.csv").write_text(buf.getvalue())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["transition", "imu_id", "phix", "phiy", "phiz", "ax", "ay", "az"])
    for i in range(scan.imu.num_transitions):
        for j in range(scan.imu.num_imus):
            w.writerow([i, j] + [_fmt(x) for x in scan.imu.angles[j, i]] + [_fmt(x) for x in scan.imu.accels[j, i]])
    (path / "imu.csv").write_text(buf.getvalue())


_ARRAY_KEYS = {"start_pose", "angle_sigma", "angle_bias", "accel_sigma"}
_INT_KEYS = {"N", "H", "W", "seed", "M", "phantom_seed", "imu_seed", "outside_samples"}


def read_meta(path) -> dict:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, val = line.partition("=")
        if key in _ARRAY_KEYS:
            meta[key] = np.array([float(x) for x in val.split(",")])
        elif key in _INT_KEYS:
            meta[key] = int(val)
        elif key == "tactic":
            meta[key] = val
        else:
            try:
                meta[key] = float(val)
            except ValueError:
                meta[key] = val
    return meta


class ScanFormatError(ValueError):
    pass


def read_imu_csv(path, n_transitions: int) -> ImuSample:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"transition", "imu_id", "phix", "phiy", "phiz", "ax", "ay", "az"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ScanFormatError(f"{path}: IMU columns missing, need {sorted(need)}")
        rows = list(reader)
    M = max(int(r["imu_id"]) for r in rows) + 1 if rows else 0
    angles = np.zeros((M, n_transitions, 3))
    accels = np.zeros((M, n_transitions, 3))
    for r in rows:
        i, j = int(r["transition"]), int(r["imu_id"])
        angles[j, i] = [float(r["phix"]), float(r["phiy"]), float(r["phiz"])]
        accels[j, i] = [float(r["ax"]), float(r["ay"]), float(r["az"])]
    return ImuSample(angles, accels)


def read_params_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r[k]) for k in ("tx", "ty", "tz", "phix", "phiy", "phiz")] for r in rows]).reshape(-1, 6)


def read_scan(path) -> ScanSequence:
    path = Path(path)
    meta = read_meta(path / "meta.txt")
    N, H, W = meta["N"], meta["H"], meta["W"]
    frames = np.fromfile(path / "frames.f32", dtype="<f4")
    if frames.size != N * H * W:
        raise ScanFormatError(f"{path}: frames.f32 has {frames.size} values, expected {N * H * W}")
    frames = frames.astype(np.float64).reshape(N, 1, H, W)
    params = read_params_csv(path / "gt_params.csv") if (path / "gt_params.csv").exists() else None
    imu_path = path / "imu.csv"
    if not imu_path.exists():
        raise ScanFormatError(f"{path}: imu.csv missing")
    imu = read_imu_csv(imu_path, N - 1)
    geometry = FrameGeometry(H, W, float(meta["sx"]), float(meta["sy"]))
    return ScanSequence(frames, params, imu, geometry, meta.get("tactic", ""), int(meta.get("seed", 0)), path.name, meta)


def list_scans(root) -> list[Path]:
    """Scan directories (those holding meta.txt) under ``root``, sorted."""
    root = Path(root)
    if (root / "meta.txt").exists():
        return [root]
    return sorted(p.parent for p in root.rglob("meta.txt"))


def load_split(root, split: str) -> list[ScanSequence]:
    return [read_scan(p) for p in list_scans(Path(root) / split)]


# -- augmentation ----------------------------------------------------------------


def crop(scan: ScanSequence, start: int, length: int) -> ScanSequence:
    """Frames [start, start+length) with their transitions and IMU rows."""
    sl = slice(start, start + length - 1)
    imu = ImuSample(scan.imu.angles[:, sl], scan.imu.accels[:, sl])
    params = None if scan.params is None else scan.params[sl]
    return ScanSequence(scan.frames[start : start + length], params, imu, scan.geometry, scan.tactic, scan.seed, scan.scan_id, scan.meta)


def reverse(scan: ScanSequence) -> ScanSequence:
    """Play the scan backwards: frames reversed, each transition replaced by its inverse.

    IMU angles map exactly (inverse rotation of each reading); accelerations are
    rotated into the new start frame of each transition.
    """
    from ..geometry import invert_transform, transform_to_params

    params = None
    if scan.params is not None:
        params = transform_to_params(invert_transform(params_to_transform(scan.params)))[::-1].copy()
    R = euler_to_matrix(scan.imu.angles)  # [M, K, 3, 3]
    angles = matrix_to_euler(np.swapaxes(R, -1, -2))[:, ::-1].copy()
    accels = np.einsum("mkji,mkj->mki", R, scan.imu.accels)[:, ::-1].copy()
    return ScanSequence(scan.frames[::-1].copy(), params, ImuSample(angles, accels), scan.geometry, scan.tactic, scan.seed, scan.scan_id, scan.meta)


def augment(scan: ScanSequence, rng: np.random.Generator, crop_min: int, reverse_prob: float = 0.0) -> ScanSequence:
    n = scan.n_frames
    if crop_min < n:
        length = int(rng.integers(crop_min, n + 1))
        scan = crop(scan, int(rng.integers(0, n - length + 1)), length)
    if reverse_prob > 0 and rng.uniform() < reverse_prob:
        scan = reverse(scan)
    return scan
