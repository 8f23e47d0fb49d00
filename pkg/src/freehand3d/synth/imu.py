"""Multi-IMU reading simulation and per-transition preprocessing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import FrameGeometry, frame_centers

GRAVITY = 9.81


@dataclass
class ImuSample:
    """Per-transition readings: angles [M, K, 3] degrees, accels [M, K, 3]."""

    angles: np.ndarray
    accels: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def num_imus(self) -> int:
        return self.angles.shape[0]

    @property
    def num_transitions(self) -> int:
        return self.angles.shape[1]


@dataclass
class ImuNoise:
    """Angle noise/bias in degrees and acceleration noise; scalars or one value per IMU."""

    angle_sigma: float | np.ndarray = 0.0
    angle_bias: float | np.ndarray = 0.0
    accel_sigma: float | np.ndarray = 0.0

    def per_imu(self, M: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.broadcast_to(np.asarray(v, dtype=np.float64), (M,)).copy() for v in
                     (self.angle_sigma, self.angle_bias, self.accel_sigma))


def true_accelerations(world_transforms, geometry: FrameGeometry) -> np.ndarray:
    """Per-transition specific force in the start frame's probe axes, [K, 3].

    Second difference of frame-centre positions at the transition's first frame
    (constant-velocity extrapolation before frame 1) plus gravity.
    """
    T = np.asarray(world_transforms)
    p = frame_centers(T, geometry)
    prev = np.concatenate([[2 * p[0] - p[1]], p[:-2]], axis=0)
    acc_world = p[1:] - 2 * p[:-1] + prev
    g_world = np.array([0.0, GRAVITY, 0.0])
    R = T[:-1, :3, :3]
    return np.einsum("kji,kj->ki", R, acc_world + g_world)


def simulate_imus(
    relative_params,
    world_transforms,
    geometry: FrameGeometry,
    num_imus: int,
    noise: ImuNoise,
    seed: int,
) -> ImuSample:
    """Angles: true relative Euler angles + per-IMU constant bias + white noise.
    Accelerations: true specific force + white noise."""
    rng = np.random.default_rng(seed)
    theta = np.asarray(relative_params, dtype=np.float64)
    K = theta.shape[0]
    sig_a, bias_a, sig_acc = noise.per_imu(num_imus)
    unit_bias = rng.normal(size=(num_imus, 1, 3))
    unit_ang = rng.normal(size=(num_imus, K, 3))
    unit_acc = rng.normal(size=(num_imus, K, 3))
    angles = theta[None, :, 3:] + bias_a[:, None, None] * unit_bias + sig_a[:, None, None] * unit_ang
    accels = true_accelerations(world_transforms, geometry)[None] + sig_acc[:, None, None] * unit_acc
    return ImuSample(angles, accels)


@dataclass
class RawImuStream:
    """Raw samples: times [S], angles/accels [M, S, 3]."""

    times: np.ndarray
    angles: np.ndarray
    accels: np.ndarray


def to_raw_stream(sample: ImuSample, frame_times, rate: int) -> RawImuStream:
    """Expand per-transition readings into ``rate`` evenly spaced raw samples per interval."""
    frame_times = np.asarray(frame_times, dtype=np.float64)
    times = []
    for i in range(sample.num_transitions):
        t0, t1 = frame_times[i], frame_times[i + 1]
        times.append(t0 + (t1 - t0) * np.arange(rate) / rate)
    return RawImuStream(
        np.concatenate(times),
        np.repeat(sample.angles, rate, axis=1),
        np.repeat(sample.accels, rate, axis=1),
    )


def bin_raw_stream(raw: RawImuStream, frame_times) -> ImuSample:
    """Average raw samples inside each inter-frame interval [t_i, t_{i+1}).

    An empty interval repeats the previous transition's value and is listed in
    ``flags["empty_intervals"]``.
    """
    frame_times = np.asarray(frame_times, dtype=np.float64)
    K = len(frame_times) - 1
    M = raw.angles.shape[0]
    angles = np.zeros((M, K, 3))
    accels = np.zeros((M, K, 3))
    empty = []
    for i in range(K):
        sel = (raw.times >= frame_times[i]) & (raw.times < frame_times[i + 1])
        if not sel.any():
            empty.append(i)
            if i > 0:
                angles[:, i], accels[:, i] = angles[:, i - 1], accels[:, i - 1]
            continue
        angles[:, i] = raw.angles[:, sel].mean(axis=1)
        accels[:, i] = raw.accels[:, sel].mean(axis=1)
    return ImuSample(angles, accels, {"empty_intervals": empty})


def preprocess_imu(sample: ImuSample | RawImuStream, frame_times=None) -> ImuSample:
    """Network-ready IMU readings.

    Raw streams are first averaged per inter-frame interval. Angles are then
    unwrapped along the transition axis (no +-180 degree jumps) and each IMU's
    acceleration axes are standardised over the sequence.
    """
    if isinstance(sample, RawImuStream):
        if frame_times is None:
            raise ValueError("frame_times are required to bin a raw stream")
        sample = bin_raw_stream(sample, frame_times)
    angles = np.unwrap(sample.angles, axis=1, period=360.0)
    mu = sample.accels.mean(axis=1, keepdims=True)
    sd = sample.accels.std(axis=1, keepdims=True)
    accels = (sample.accels - mu) / np.where(sd > 1e-8, sd, 1.0)
    return ImuSample(angles, accels, dict(sample.flags))
