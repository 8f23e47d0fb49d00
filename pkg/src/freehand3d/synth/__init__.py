from .dataset import (
    ScanSequence,
    augment,
    crop,
    derive_seeds,
    generate_scan,
    list_scans,
    load_split,
    make_dataset,
    read_scan,
    rerender,
    resimulate_imu,
    reverse,
    write_scan,
)
from .imu import ImuNoise, ImuSample, RawImuStream, bin_raw_stream, preprocess_imu, simulate_imus, to_raw_stream
from .phantom import Phantom, make_phantom, render_frames
from .trajectory import TACTICS, gen_trajectory

__all__ = [
    "ImuNoise",
    "ImuSample",
    "Phantom",
    "RawImuStream",
    "ScanSequence",
    "TACTICS",
    "augment",
    "bin_raw_stream",
    "crop",
    "derive_seeds",
    "gen_trajectory",
    "generate_scan",
    "list_scans",
    "load_split",
    "make_dataset",
    "make_phantom",
    "preprocess_imu",
    "read_scan",
    "render_frames",
    "rerender",
    "resimulate_imu",
    "reverse",
    "simulate_imus",
    "to_raw_stream",
    "write_scan",
]
