"""Direct multi-frame interpolation for DSA-like image sequences."""

from ._core import (
    ConfigError,
    Model,
    NumericError,
    ParseError,
    ShapeError,
    bench,
    lr_schedule,
    psnr,
    read_pgm,
    set_thread_count,
    ssim,
    synth_sequence,
    train,
    write_pgm,
)

__all__ = [
    "ConfigError",
    "Model",
    "NumericError",
    "ParseError",
    "ShapeError",
    "bench",
    "lr_schedule",
    "psnr",
    "read_pgm",
    "set_thread_count",
    "ssim",
    "synth_sequence",
    "train",
    "write_pgm",
]
