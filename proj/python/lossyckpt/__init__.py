"""Lossy checkpoint/restart for iterative solvers."""

from ._core import (
    ConfigError,
    CorruptFrameError,
    CsrMatrix,
    DimensionError,
    Error,
    ModelInvalidError,
    NonFiniteError,
    UnknownCodecError,
    compress,
    compression_ratio,
    decompress,
    max_pointwise_relative_error,
    model,
    poisson3d,
    probe,
    read_matrix_market,
    run_cli,
    sample_failures,
    simulate,
    solve,
)

__all__ = [name for name in dir() if not name.startswith("_")]
