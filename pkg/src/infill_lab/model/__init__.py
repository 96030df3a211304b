"""
The denoiser: a tiny bidirectional transformer, its masked loss, and the
checkpoint container.
"""

from .denoiser import (
    Denoiser,
    DenoiserConfig,
    LogitsGrid,
    collate,
    forward,
    init_params,
)
from .loss import compute_gradients, masked_cross_entropy, per_example_losses
from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    parameter_hash,
    read_header,
    save_checkpoint,
)

__all__ = [
    "Denoiser",
    "DenoiserConfig",
    "LogitsGrid",
    "collate",
    "forward",
    "init_params",
    "compute_gradients",
    "masked_cross_entropy",
    "per_example_losses",
    "Checkpoint",
    "load_checkpoint",
    "parameter_hash",
    "read_header",
    "save_checkpoint",
]
