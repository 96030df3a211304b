"""Iterative denoising: generation, fixed-length infilling and unmask strategies."""

from .strategy import ConfidenceStrategy, RandomStrategy, UnmaskStrategy, create_strategy
from .sampler import (
    GenerationResult,
    SamplerConfig,
    StepTrace,
    denoise_step,
    generate,
    infill,
    infill_with_trace,
    unmask_count_schedule,
)

__all__ = [
    "ConfidenceStrategy",
    "RandomStrategy",
    "UnmaskStrategy",
    "create_strategy",
    "GenerationResult",
    "SamplerConfig",
    "StepTrace",
    "denoise_step",
    "generate",
    "infill",
    "infill_with_trace",
    "unmask_count_schedule",
]
