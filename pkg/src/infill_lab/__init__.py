"""
Masked Diffusion Infilling Laboratory.

A desk-scale masked diffusion language model, the two supervised fine-tuning
objectives whose mismatch explains why prompt infilling fails after
response-only training, and the prompt-infilling pipeline built on top.
"""

__version__ = "0.1.0"

from .core import MaskingPolicy, NoiseSchedule, NoisySequence, TokenSequence, Vocabulary
from .model import Denoiser, DenoiserConfig, load_checkpoint, save_checkpoint
from .prompting import PromptPipeline, PromptTemplate
from .sampling import SamplerConfig, generate, infill

__all__ = [
    "MaskingPolicy",
    "NoiseSchedule",
    "NoisySequence",
    "TokenSequence",
    "Vocabulary",
    "Denoiser",
    "DenoiserConfig",
    "load_checkpoint",
    "save_checkpoint",
    "PromptPipeline",
    "PromptTemplate",
    "SamplerConfig",
    "generate",
    "infill",
]


def main():
    """Main entry point for the CLI application."""
    import sys

    from .cli import main as cli_main
    sys.exit(cli_main())
