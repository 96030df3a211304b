"""
Masked diffusion core.

Vocabulary, sequences, masking policies, the forward masking process and the
noise schedule shared by every other package.
"""

from .models import (
    EOS_SYMBOL,
    MASK_SYMBOL,
    PAD_SYMBOL,
    MaskingPolicy,
    NoisySequence,
    PolicyMode,
    TokenSequence,
    Vocabulary,
)
from .schedule import T_MIN, NoiseSchedule, alpha, clamp_timestep, nelbo_weight
from .masking import (
    MaskSampler,
    apply_mask,
    draw_mask,
    mask_bernoulli,
    mask_fixed_count,
    sample_mask_ratio,
)
from .seeding import derive_seed, make_rng, make_torch_generator
from .dataset import PairDataset, write_pairs

__all__ = [
    "EOS_SYMBOL",
    "MASK_SYMBOL",
    "PAD_SYMBOL",
    "MaskingPolicy",
    "NoisySequence",
    "PolicyMode",
    "TokenSequence",
    "Vocabulary",
    "T_MIN",
    "NoiseSchedule",
    "alpha",
    "clamp_timestep",
    "nelbo_weight",
    "MaskSampler",
    "apply_mask",
    "draw_mask",
    "mask_bernoulli",
    "mask_fixed_count",
    "sample_mask_ratio",
    "derive_seed",
    "make_rng",
    "make_torch_generator",
    "PairDataset",
    "write_pairs",
]
