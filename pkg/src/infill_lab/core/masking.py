"""
Forward (masking) process.

Two samplers share one masking region abstraction: fixed-count masking picks
exactly floor(t * |region|) positions, Bernoulli masking masks every region
position independently.
"""

import math
from enum import Enum
from typing import Iterable

import numpy as np

from ..errors import DomainError
from .models import MaskingPolicy, NoisySequence, TokenSequence


class MaskSampler(Enum):
    """How a masking ratio is turned into a mask set."""
    FIXED_COUNT = "fixed_count"
    BERNOULLI = "bernoulli"


def sample_mask_ratio(rng: np.random.Generator) -> float:
    """Draw t uniformly from (0, 1]."""
    return 1.0 - float(rng.random())


def apply_mask(seq: TokenSequence, positions: Iterable[int], t: float, mask_id: int) -> NoisySequence:
    """Replace `positions` of a clean sequence by the mask token."""
    masked = frozenset(int(p) for p in positions)
    tokens = tuple(mask_id if i in masked else tok for i, tok in enumerate(seq.tokens))
    return NoisySequence(tokens, masked, t, mask_id, seq.prompt_len, origin=seq)


def mask_fixed_count(
    seq: TokenSequence,
    t: float,
    policy: MaskingPolicy,
    rng: np.random.Generator,
    mask_id: int,
) -> NoisySequence:
    """
    Mask exactly floor(t * |region|) positions of the policy region.

    Args:
        seq: Clean sequence
        t: Masking ratio in [0, 1]
        policy: Region that may be masked
        rng: Random source; positions are drawn without replacement
        mask_id: Id of the mask token

    Returns:
        NoisySequence whose unmasked positions equal `seq`
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"masking ratio {t} outside [0, 1]")
    region = policy.region(len(seq), seq.prompt_len)
    count = math.floor(t * len(region))
    chosen = rng.choice(np.asarray(region, dtype=np.int64), size=count, replace=False) if count else []
    return apply_mask(seq, chosen, t, mask_id)


def mask_bernoulli(
    seq: TokenSequence,
    p: float,
    policy: MaskingPolicy,
    rng: np.random.Generator,
    mask_id: int,
) -> NoisySequence:
    """Mask each position of the policy region independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"masking probability {p} outside [0, 1]")
    region = np.asarray(policy.region(len(seq), seq.prompt_len), dtype=np.int64)
    draws = rng.random(len(region))
    return apply_mask(seq, region[draws < p], p, mask_id)


def draw_mask(
    seq: TokenSequence,
    policy: MaskingPolicy,
    sampler: MaskSampler,
    rng: np.random.Generator,
    mask_id: int,
    max_redraws: int = 8,
) -> NoisySequence:
    """
    Draw t and a non-empty mask set for one training example.

    Redraws t up to `max_redraws` times when the mask set comes out empty,
    then forces a single uniformly chosen region position.
    """
    region = policy.region(len(seq), seq.prompt_len)
    if not region:
        raise DomainError("masking region is empty")
    noisy = None
    for _ in range(max_redraws + 1):
        t = sample_mask_ratio(rng)
        if sampler is MaskSampler.FIXED_COUNT:
            noisy = mask_fixed_count(seq, t, policy, rng, mask_id)
        else:
            noisy = mask_bernoulli(seq, t, policy, rng, mask_id)
        if not noisy.is_clean:
            return noisy
    forced = region[int(rng.integers(len(region)))]
    return apply_mask(seq, [forced], noisy.t, mask_id)
