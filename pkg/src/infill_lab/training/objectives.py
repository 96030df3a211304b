"""
The two SFT objectives.

Full-sequence masking may corrupt any position of X = (P, R); response-only
masking never touches the prompt. Both normalize each example's summed
negative log-likelihood by the size of its own mask set and share one
reduction path, so for a mask pattern confined to the response they agree
exactly.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch

from ..core import (
    MaskingPolicy,
    MaskSampler,
    PolicyMode,
    NoisySequence,
    TokenSequence,
    apply_mask,
    draw_mask,
)
from ..errors import ContractError
from ..model import Denoiser, forward, masked_cross_entropy


@dataclass
class ObjectiveOutput:
    """Differentiable loss plus the noisy inputs it was computed on."""
    loss: torch.Tensor
    noisy: List[NoisySequence]

    @property
    def mean_t(self) -> float:
        return float(np.mean([n.t for n in self.noisy]))


def _explicit_masks(
    batch: Sequence[TokenSequence], masks: Sequence[Sequence[int]], mask_id: int, response_only: bool
) -> List[NoisySequence]:
    if len(masks) != len(batch):
        raise ContractError("one mask set per example is required")
    noisy = []
    for seq, positions in zip(batch, masks):
        positions = sorted(set(int(p) for p in positions))
        if any(not 0 <= p < len(seq) for p in positions):
            raise ContractError("mask position outside the sequence")
        if response_only and any(p < seq.prompt_len for p in positions):
            raise ContractError("response-only masks must not touch the prompt")
        t = len(positions) / len(seq) if seq.tokens else 0.0
        noisy.append(apply_mask(seq, positions, t, mask_id))
    return noisy


def masked_loss(model: Denoiser, noisy: Sequence[NoisySequence]) -> torch.Tensor:
    """Masked cross-entropy on already-masked inputs."""
    logits = forward(model, noisy)
    length = logits.shape[1]
    targets = torch.full((len(noisy), length), model.config.pad_id, dtype=torch.long)
    mask = torch.zeros((len(noisy), length), dtype=torch.bool)
    for i, n in enumerate(noisy):
        targets[i, : len(n)] = torch.tensor(n.origin.tokens, dtype=torch.long)
        for p in n.masked_positions:
            mask[i, p] = True
    return masked_cross_entropy(logits, targets, mask)


def _objective(
    model: Denoiser,
    batch: Sequence[TokenSequence],
    rng: Optional[np.random.Generator],
    policy: MaskingPolicy,
    sampler: MaskSampler,
    masks: Optional[Sequence[Sequence[int]]],
) -> ObjectiveOutput:
    if not batch:
        raise ContractError("batch must be nonempty")
    mask_id = model.config.mask_id
    if masks is not None:
        noisy = _explicit_masks(batch, masks, mask_id, policy.mode is PolicyMode.RESPONSE_ONLY)
    else:
        if rng is None:
            raise ContractError("a random source is required when masks are drawn")
        noisy = [draw_mask(seq, policy, sampler, rng, mask_id) for seq in batch]
    return ObjectiveOutput(masked_loss(model, noisy), noisy)


def loss_full_sequence(
    model: Denoiser,
    batch: Sequence[TokenSequence],
    rng: Optional[np.random.Generator] = None,
    sampler: MaskSampler = MaskSampler.FIXED_COUNT,
    masks: Optional[Sequence[Sequence[int]]] = None,
) -> ObjectiveOutput:
    """
    Full-sequence masking loss.

    Args:
        model: Denoiser
        batch: Clean sequences
        rng: Random source for t and the mask draw
        sampler: Fixed-count (default) or Bernoulli masking
        masks: Optional explicit mask sets, bypassing the random draw

    Returns:
        ObjectiveOutput whose loss supports backward()
    """
    return _objective(model, batch, rng, MaskingPolicy.full_sequence(), sampler, masks)


def loss_response_only(
    model: Denoiser,
    batch: Sequence[TokenSequence],
    rng: Optional[np.random.Generator] = None,
    sampler: MaskSampler = MaskSampler.FIXED_COUNT,
    masks: Optional[Sequence[Sequence[int]]] = None,
) -> ObjectiveOutput:
    """Response-only masking loss; the prompt of every example stays clean."""
    for seq in batch:
        if seq.prompt_len >= len(seq):
            raise ContractError("response-only masking needs a nonempty response")
    return _objective(model, batch, rng, MaskingPolicy.response_only(), sampler, masks)
