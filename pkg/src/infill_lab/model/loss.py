"""Masked cross-entropy, normalized per sequence by its mask-set size."""

from typing import Dict

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import UndefinedLossError
from .denoiser import LogitsGrid


def per_example_losses(logits: LogitsGrid, targets: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """
    Mean negative log-likelihood over each example's masked positions.

    Args:
        logits: (batch, length, vocab) logits
        targets: (batch, length) clean token ids
        mask: (batch, length) bool, True where the input was masked

    Returns:
        (batch,) losses; 0 for examples with an empty mask set
    """
    log_probs = F.log_softmax(logits, dim=-1)
    nll = -log_probs.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    nll = torch.where(mask, nll, torch.zeros_like(nll))
    counts = mask.sum(dim=1).clamp(min=1)
    return nll.sum(dim=1) / counts.to(nll.dtype)


def masked_cross_entropy(logits: LogitsGrid, targets: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """
    Batch loss: per-example masked mean, averaged over examples with masks.

    Raises:
        UndefinedLossError: every example has an empty mask set
    """
    has_mask = mask.any(dim=1)
    if not bool(has_mask.any()):
        raise UndefinedLossError("all mask sets are empty; the loss is undefined")
    return per_example_losses(logits, targets, mask)[has_mask].mean()


def compute_gradients(model: nn.Module, loss: torch.Tensor) -> Dict[str, torch.Tensor]:
    """Exact gradients of `loss` with respect to every named parameter."""
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return {
        name: torch.zeros_like(p) if g is None else g
        for name, p, g in zip(names, params, grads)
    }
