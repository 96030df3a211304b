"""
A tiny bidirectional transformer estimating P(X_0 | X_t).

Pre-norm blocks with learned positional embeddings and no causal mask: every
position attends to every real (non-padding) position of the sequence. The
timestep is not an input; the model reads the noise level off the mask pattern.
"""

import math
from typing import Literal, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, model_validator

from ..core import NoisySequence
from ..errors import SequenceLengthError

# batch x length x vocab_size logits
LogitsGrid = torch.Tensor


class DenoiserConfig(BaseModel):
    """Architecture of the denoiser."""
    vocab_size: int
    mask_id: int
    pad_id: int
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    max_len: int = 256
    d_ff: Optional[int] = None
    dtype: Literal["float64", "float32"] = "float64"

    @model_validator(mode="after")
    def _check(self) -> "DenoiserConfig":
        if self.vocab_size < 1 or self.d_model < 1 or self.n_layers < 1 or self.n_heads < 1:
            raise ValueError("vocab_size, d_model, n_layers and n_heads must be positive")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        if self.max_len < 1:
            raise ValueError("max_len must be positive")
        for name in ("mask_id", "pad_id"):
            if not 0 <= getattr(self, name) < self.vocab_size:
                raise ValueError(f"{name} must be a valid token id")
        if self.d_ff is None:
            self.d_ff = 4 * self.d_model
        return self

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32


class SelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.o = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor, key_mask: Optional[torch.Tensor]) -> torch.Tensor:
        B, L, D = x.shape
        head_dim = D // self.n_heads

        def split(t: torch.Tensor) -> torch.Tensor:
            return t.view(B, L, self.n_heads, head_dim).transpose(1, 2)

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(head_dim)
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        weights = F.softmax(scores, dim=-1)
        out = (weights @ v).transpose(1, 2).reshape(B, L, D)
        return self.o(out)


class Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int, d_ff: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.attn = SelfAttention(d_model, n_heads)
        self.ln2 = nn.LayerNorm(d_model)
        self.ff1 = nn.Linear(d_model, d_ff)
        self.ff2 = nn.Linear(d_ff, d_model)

    def forward(self, x: torch.Tensor, key_mask: Optional[torch.Tensor]) -> torch.Tensor:
        x = x + self.attn(self.ln1(x), key_mask)
        return x + self.ff2(F.gelu(self.ff1(self.ln2(x))))


class Denoiser(nn.Module):
    """Token + position embeddings, transformer blocks, vocabulary head."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model)
        self.pos_emb = nn.Embedding(config.max_len, config.d_model)
        self.blocks = nn.ModuleList(
            Block(config.d_model, config.n_heads, config.d_ff) for _ in range(config.n_layers)
        )
        self.ln_f = nn.LayerNorm(config.d_model)
        self.head = nn.Linear(config.d_model, config.vocab_size)

    def forward(self, tokens: torch.Tensor, key_mask: Optional[torch.Tensor] = None) -> LogitsGrid:
        """
        Args:
            tokens: Long tensor (batch, length)
            key_mask: Optional bool tensor (batch, length), False on padding

        Returns:
            Logits (batch, length, vocab_size)
        """
        length = tokens.shape[1]
        if length > self.config.max_len:
            raise SequenceLengthError(f"sequence length {length} exceeds max_len {self.config.max_len}")
        positions = torch.arange(length, device=tokens.device)
        x = self.tok_emb(tokens) + self.pos_emb(positions)[None]
        for block in self.blocks:
            x = block(x, key_mask)
        return self.head(self.ln_f(x))


def init_params(config: DenoiserConfig, seed: int) -> Denoiser:
    """
    Build a denoiser with deterministic weights.

    Projections and embeddings are drawn from N(0, 1/d_model); biases start at
    zero and layer norms at identity.
    """
    model = Denoiser(config).to(config.torch_dtype)
    generator = torch.Generator().manual_seed(int(seed))
    std = 1.0 / math.sqrt(config.d_model)
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.endswith("bias"):
                param.zero_()
            elif ".ln" in name or name.startswith("ln_f"):
                param.fill_(1.0)
            else:
                noise = torch.randn(param.shape, generator=generator, dtype=torch.float64)
                param.copy_(noise * std)
    return model


def collate(
    sequences: Sequence[Sequence[int]], pad_id: int
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Right-pad token lists; returns (tokens, key_mask) with key_mask False on padding."""
    length = max(len(s) for s in sequences)
    tokens = torch.full((len(sequences), length), pad_id, dtype=torch.long)
    key_mask = torch.zeros((len(sequences), length), dtype=torch.bool)
    for i, seq in enumerate(sequences):
        tokens[i, : len(seq)] = torch.tensor(list(seq), dtype=torch.long)
        key_mask[i, : len(seq)] = True
    return tokens, key_mask


def forward(model: Denoiser, batch: Sequence[NoisySequence]) -> LogitsGrid:
    """Run the denoiser on a batch of noisy sequences of possibly unequal length."""
    for seq in batch:
        if len(seq) > model.config.max_len:
            raise SequenceLengthError(
                f"sequence length {len(seq)} exceeds max_len {model.config.max_len}"
            )
    tokens, key_mask = collate([s.tokens for s in batch], model.config.pad_id)
    if bool(key_mask.all()):
        return model(tokens)
    return model(tokens, key_mask)
