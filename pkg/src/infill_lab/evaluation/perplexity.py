"""
Monte-Carlo diffusion perplexity.

Each draw samples t, masks every region token independently with probability
1 - alpha_t, and weights the summed negative log-likelihood of the masked
tokens by the NELBO weight at t. The per-token NELBO is the mean over draws,
and PPL = exp(per-token NELBO).

Timesteps are drawn from U(0, 1] and clamped to T_MIN before use; the clamped
mass stands in for the interval below T_MIN where the weight diverges. With
stratified draws (the default), draw k takes its timestep from the k-th of K
equal strata of (0, 1], so the marginal of every draw is still uniform.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Literal, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel

from ..core import (
    MaskingPolicy,
    NoiseSchedule,
    TokenSequence,
    alpha,
    clamp_timestep,
    make_rng,
    nelbo_weight,
    sample_mask_ratio,
)
from ..errors import ConfigError, ContractError
from ..model import Denoiser

logger = logging.getLogger(__name__)


class PPLConfig(BaseModel):
    mc_samples: int = 1000
    sigma_max: float = 10.0
    region: Literal["full_sequence", "response_only", "prompt"] = "full_sequence"
    stratified: bool = True
    batch_size: int = 64
    seed: int = 0


@dataclass(frozen=True)
class PPLEstimate:
    """Per-token NELBO estimate, its standard error, and the implied perplexity."""
    ppl: float
    nelbo: float
    nelbo_per_token: float
    stderr: float
    mc_samples: int
    num_tokens: int

    def to_record(self) -> Dict[str, float]:
        return asdict(self)


def region_policy(name: str, seq: TokenSequence) -> MaskingPolicy:
    """Named PPL region; "prompt" scores the prompt conditioned on the (gold) response."""
    if name == "full_sequence":
        return MaskingPolicy.full_sequence()
    if name == "response_only":
        return MaskingPolicy.response_only()
    if name == "prompt":
        return MaskingPolicy.from_spans([(0, seq.prompt_len)] if seq.prompt_len else [])
    raise ConfigError(f"unknown PPL region {name!r}")


# (clean tokens, masked positions)
_Row = Tuple[np.ndarray, np.ndarray]


def _masked_nll(model: Denoiser, rows: Sequence[_Row]) -> List[float]:
    """Summed -log p(clean | noisy) over the masked positions of each row."""
    cfg = model.config
    length = max(len(clean) for clean, _ in rows)
    tokens = np.full((len(rows), length), cfg.pad_id, dtype=np.int64)
    targets = np.full((len(rows), length), cfg.pad_id, dtype=np.int64)
    scored = np.zeros((len(rows), length), dtype=bool)
    key_mask = np.zeros((len(rows), length), dtype=bool)
    for i, (clean, positions) in enumerate(rows):
        tokens[i, : len(clean)] = clean
        tokens[i, positions] = cfg.mask_id
        targets[i, : len(clean)] = clean
        scored[i, positions] = True
        key_mask[i, : len(clean)] = True

    with torch.no_grad():
        inputs = torch.from_numpy(tokens)
        logits = model(inputs) if key_mask.all() else model(inputs, torch.from_numpy(key_mask))
        log_probs = F.log_softmax(logits, dim=-1)
        nll = -log_probs.gather(-1, torch.from_numpy(targets).unsqueeze(-1)).squeeze(-1)
        totals = torch.where(torch.from_numpy(scored), nll, torch.zeros_like(nll)).sum(dim=1)
    return totals.tolist()


def _draw_values(
    model: Denoiser,
    items: Sequence[Tuple[TokenSequence, List[int]]],
    K: int,
    schedule: NoiseSchedule,
    seed: int,
    batch_size: int,
    stratified: bool,
) -> np.ndarray:
    """Per-token weighted NELBO of K draws; draw k uses item k mod len(items)."""
    arrays = [(np.asarray(seq.tokens, dtype=np.int64), np.asarray(region, dtype=np.int64)) for seq, region in items]
    values = np.zeros(K, dtype=np.float64)
    rows: List[_Row] = []
    meta: List[Tuple[int, float, int]] = []

    def flush():
        for (k, weight, size), total in zip(meta, _masked_nll(model, rows)):
            values[k] = weight * total / size
        rows.clear()
        meta.clear()

    for k in range(K):
        clean, region = arrays[k % len(arrays)]
        rng = make_rng(seed, "ppl", k)
        u = sample_mask_ratio(rng)
        if stratified:
            u = (k + u) / K
        t = clamp_timestep(u)
        p_mask = 1.0 - alpha(t, schedule)
        positions = region[rng.random(len(region)) < p_mask]
        if positions.size == 0:
            continue
        rows.append((clean, positions))
        meta.append((k, nelbo_weight(t, schedule), len(region)))
        if len(rows) >= batch_size:
            flush()
    if rows:
        flush()
    return values


def _estimate(values: np.ndarray, num_tokens: int) -> PPLEstimate:
    K = len(values)
    per_token = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(K)) if K > 1 else 0.0
    return PPLEstimate(
        ppl=math.exp(per_token),
        nelbo=per_token * num_tokens,
        nelbo_per_token=per_token,
        stderr=stderr,
        mc_samples=K,
        num_tokens=num_tokens,
    )


def diffusion_ppl(
    model: Denoiser,
    seq: TokenSequence,
    K: int,
    schedule: NoiseSchedule,
    region: MaskingPolicy,
    seed: int,
    batch_size: int = 64,
    stratified: bool = True,
) -> PPLEstimate:
    """
    Diffusion perplexity of one sequence over a masking region.

    Tokens outside the region stay clean and are conditioned on.

    Args:
        model: Denoiser
        seq: Clean sequence
        K: Number of Monte-Carlo draws
        schedule: Noise schedule
        region: Positions that may be masked and scored
        seed: Draw k uses make_rng(seed, "ppl", k)
        batch_size: Draws per forward pass
        stratified: Take draw k's timestep from stratum k of K

    Returns:
        PPLEstimate; stderr is the standard error of the per-token NELBO
    """
    if K < 1:
        raise ConfigError(f"K must be at least 1, got {K}")
    positions = region.region(len(seq), seq.prompt_len)
    if not positions:
        raise ContractError("PPL region is empty")
    model.eval()
    values = _draw_values(model, [(seq, positions)], K, schedule, seed, batch_size, stratified)
    return _estimate(values, len(positions))


def corpus_ppl(
    model: Denoiser,
    sequences: Sequence[TokenSequence],
    cfg: PPLConfig,
) -> PPLEstimate:
    """
    Per-token diffusion perplexity over a set of sequences.

    The draws cycle through the sequences; `num_tokens` is the mean region size.
    """
    if cfg.mc_samples < 1:
        raise ConfigError(f"mc_samples must be at least 1, got {cfg.mc_samples}")
    if not sequences:
        raise ContractError("no sequences to evaluate")
    items = []
    for seq in sequences:
        positions = region_policy(cfg.region, seq).region(len(seq), seq.prompt_len)
        if not positions:
            raise ContractError(f"PPL region {cfg.region!r} is empty for a sequence")
        items.append((seq, positions))
    model.eval()
    schedule = NoiseSchedule(cfg.sigma_max)
    values = _draw_values(model, items, cfg.mc_samples, schedule, cfg.seed, cfg.batch_size, cfg.stratified)
    estimate = _estimate(values, round(float(np.mean([len(p) for _, p in items]))))
    logger.info("PPL over %d sequences: %.4f (se %.4f)", len(sequences), estimate.ppl, estimate.stderr)
    return estimate
