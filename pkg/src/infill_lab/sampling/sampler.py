"""
Reverse process: iterative denoising for generation and fixed-length infilling.

Every step samples a token for each masked position from
softmax(logits / temperature) and commits a scheduled number of them. Committed
tokens are never re-masked. Generation is infilling of a template whose masks
are appended after the prompt, so both share one code path.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, field_validator

from ..core import NoisySequence, TokenSequence, make_rng
from ..errors import ContractError, SequenceLengthError
from ..model import Denoiser, forward
from .strategy import STRATEGIES, create_strategy

logger = logging.getLogger(__name__)


class SamplerConfig(BaseModel):
    """Reverse-process settings, shared by generation and infilling."""
    steps: int = 128
    gen_length: int = 128
    temperature: float = 0.8
    strategy: str = "confidence"
    seed: int = 0

    @field_validator("steps")
    @classmethod
    def _steps(cls, v: int) -> int:
        if v < 1:
            raise ValueError("steps must be at least 1")
        return v

    @field_validator("gen_length")
    @classmethod
    def _gen_length(cls, v: int) -> int:
        if v < 0:
            raise ValueError("gen_length must be non-negative")
        return v

    @field_validator("temperature")
    @classmethod
    def _temperature(cls, v: float) -> float:
        if v < 0:
            raise ValueError("temperature must be non-negative")
        return v

    @field_validator("strategy")
    @classmethod
    def _strategy(cls, v: str) -> str:
        if v.lower() not in STRATEGIES:
            raise ValueError(f"unknown unmask strategy {v!r}; choose from {sorted(STRATEGIES)}")
        return v.lower()


@dataclass(frozen=True)
class StepTrace:
    step: int
    positions: Tuple[int, ...]
    tokens: Tuple[int, ...]


@dataclass(frozen=True)
class GenerationResult:
    """A completed sequence and the order in which its masks were filled."""
    sequence: TokenSequence
    trace: Tuple[StepTrace, ...] = field(default_factory=tuple)

    @property
    def denoiser_calls(self) -> int:
        return len(self.trace)

    def write_trace(self, path: str | Path) -> None:
        """One JSON object per step with keys step, positions, tokens."""
        with open(path, "w", encoding="utf-8") as f:
            for record in self.trace:
                row = {"step": record.step, "positions": list(record.positions), "tokens": list(record.tokens)}
                f.write(json.dumps(row, sort_keys=True) + "\n")


def unmask_count_schedule(num_masked: int, steps: int) -> List[int]:
    """
    Split `num_masked` commits over at most `steps` denoising steps.

    Earlier steps take the ceiling of the even split: (5, 2) -> [3, 2].
    """
    if num_masked < 0 or steps < 1:
        raise ContractError(f"invalid schedule request: num_masked={num_masked}, steps={steps}")
    if num_masked == 0:
        return []
    n = min(steps, num_masked)
    base, extra = divmod(num_masked, n)
    return [base + 1] * extra + [base] * (n - extra)


def _sample_tokens(
    logits: torch.Tensor, temperature: float, mask_id: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Sample one token per row; returns (tokens, probability of each sampled token)."""
    logits = logits.detach().to(torch.float64).clone()
    logits[:, mask_id] = float("-inf")
    if temperature == 0:
        probs = F.softmax(logits, dim=-1).numpy()
        tokens = probs.argmax(axis=-1)
    else:
        scaled = logits / temperature
        probs = F.softmax(scaled, dim=-1).numpy()
        # Gumbel-max: argmax(log p + G) is an exact categorical draw
        gumbel = rng.gumbel(size=probs.shape)
        tokens = (scaled.numpy() + gumbel).argmax(axis=-1)
    confidences = probs[np.arange(len(tokens)), tokens]
    return tokens, confidences


def _denoise(
    model: Denoiser,
    state: NoisySequence,
    k: int,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> Tuple[NoisySequence, Tuple[int, ...], Tuple[int, ...]]:
    if k < 0 or k > state.num_masked:
        raise ContractError(f"cannot commit {k} tokens; {state.num_masked} positions are masked")
    if k == 0:
        return state, (), ()
    positions = np.asarray(sorted(state.masked_positions), dtype=np.int64)
    with torch.no_grad():
        logits = forward(model, [state])[0, positions]
    tokens, confidences = _sample_tokens(logits, config.temperature, state.mask_id, rng)
    chosen = np.sort(create_strategy(config.strategy).select(confidences, k, rng))
    committed_positions = tuple(int(p) for p in positions[chosen])
    committed_tokens = tuple(int(t) for t in tokens[chosen])
    return state.commit(committed_positions, committed_tokens), committed_positions, committed_tokens


def denoise_step(
    model: Denoiser,
    state: NoisySequence,
    k: int,
    config: SamplerConfig,
    rng: Optional[np.random.Generator] = None,
) -> NoisySequence:
    """
    Commit exactly k masked positions of `state`.

    Args:
        model: Denoiser
        state: Partially masked sequence
        k: Number of positions to unmask
        config: Temperature and unmask strategy
        rng: Random source; derived from config.seed when omitted

    Returns:
        NoisySequence with k fewer masks; clean positions are unchanged
    """
    if rng is None:
        rng = make_rng(config.seed, "denoise_step")
    new_state, _, _ = _denoise(model, state, k, config, rng)
    return new_state


def infill_with_trace(model: Denoiser, template: NoisySequence, config: SamplerConfig) -> GenerationResult:
    """Fill every masked position of `template`, recording the commit order."""
    if template.mask_id != model.config.mask_id:
        raise ContractError("template and model disagree on the mask id")
    if len(template) > model.config.max_len:
        raise SequenceLengthError(f"template length {len(template)} exceeds max_len {model.config.max_len}")
    model.eval()
    rng = make_rng(config.seed, "sample")
    state = template
    trace = []
    for step, k in enumerate(unmask_count_schedule(state.num_masked, config.steps)):
        state, positions, tokens = _denoise(model, state, k, config, rng)
        trace.append(StepTrace(step, positions, tokens))
    logger.debug("Infilled %d positions in %d steps", template.num_masked, len(trace))
    return GenerationResult(state.to_clean(), tuple(trace))


def infill(model: Denoiser, template: NoisySequence, config: SamplerConfig) -> TokenSequence:
    """
    Fixed-length infilling: masks may sit anywhere, including the prompt.

    Args:
        model: Denoiser
        template: Sequence whose MASK positions are to be filled
        config: Sampler settings (gen_length is ignored)

    Returns:
        Completed TokenSequence of the template's length
    """
    return infill_with_trace(model, template, config).sequence


def generate(model: Denoiser, prompt: TokenSequence, config: SamplerConfig) -> GenerationResult:
    """
    Generate `config.gen_length` tokens after `prompt`.

    The whole of `prompt.tokens` is treated as the prefix; the result's
    prompt_len is its length.

    Raises:
        SequenceLengthError: prompt plus generation exceeds max_len
    """
    total = len(prompt) + config.gen_length
    if total > model.config.max_len:
        raise SequenceLengthError(
            f"prompt ({len(prompt)}) + gen_length ({config.gen_length}) exceeds max_len {model.config.max_len}"
        )
    mask_id = model.config.mask_id
    template = NoisySequence.from_tokens(
        tuple(prompt.tokens) + (mask_id,) * config.gen_length, mask_id, len(prompt)
    )
    return infill_with_trace(model, template, config)
