"""
Response generators used during validation.

Validation only needs "prompt in, response tokens out", so the denoiser and any
external generator sit behind the same interface.
"""

from abc import ABC, abstractmethod
from typing import Callable, Sequence, Tuple

from ..core import TokenSequence
from ..errors import ContractError
from ..model import Denoiser
from ..sampling import SamplerConfig, generate


class ResponseGenerator(ABC):
    """Produces a response of a requested length for a rendered prompt."""

    @abstractmethod
    def generate(self, prompt: TokenSequence, length: int, seed: int) -> Tuple[int, ...]:
        """
        Args:
            prompt: Rendered prompt tokens
            length: Number of response tokens to produce
            seed: Seed for this generation

        Returns:
            Response token ids
        """


class DiffusionResponseGenerator(ResponseGenerator):
    """Generates with the denoiser's reverse process."""

    def __init__(self, model: Denoiser, config: SamplerConfig):
        self.model = model
        self.config = config

    def generate(self, prompt: TokenSequence, length: int, seed: int) -> Tuple[int, ...]:
        config = self.config.model_copy(update={"gen_length": length, "seed": seed})
        result = generate(self.model, prompt, config)
        return result.sequence.response


class CallableResponseGenerator(ResponseGenerator):
    """Wraps a plain function `(prompt, length, seed) -> tokens`."""

    def __init__(self, fn: Callable[[TokenSequence, int, int], Sequence[int]]):
        self.fn = fn

    def generate(self, prompt: TokenSequence, length: int, seed: int) -> Tuple[int, ...]:
        tokens = tuple(int(t) for t in self.fn(prompt, length, seed))
        if len(tokens) != length:
            raise ContractError(f"generator returned {len(tokens)} tokens, expected {length}")
        return tokens
