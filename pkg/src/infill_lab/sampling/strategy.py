"""
Unmasking strategies.

A strategy decides which of the currently masked positions are committed at a
denoising step, given one sampled token and its confidence per position.
"""

from abc import ABC, abstractmethod

import numpy as np


class UnmaskStrategy(ABC):
    """Base class for commit-order strategies."""

    name: str = "base"

    @abstractmethod
    def select(self, confidences: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        """
        Choose k entries to commit.

        Args:
            confidences: Probability of the sampled token, one per masked
                position, in ascending position order
            k: Number of entries to commit
            rng: Random source of the current generation

        Returns:
            Indices into `confidences`
        """


class ConfidenceStrategy(UnmaskStrategy):
    """Commit the k most confident samples; ties go to the lower position."""

    name = "confidence"

    def select(self, confidences: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        order = np.argsort(-confidences, kind="stable")
        return order[:k]


class RandomStrategy(UnmaskStrategy):
    """Commit k uniformly chosen positions."""

    name = "random"

    def select(self, confidences: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(len(confidences), size=k, replace=False)


STRATEGIES = {
    ConfidenceStrategy.name: ConfidenceStrategy,
    RandomStrategy.name: RandomStrategy,
}


def create_strategy(strategy_type: str) -> UnmaskStrategy:
    """
    Factory function to create strategy instances.

    Args:
        strategy_type: "confidence" or "random"

    Returns:
        Strategy instance
    """
    strategy_class = STRATEGIES.get(strategy_type.lower())
    if not strategy_class:
        raise ValueError(f"Unknown unmask strategy: {strategy_type}. Available: {list(STRATEGIES)}")
    return strategy_class()
