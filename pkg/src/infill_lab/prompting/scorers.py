"""Validation scorers mapping (prediction, reference) answers to [0, 1]."""

from abc import ABC, abstractmethod
from typing import Sequence

from ..core import Vocabulary
from ..errors import ConfigError, UndefinedMetricError
from ..evaluation.metrics import exact_match, parse_number


def response_text(vocab: Vocabulary, tokens: Sequence[int]) -> str:
    """Answer text of a response: symbols up to the first EOS, PAD and MASK dropped."""
    kept = []
    for token in tokens:
        if token == vocab.eos_id:
            break
        if token not in (vocab.pad_id, vocab.mask_id):
            kept.append(token)
    return vocab.decode(kept)


class Scorer(ABC):
    """Base class for validation scorers."""

    name: str = "base"

    @abstractmethod
    def score(self, prediction: str, reference: str) -> float:
        """Return a score in [0, 1]."""


class ExactMatchScorer(Scorer):
    name = "exact_match"

    def score(self, prediction: str, reference: str) -> float:
        return float(exact_match(prediction, reference))


class NumericScorer(Scorer):
    """
    Absolute-error score 1 / (1 + |prediction - reference|).

    Unparseable predictions score 0; an unparseable reference leaves the score undefined.
    """

    name = "numeric"

    def score(self, prediction: str, reference: str) -> float:
        target = parse_number(reference)
        if target is None:
            raise UndefinedMetricError(f"reference {reference!r} is not a number")
        value = parse_number(prediction)
        if value is None:
            return 0.0
        return 1.0 / (1.0 + abs(value - target))


SCORERS = {
    ExactMatchScorer.name: ExactMatchScorer,
    NumericScorer.name: NumericScorer,
}


def create_scorer(scorer_type: str) -> Scorer:
    scorer_class = SCORERS.get(scorer_type.lower())
    if not scorer_class:
        raise ConfigError(f"Unknown scorer: {scorer_type}. Available: {list(SCORERS)}")
    return scorer_class()
