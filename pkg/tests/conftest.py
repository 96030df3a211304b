"""
Shared fixtures: a small vocabulary, tiny denoisers and stub predictors with
known outputs.
"""

import pytest
import torch

from infill_lab.core import TokenSequence, Vocabulary, write_pairs
from infill_lab.model import Denoiser, DenoiserConfig, init_params

DIGITS = [str(d) for d in range(10)]


class ConstantDenoiser(Denoiser):
    """Predicts the uniform distribution everywhere (all logits zero)."""

    def forward(self, tokens, key_mask=None):
        return torch.zeros(*tokens.shape, self.config.vocab_size, dtype=torch.float64)


class OracleDenoiser(Denoiser):
    """Puts all mass on a fixed clean sequence."""

    def __init__(self, config: DenoiserConfig, clean):
        super().__init__(config)
        self.clean = torch.tensor(list(clean), dtype=torch.long)

    def forward(self, tokens, key_mask=None):
        batch, length = tokens.shape
        logits = torch.zeros(batch, length, self.config.vocab_size, dtype=torch.float64)
        logits[:, torch.arange(length), self.clean[:length]] = 1e9
        return logits


def stub_config(vocab_size: int = 64, max_len: int = 64) -> DenoiserConfig:
    return DenoiserConfig(vocab_size=vocab_size, mask_id=0, pad_id=2, d_model=8, n_layers=1, n_heads=1,
                          max_len=max_len)


@pytest.fixture
def vocab():
    """Digits, arithmetic symbols and a few words."""
    return Vocabulary.build(DIGITS + ["+", "-", "=", "please", "copy", "reverse", "the", "digits", ":"])


@pytest.fixture
def tiny_config(vocab):
    return DenoiserConfig(
        vocab_size=vocab.size,
        mask_id=vocab.mask_id,
        pad_id=vocab.pad_id,
        d_model=16,
        n_layers=2,
        n_heads=2,
        max_len=32,
    )


@pytest.fixture
def tiny_model(tiny_config):
    return init_params(tiny_config, seed=0)


@pytest.fixture
def pair(vocab):
    """One clean pair: "3 + 4 =" -> "7 <eos>"."""
    return TokenSequence.from_pair(vocab, "3 + 4 =", "7 <eos>")


@pytest.fixture
def pairs_file(tmp_path, vocab):
    """A small JSON-lines file of copy / reverse pairs with slot values."""
    records = []
    for i, query in enumerate(["1 2", "3 4", "5 6", "7 8", "9 0", "2 4"]):
        task = "copy" if i % 2 == 0 else "reverse"
        digits = query.split()
        answer = digits if task == "copy" else list(reversed(digits))
        records.append({
            "prompt": f"please {task} the digits : {query} =",
            "response": " ".join(answer + ["<eos>"]),
            "slots": {"query": query},
            "task": task,
        })
    path = tmp_path / "pairs.jsonl"
    write_pairs(path, records)
    return path
