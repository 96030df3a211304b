"""
Data models shared by every part of the laboratory.

This module defines the vocabulary, clean and noisy token sequences, and the
masking policy that decides which region of a sequence may be corrupted.
"""

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from ..errors import ContractError, DataError

MASK_SYMBOL = "<mask>"
EOS_SYMBOL = "<eos>"
PAD_SYMBOL = "<pad>"
RESERVED_SYMBOLS = (MASK_SYMBOL, EOS_SYMBOL, PAD_SYMBOL)


@dataclass(frozen=True)
class Vocabulary:
    """A closed symbol table; the position of a symbol is its token id."""
    symbols: Tuple[str, ...]

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ContractError("vocabulary symbols must be unique")
        missing = [s for s in RESERVED_SYMBOLS if s not in self.symbols]
        if missing:
            raise ContractError(f"vocabulary is missing reserved symbols: {missing}")
        for symbol in self.symbols:
            if not symbol or any(ch.isspace() for ch in symbol):
                raise ContractError(f"vocabulary symbol {symbol!r} must be printable without whitespace")

    @classmethod
    def build(cls, symbols: Iterable[str]) -> "Vocabulary":
        """Create a vocabulary with the reserved symbols first, then `symbols` in order."""
        ordered = list(RESERVED_SYMBOLS)
        for symbol in symbols:
            if symbol not in ordered:
                ordered.append(symbol)
        return cls(tuple(ordered))

    @classmethod
    def from_file(cls, path: str | Path) -> "Vocabulary":
        """Load a vocabulary file: one symbol per line, line number = token id."""
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise DataError(f"Failed to read vocabulary from {path}: {e}")
        try:
            return cls(tuple(line.strip() for line in lines if line.strip()))
        except ContractError as e:
            raise DataError(f"Malformed vocabulary {path}: {e}")

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.symbols) + "\n", encoding="utf-8")

    @property
    def size(self) -> int:
        return len(self.symbols)

    @cached_property
    def ids(self) -> Dict[str, int]:
        return {symbol: i for i, symbol in enumerate(self.symbols)}

    @property
    def mask_id(self) -> int:
        return self.ids[MASK_SYMBOL]

    @property
    def eos_id(self) -> int:
        return self.ids[EOS_SYMBOL]

    @property
    def pad_id(self) -> int:
        return self.ids[PAD_SYMBOL]

    def content_hash(self) -> str:
        """SHA-256 of the symbol table, used to pair checkpoints with vocabularies."""
        return hashlib.sha256("\n".join(self.symbols).encode("utf-8")).hexdigest()

    def encode(self, text: str) -> List[int]:
        """
        Tokenize whitespace-separated symbols.

        Args:
            text: Space separated symbols, e.g. "3 + 4 ="

        Returns:
            List of token ids
        """
        ids = []
        for symbol in text.split():
            if symbol not in self.ids:
                raise ContractError(f"symbol {symbol!r} is not in the vocabulary")
            ids.append(self.ids[symbol])
        return ids

    def decode(self, ids: Iterable[int], strip_special: bool = False) -> str:
        """Join symbols with single spaces; optionally drop EOS/PAD/MASK."""
        special = {self.mask_id, self.eos_id, self.pad_id}
        out = []
        for i in ids:
            if strip_special and i in special:
                continue
            out.append(self.symbols[i])
        return " ".join(out)

    def validate(self, seq: "TokenSequence") -> None:
        """Check that a clean sequence only uses known, non-mask ids."""
        for token in seq.tokens:
            if not 0 <= token < self.size:
                raise ContractError(f"token id {token} outside vocabulary of size {self.size}")
            if token == self.mask_id:
                raise ContractError("clean sequences must not contain the mask token")


@dataclass(frozen=True)
class TokenSequence:
    """A clean prompt/response pair: tokens[:prompt_len] is the prompt."""
    tokens: Tuple[int, ...]
    prompt_len: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not 0 <= self.prompt_len <= len(self.tokens):
            raise ContractError(
                f"prompt_len {self.prompt_len} outside [0, {len(self.tokens)}]"
            )

    @classmethod
    def from_pair(cls, vocab: Vocabulary, prompt: str, response: str) -> "TokenSequence":
        prompt_ids = vocab.encode(prompt)
        seq = cls(tuple(prompt_ids + vocab.encode(response)), len(prompt_ids))
        vocab.validate(seq)
        return seq

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def prompt(self) -> Tuple[int, ...]:
        return self.tokens[: self.prompt_len]

    @property
    def response(self) -> Tuple[int, ...]:
        return self.tokens[self.prompt_len:]


@dataclass(frozen=True)
class NoisySequence:
    """
    A partially masked sequence X_t.

    `origin` is the clean sequence the noise was applied to; it is None for
    templates whose masked positions have no known clean value.
    """
    tokens: Tuple[int, ...]
    masked_positions: FrozenSet[int]
    t: float
    mask_id: int
    prompt_len: int
    origin: Optional[TokenSequence] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        object.__setattr__(self, "masked_positions", frozenset(int(i) for i in self.masked_positions))
        if not 0.0 <= self.t <= 1.0:
            raise ContractError(f"timestep {self.t} outside [0, 1]")
        if self.t == 0.0 and self.masked_positions:
            raise ContractError("t = 0 requires an empty mask set")
        for i, token in enumerate(self.tokens):
            if (token == self.mask_id) != (i in self.masked_positions):
                raise ContractError(f"position {i}: mask token and mask set disagree")
        if any(not 0 <= i < len(self.tokens) for i in self.masked_positions):
            raise ContractError("masked position out of range")
        if self.origin is not None:
            if len(self.origin) != len(self.tokens):
                raise ContractError("noisy sequence and origin differ in length")
            for i, token in enumerate(self.tokens):
                if i not in self.masked_positions and token != self.origin.tokens[i]:
                    raise ContractError(f"position {i} differs from the clean origin")

    @classmethod
    def from_clean(cls, seq: TokenSequence, mask_id: int) -> "NoisySequence":
        return cls(seq.tokens, frozenset(), 0.0, mask_id, seq.prompt_len, origin=seq)

    @classmethod
    def from_tokens(cls, tokens: Sequence[int], mask_id: int, prompt_len: int) -> "NoisySequence":
        """Build a template from tokens where MASK marks the holes."""
        masked = frozenset(i for i, tok in enumerate(tokens) if tok == mask_id)
        t = len(masked) / len(tokens) if tokens else 0.0
        return cls(tuple(tokens), masked, t, mask_id, prompt_len)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def num_masked(self) -> int:
        return len(self.masked_positions)

    @property
    def is_clean(self) -> bool:
        return not self.masked_positions

    def commit(self, positions: Sequence[int], tokens: Sequence[int]) -> "NoisySequence":
        """Return a copy with `positions` unmasked to `tokens`.

        The copy carries no origin: committed tokens are model samples, not
        the clean values.
        """
        updated = list(self.tokens)
        remaining = set(self.masked_positions)
        for pos, tok in zip(positions, tokens):
            if pos not in remaining:
                raise ContractError(f"position {pos} is not masked")
            if tok == self.mask_id:
                raise ContractError("cannot commit the mask token")
            updated[pos] = int(tok)
            remaining.discard(pos)
        t = self.t * len(remaining) / self.num_masked if self.num_masked else 0.0
        return NoisySequence(tuple(updated), frozenset(remaining), t, self.mask_id, self.prompt_len)

    def to_clean(self) -> TokenSequence:
        if self.masked_positions:
            raise ContractError(f"{self.num_masked} positions are still masked")
        return TokenSequence(self.tokens, self.prompt_len)


class PolicyMode(Enum):
    """Which region of a sequence a masking operation may touch."""
    RESPONSE_ONLY = "response_only"
    FULL_SEQUENCE = "full_sequence"
    SPANS = "spans"


@dataclass(frozen=True)
class MaskingPolicy:
    """A masking region; `spans` are [start, end) ranges used by SPANS mode."""
    mode: PolicyMode
    spans: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        spans = tuple(sorted((int(s), int(e)) for s, e in self.spans))
        object.__setattr__(self, "spans", spans)
        if self.mode is not PolicyMode.SPANS and spans:
            raise ContractError(f"{self.mode.value} policy takes no spans")
        for start, end in spans:
            if start < 0 or end < start:
                raise ContractError(f"invalid span [{start}, {end})")
        for (_, prev_end), (start, _) in zip(spans, spans[1:]):
            if start < prev_end:
                raise ContractError("mask spans must be pairwise disjoint")

    @classmethod
    def response_only(cls) -> "MaskingPolicy":
        return cls(PolicyMode.RESPONSE_ONLY)

    @classmethod
    def full_sequence(cls) -> "MaskingPolicy":
        return cls(PolicyMode.FULL_SEQUENCE)

    @classmethod
    def from_spans(cls, spans: Iterable[Tuple[int, int]]) -> "MaskingPolicy":
        return cls(PolicyMode.SPANS, tuple(spans))

    def region(self, length: int, prompt_len: int) -> List[int]:
        """
        Positions this policy allows to be masked in a sequence.

        Args:
            length: Sequence length
            prompt_len: Prompt/response boundary

        Returns:
            Sorted list of maskable positions
        """
        if self.mode is PolicyMode.FULL_SEQUENCE:
            return list(range(length))
        if self.mode is PolicyMode.RESPONSE_ONLY:
            return list(range(prompt_len, length))
        positions = []
        for start, end in self.spans:
            if end > length:
                raise ContractError(f"span [{start}, {end}) exceeds sequence length {length}")
            positions.extend(range(start, end))
        return positions
