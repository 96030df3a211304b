"""
Prompt/response pair datasets stored as JSON-lines.

Each record carries a "prompt" and a "response" string of whitespace-separated
vocabulary symbols. Extra fields (e.g. "slots", "task") are kept on the record.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List

import pandas as pd

from ..errors import ContractError, DataError
from .models import TokenSequence, Vocabulary

logger = logging.getLogger(__name__)


class PairDataset:
    """Loads a JSON-lines pair file and tokenizes it against a vocabulary."""

    def __init__(self, jsonl_path: str | Path, vocab: Vocabulary):
        """
        Initialize the dataset from a JSON-lines file.

        Args:
            jsonl_path: Path to the pairs file
            vocab: Vocabulary used for tokenization
        """
        self.path = Path(jsonl_path)
        self.vocab = vocab
        self.records: List[Dict[str, Any]] = []
        self.sequences: List[TokenSequence] = []
        self._load_pairs()

    def _load_pairs(self) -> None:
        try:
            df = pd.read_json(self.path, lines=True, dtype=False)
        except (OSError, ValueError) as e:
            raise DataError(f"Failed to load pairs from {self.path}: {e}")

        if df.empty:
            raise DataError(f"No pairs found in {self.path}")
        missing = {"prompt", "response"} - set(df.columns)
        if missing:
            raise DataError(f"{self.path} is missing fields {sorted(missing)}")

        for line_no, row in enumerate(df.to_dict(orient="records"), start=1):
            prompt, response = str(row["prompt"]), str(row["response"])
            try:
                seq = TokenSequence.from_pair(self.vocab, prompt, response)
            except ContractError as e:
                raise DataError(f"{self.path}:{line_no}: {e}")
            self.records.append({**row, "prompt": prompt, "response": response})
            self.sequences.append(seq)

        logger.info("Loaded %d pairs from %s", len(self.sequences), self.path)

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def max_length(self) -> int:
        return max(len(s) for s in self.sequences)


def write_pairs(path: str | Path, records: Iterable[Dict[str, Any]]) -> None:
    """Write pairs as JSON-lines with sorted keys, one record per line."""
    lines = [json.dumps(r, sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
