"""
Synthetic instruction tasks.

Arithmetic
    prompt   = instruction + "a op b =" with single-digit symbols,
    response = result digits, then EOS padding to a fixed length.

TemplateRecovery
    prompt   = one of several instruction preambles + a digit query + "=",
    response = the preamble's transformation of the query, EOS padded.
    All preambles have the same length and differ only in their verb, so
    recovering a masked preamble requires reading the task off the response.
    Query lengths vary between min_query_len and query_len while the response
    length stays fixed, so EOS padding makes up most of every response and
    starts at a different position from one pair to the next.

Held-out items are drawn from a partition of the operand pairs (or queries)
that the training split never touches.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional

from pydantic import BaseModel, model_validator

from ..core import EOS_SYMBOL, Vocabulary, make_rng, write_pairs
from ..errors import ConfigError

logger = logging.getLogger(__name__)

DIGITS = [str(d) for d in range(10)]
ARITHMETIC_INSTRUCTION = "solve the following problem :"
ARITHMETIC_SLOT = "lhs"
RECOVERY_SLOT = "query"

RECOVERY_TASKS: Dict[str, Callable[[List[str]], List[str]]] = {
    "copy": lambda q: list(q),
    "reverse": lambda q: list(reversed(q)),
    "sort": lambda q: sorted(q),
    "shift": lambda q: [str((int(d) + 1) % 10) for d in q],
}


def recovery_preamble(task: str) -> str:
    return f"please {task} the digits below :"


class TaskKind(str, Enum):
    ARITHMETIC = "arithmetic"
    TEMPLATE_RECOVERY = "template_recovery"


class SynthTaskSpec(BaseModel):
    """Synthetic task definition."""
    kind: TaskKind = TaskKind.TEMPLATE_RECOVERY
    size: int = 20000
    heldout_size: int = 500
    seed: int = 0
    instruction: Optional[str] = None
    max_operand: int = 199
    query_len: int = 4
    min_query_len: Optional[int] = None
    eos_pad: int = 24
    max_len: int = 64

    @model_validator(mode="after")
    def _check(self) -> "SynthTaskSpec":
        if self.size < 1 or self.heldout_size < 1:
            raise ValueError("size and heldout_size must be positive")
        if self.max_operand < 1 or not 1 <= self.query_len <= 6 or self.eos_pad < 0:
            raise ValueError("max_operand >= 1, 1 <= query_len <= 6 and eos_pad >= 0 are required")
        if self.min_query_len is not None and not 1 <= self.min_query_len <= self.query_len:
            raise ValueError("min_query_len must lie in [1, query_len]")
        if self.instruction is not None and not self.instruction.split():
            raise ValueError("instruction must contain at least one symbol")
        return self

    @property
    def arithmetic_instruction(self) -> str:
        return self.instruction or ARITHMETIC_INSTRUCTION

    @property
    def query_lengths(self) -> range:
        """Query lengths drawn for template recovery; one shorter than query_len unless set."""
        low = self.min_query_len if self.min_query_len is not None else max(1, self.query_len - 1)
        return range(low, self.query_len + 1)


@dataclass
class SynthDataset:
    """Generated splits plus the templates needed to infill and evaluate them."""
    spec: SynthTaskSpec
    vocab: Vocabulary
    train: List[Dict] = field(default_factory=list)
    heldout: List[Dict] = field(default_factory=list)
    template: str = ""
    references: Dict[str, str] = field(default_factory=dict)
    response_len: int = 0

    def save(self, output_dir: str | Path) -> Dict[str, Path]:
        """Write vocab, splits, the masked template and one reference template per task."""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "vocab": output_dir / "vocab.txt",
            "train": output_dir / "train.jsonl",
            "heldout": output_dir / "heldout.jsonl",
            "template": output_dir / "template.txt",
        }
        self.vocab.save(paths["vocab"])
        write_pairs(paths["train"], self.train)
        write_pairs(paths["heldout"], self.heldout)
        paths["template"].write_text(self.template + "\n", encoding="utf-8")
        for task, text in sorted(self.references.items()):
            path = output_dir / f"reference-{task}.txt"
            path.write_text(text + "\n", encoding="utf-8")
            paths[f"reference-{task}"] = path
        return paths


def task_vocabulary(spec: SynthTaskSpec) -> Vocabulary:
    symbols = DIGITS + ["+", "-", "="]
    if spec.kind is TaskKind.ARITHMETIC:
        symbols += spec.arithmetic_instruction.split()
    else:
        for task in RECOVERY_TASKS:
            symbols += recovery_preamble(task).split()
    return Vocabulary.build(symbols)


def _digits(n: int) -> List[str]:
    return (["-"] if n < 0 else []) + list(str(abs(n)))


def _padded(answer: List[str], length: int) -> str:
    return " ".join(answer + [EOS_SYMBOL] * (length - len(answer)))


def _check_space(what: str, needed: int, available: int) -> None:
    if needed > available:
        raise ConfigError(f"requested {needed} {what} but the task space only holds {available}")


def _arithmetic(spec: SynthTaskSpec) -> SynthDataset:
    instruction = spec.arithmetic_instruction
    pairs = list(itertools.product(range(spec.max_operand + 1), repeat=2))
    _check_space("held-out operand pairs", spec.heldout_size, len(pairs) - 1)
    order = make_rng(spec.seed, "synth", "partition").permutation(len(pairs))
    heldout_pairs = [pairs[i] for i in order[: spec.heldout_size]]
    train_pool = [(pairs[i], op) for i in order[spec.heldout_size:] for op in "+-"]
    _check_space("training pairs", spec.size, len(train_pool))

    response_len = len(_digits(-spec.max_operand)) + spec.eos_pad

    def record(a: int, b: int, op: str) -> Dict:
        lhs = " ".join(_digits(a) + [op] + _digits(b))
        result = a + b if op == "+" else a - b
        return {
            "prompt": f"{instruction} {lhs} =",
            "response": _padded(_digits(result), response_len),
            "slots": {ARITHMETIC_SLOT: lhs},
            "task": "arithmetic",
        }

    train_idx = make_rng(spec.seed, "synth", "train").choice(len(train_pool), spec.size, replace=False)
    train = [record(a, b, op) for (a, b), op in (train_pool[i] for i in train_idx)]
    ops = make_rng(spec.seed, "synth", "heldout").choice(["+", "-"], size=len(heldout_pairs))
    heldout = [record(a, b, str(op)) for (a, b), op in zip(heldout_pairs, ops)]

    masked = f"<mask*{len(instruction.split())}> {{{ARITHMETIC_SLOT}}} ="
    reference = f"{instruction} {{{ARITHMETIC_SLOT}}} ="
    return SynthDataset(spec, task_vocabulary(spec), train, heldout, masked, {"arithmetic": reference}, response_len)


def _template_recovery(spec: SynthTaskSpec) -> SynthDataset:
    tasks = list(RECOVERY_TASKS)
    queries = ["".join(q) for n in spec.query_lengths for q in itertools.product(DIGITS, repeat=n)]
    heldout_queries = math.ceil(spec.heldout_size / len(tasks))
    _check_space("held-out queries", heldout_queries, len(queries) - 1)
    order = make_rng(spec.seed, "synth", "partition").permutation(len(queries))
    heldout_pool = [(task, queries[i]) for i in order[:heldout_queries] for task in tasks]
    train_pool = [(task, queries[i]) for i in order[heldout_queries:] for task in tasks]
    _check_space("training pairs", spec.size, len(train_pool))

    response_len = spec.query_len + spec.eos_pad

    def record(task: str, query: str) -> Dict:
        digits = list(query)
        return {
            "prompt": f"{recovery_preamble(task)} {' '.join(digits)} =",
            "response": _padded(RECOVERY_TASKS[task](digits), response_len),
            "slots": {RECOVERY_SLOT: " ".join(digits)},
            "task": task,
        }

    train_idx = make_rng(spec.seed, "synth", "train").choice(len(train_pool), spec.size, replace=False)
    heldout_idx = make_rng(spec.seed, "synth", "heldout").choice(len(heldout_pool), spec.heldout_size, replace=False)
    train = [record(*train_pool[i]) for i in train_idx]
    heldout = [record(*heldout_pool[i]) for i in heldout_idx]

    preamble_len = len(recovery_preamble(tasks[0]).split())
    masked = f"<mask*{preamble_len}> {{{RECOVERY_SLOT}}} ="
    references = {task: f"{recovery_preamble(task)} {{{RECOVERY_SLOT}}} =" for task in tasks}
    return SynthDataset(spec, task_vocabulary(spec), train, heldout, masked, references, response_len)


def synth_task_generate(spec: SynthTaskSpec) -> SynthDataset:
    """
    Generate a deterministic train / held-out split for `spec`.

    Raises:
        ConfigError: the requested sizes exceed the task's combinatorial space,
            or a pair would not fit in spec.max_len
    """
    dataset = _arithmetic(spec) if spec.kind is TaskKind.ARITHMETIC else _template_recovery(spec)
    longest = max(len(r["prompt"].split()) + len(r["response"].split()) for r in dataset.train + dataset.heldout)
    if longest > spec.max_len:
        raise ConfigError(f"generated pairs reach {longest} tokens, above max_len {spec.max_len}")
    logger.info(
        "Generated %s task: %d train / %d held-out pairs", spec.kind.value, len(dataset.train), len(dataset.heldout)
    )
    return dataset
