"""
Prompt templates, few-shot examples and infilled candidates.

Template text is a whitespace-separated list of items:

    symbol      a literal vocabulary symbol
    {name}      a slot, replaced per example by that example's input text
    <mask*k>    k consecutive mask tokens forming one mask span

Slots occupy no template position; a slot recorded at index i is inserted
before template token i when the template is rendered.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..core import NoisySequence, TokenSequence, Vocabulary
from ..errors import AssemblyError, ContractError, DataError

SLOT_PATTERN = re.compile(r"^\{(\w+)\}$")
MASK_PATTERN = re.compile(r"^<mask\*(\d+)>$")

Span = Tuple[int, int]


@dataclass(frozen=True)
class RenderedPrompt:
    """A template with slots substituted; `positions[i]` is where template token i landed."""
    tokens: Tuple[int, ...]
    mask_spans: Tuple[Span, ...]
    positions: Tuple[int, ...]


@dataclass(frozen=True)
class PromptTemplate:
    """A partially masked prompt template over a vocabulary."""
    tokens: Tuple[int, ...]
    mask_spans: Tuple[Span, ...]
    slots: Tuple[Tuple[int, str], ...]
    vocab: Vocabulary = field(compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        object.__setattr__(self, "mask_spans", tuple(sorted((int(s), int(e)) for s, e in self.mask_spans)))
        object.__setattr__(self, "slots", tuple(sorted((int(i), str(n)) for i, n in self.slots)))
        length = len(self.tokens)
        covered = set()
        for start, end in self.mask_spans:
            if not 0 <= start < end <= length:
                raise ContractError(f"mask span [{start}, {end}) outside template of length {length}")
            if covered.intersection(range(start, end)):
                raise ContractError("mask spans must be pairwise disjoint")
            covered.update(range(start, end))
        mask_id = self.vocab.mask_id
        for i, token in enumerate(self.tokens):
            if (token == mask_id) != (i in covered):
                raise ContractError(f"template position {i}: mask token and mask spans disagree")
        for index, name in self.slots:
            if not 0 <= index <= length:
                raise ContractError(f"slot {{{name}}} at index {index} outside the template")
            if any(start < index < end for start, end in self.mask_spans):
                raise ContractError(f"slot {{{name}}} splits a mask span")

    @classmethod
    def parse(cls, text: str, vocab: Vocabulary) -> "PromptTemplate":
        """
        Parse template text.

        Args:
            text: Template in the slot / mask-marker notation
            vocab: Vocabulary for literal symbols

        Returns:
            PromptTemplate
        """
        tokens: List[int] = []
        spans: List[Span] = []
        slots: List[Tuple[int, str]] = []
        for item in text.split():
            slot = SLOT_PATTERN.match(item)
            mask = MASK_PATTERN.match(item)
            if slot:
                slots.append((len(tokens), slot.group(1)))
            elif mask:
                k = int(mask.group(1))
                if k < 1:
                    raise ContractError(f"mask marker {item!r} must cover at least one token")
                spans.append((len(tokens), len(tokens) + k))
                tokens.extend([vocab.mask_id] * k)
            else:
                tokens.extend(vocab.encode(item))
        return cls(tuple(tokens), tuple(spans), tuple(slots), vocab)

    @classmethod
    def from_file(cls, path: str | Path, vocab: Vocabulary) -> "PromptTemplate":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise DataError(f"Failed to read template {path}: {e}")
        try:
            return cls.parse(text, vocab)
        except ContractError as e:
            raise DataError(f"Malformed template {path}: {e}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def slot_names(self) -> List[str]:
        return [name for _, name in self.slots]

    @property
    def num_masked(self) -> int:
        return sum(end - start for start, end in self.mask_spans)

    def to_text(self) -> str:
        """Inverse of parse: literal symbols, slot markers and mask markers."""
        items: List[str] = []
        span_starts = dict(self.mask_spans)
        slots_at: Dict[int, List[str]] = {}
        for index, name in self.slots:
            slots_at.setdefault(index, []).append(name)
        i = 0
        while i <= len(self.tokens):
            items.extend("{" + name + "}" for name in slots_at.get(i, []))
            if i == len(self.tokens):
                break
            if i in span_starts:
                items.append(f"<mask*{span_starts[i] - i}>")
                i = span_starts[i]
            else:
                items.append(self.vocab.symbols[self.tokens[i]])
                i += 1
        return " ".join(items)

    def render(self, values: Mapping[str, str]) -> RenderedPrompt:
        """
        Substitute slot values.

        Raises:
            AssemblyError: a slot has no value, or a value is not tokenizable
        """
        slot_tokens: Dict[int, List[int]] = {}
        for index, name in self.slots:
            if name not in values:
                raise AssemblyError(f"no value for slot {{{name}}}")
            try:
                encoded = self.vocab.encode(str(values[name]))
            except ContractError as e:
                raise AssemblyError(f"slot {{{name}}}: {e}")
            if self.vocab.mask_id in encoded:
                raise AssemblyError(f"slot {{{name}}} value contains the mask token")
            slot_tokens.setdefault(index, []).extend(encoded)

        tokens: List[int] = []
        positions: List[int] = []
        for i, token in enumerate(self.tokens):
            tokens.extend(slot_tokens.get(i, []))
            positions.append(len(tokens))
            tokens.append(token)
        tokens.extend(slot_tokens.get(len(self.tokens), []))
        spans = tuple((positions[s], positions[e - 1] + 1) for s, e in self.mask_spans)
        return RenderedPrompt(tuple(tokens), spans, tuple(positions))

    def fill(self, tokens: Sequence[int]) -> "PromptTemplate":
        """A clean template with the same slots and the given tokens."""
        if len(tokens) != len(self.tokens):
            raise ContractError("filled tokens must have the template's length")
        return PromptTemplate(tuple(tokens), (), self.slots, self.vocab)

    def with_masked_prefix(self, k: int) -> "PromptTemplate":
        """Prepend a span of k mask tokens."""
        if k < 1:
            raise ContractError("prefix length must be at least 1")
        spans = ((0, k),) + tuple((s + k, e + k) for s, e in self.mask_spans)
        slots = tuple((i + k, name) for i, name in self.slots)
        return PromptTemplate((self.vocab.mask_id,) * k + self.tokens, spans, slots, self.vocab)

    def with_window_mask(self, offset: int, size: int) -> "PromptTemplate":
        """
        Mask tokens [offset, offset + size) of a clean template.

        Slots inside the window split it into several spans.
        """
        if self.mask_spans:
            raise ContractError("window masking needs a template without mask spans")
        end = min(len(self.tokens), offset + size)
        if not 0 <= offset < end:
            raise ContractError(f"window [{offset}, {offset + size}) outside template of length {len(self)}")
        cuts = sorted({offset, end} | {i for i, _ in self.slots if offset < i < end})
        spans = tuple(zip(cuts, cuts[1:]))
        tokens = tuple(self.vocab.mask_id if offset <= i < end else t for i, t in enumerate(self.tokens))
        return PromptTemplate(tokens, spans, self.slots, self.vocab)


@dataclass(frozen=True)
class FewShotExample:
    """Slot values (task inputs) and the reference response."""
    slots: Tuple[Tuple[str, str], ...]
    response: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(sorted((str(k), str(v)) for k, v in self.slots)))
        object.__setattr__(self, "response", tuple(int(t) for t in self.response))
        if not self.response:
            raise ContractError("few-shot examples need a nonempty reference response")

    @classmethod
    def create(cls, values: Mapping[str, str], response: Sequence[int]) -> "FewShotExample":
        return cls(tuple(values.items()), tuple(response))

    @classmethod
    def from_record(cls, record: Mapping, vocab: Vocabulary) -> "FewShotExample":
        """Build from a pair record carrying a "slots" mapping and a "response" string."""
        slots = record.get("slots")
        if not isinstance(slots, Mapping):
            raise DataError(f"record has no slot values: {dict(record)}")
        return cls.create(slots, vocab.encode(str(record["response"])))

    @property
    def values(self) -> Dict[str, str]:
        return dict(self.slots)


@dataclass(frozen=True)
class InfillCandidate:
    """
    An infilled prompt.

    `tokens` has the template's length and contains no mask token. `index` is
    the candidate's position in proposal order and breaks score ties.
    """
    tokens: Tuple[int, ...]
    provenance: Tuple[int, int]
    index: int
    score: Optional[float] = None
    per_example_scores: Tuple[float, ...] = ()

    @property
    def is_scored(self) -> bool:
        return self.score is not None

    def with_scores(self, scores: Sequence[float]) -> "InfillCandidate":
        if not scores:
            raise ContractError("cannot score a candidate on zero examples")
        scores = tuple(float(s) for s in scores)
        return InfillCandidate(self.tokens, self.provenance, self.index, sum(scores) / len(scores), scores)

    def as_template(self, base: PromptTemplate) -> PromptTemplate:
        return base.fill(self.tokens)


def assemble_infill_context(template: PromptTemplate, example: FewShotExample) -> NoisySequence:
    """
    Filled template followed by the example's clean reference response.

    The returned sequence's prompt_len is the rendered template length, so the
    response region is exactly the appended reference.

    Raises:
        AssemblyError: a slot value is missing or the response holds a mask
    """
    rendered = template.render(example.values)
    mask_id = template.vocab.mask_id
    if mask_id in example.response:
        raise AssemblyError("reference responses must be clean")
    if any(not 0 <= t < template.vocab.size for t in example.response):
        raise AssemblyError("reference response uses ids outside the vocabulary")
    return NoisySequence.from_tokens(rendered.tokens + example.response, mask_id, len(rendered.tokens))


def extract_template_tokens(template: PromptTemplate, example: FewShotExample, completed: TokenSequence) -> Tuple[int, ...]:
    """Read the infilled values back into template positions, dropping slot values and response."""
    rendered = template.render(example.values)
    return tuple(completed.tokens[p] for p in rendered.positions)
