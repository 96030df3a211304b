"""
Prompt infilling pipeline.

1. assemble a context per few-shot example: the template with its mask spans,
   followed by the example's reference response;
2. infill the masks to propose candidate prompts;
3. validate each candidate by generating responses for every example;
4. keep the best candidate and reuse it, unchanged, for every test input.

Sliding-window infilling refines an existing prompt by masking and re-infilling
successive windows, keeping the unmodified prompt as a baseline candidate.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field

from ..core import TokenSequence, derive_seed
from ..errors import AssemblyError, ConfigError, ContractError, PipelineError
from ..evaluation.metrics import RecoveryReport, infill_diagnostics
from ..model import Denoiser
from ..sampling import SamplerConfig, infill
from .generators import DiffusionResponseGenerator, ResponseGenerator
from .scorers import SCORERS, create_scorer, response_text
from .template import (
    FewShotExample,
    InfillCandidate,
    PromptTemplate,
    assemble_infill_context,
    extract_template_tokens,
)

logger = logging.getLogger(__name__)

BASELINE_PROVENANCE = (-1, -1)


class PipelineConfig(BaseModel):
    """Candidate count, samplers, scorer and sliding-window geometry."""
    num_candidates: int = 8
    infill: SamplerConfig = Field(default_factory=SamplerConfig)
    validation: SamplerConfig = Field(default_factory=SamplerConfig)
    scorer: str = "exact_match"
    tie_break: Literal["lowest_index"] = "lowest_index"
    window: int = 8
    stride: int = 4
    mask_size: int = 8
    seed: int = 0

    def check(self) -> None:
        """Raise ConfigError unless the settings can run."""
        if self.num_candidates < 1:
            raise ConfigError(f"num_candidates must be at least 1, got {self.num_candidates}")
        if self.scorer not in SCORERS:
            raise ConfigError(f"unknown scorer {self.scorer!r}; choose from {sorted(SCORERS)}")
        check_window(self.window, self.stride, self.mask_size)


@dataclass(frozen=True)
class PipelineRun:
    """Scored candidates in proposal order and the selected one."""
    candidates: Tuple[InfillCandidate, ...]
    best: InfillCandidate


def check_window(window: int, stride: int, mask_size: int) -> None:
    if not window >= mask_size >= 1:
        raise ConfigError(f"need window >= mask_size >= 1, got window={window}, mask_size={mask_size}")
    if stride < 1:
        raise ConfigError(f"stride must be at least 1, got {stride}")


def window_offsets(length: int, window: int, stride: int) -> List[int]:
    """Offsets 0, stride, 2*stride, ... with offset + window <= length; one window at 0 when window > length."""
    if length < 1:
        raise ContractError("cannot slide a window over an empty prompt")
    if window > length:
        return [0]
    return list(range(0, length - window + 1, stride))


def _as_generator(source: Union[Denoiser, ResponseGenerator], cfg: PipelineConfig) -> ResponseGenerator:
    if isinstance(source, ResponseGenerator):
        return source
    return DiffusionResponseGenerator(source, cfg.validation)


def _infill_candidate(
    model: Denoiser,
    template: PromptTemplate,
    example: FewShotExample,
    sampler: SamplerConfig,
    seed: int,
) -> Tuple[int, ...]:
    context = assemble_infill_context(template, example)
    completed = infill(model, context, sampler.model_copy(update={"seed": seed}))
    return extract_template_tokens(template, example, completed)


def propose_candidates(
    model: Denoiser,
    template: PromptTemplate,
    examples: Sequence[FewShotExample],
    cfg: PipelineConfig,
) -> List[InfillCandidate]:
    """
    Infill the template once per candidate, cycling through the examples.

    Candidate i is conditioned on example i mod len(examples) and sampled with
    seed derive_seed(cfg.seed, "propose", i).
    """
    if cfg.num_candidates < 1:
        raise ConfigError(f"num_candidates must be at least 1, got {cfg.num_candidates}")
    if not examples:
        raise ContractError("at least one few-shot example is required")
    candidates = []
    for i in range(cfg.num_candidates):
        j = i % len(examples)
        seed = derive_seed(cfg.seed, "propose", i)
        tokens = _infill_candidate(model, template, examples[j], cfg.infill, seed)
        candidates.append(InfillCandidate(tokens, (j, seed), i))
    logger.info("Proposed %d candidates from %d examples", len(candidates), len(examples))
    return candidates


def validate_candidates(
    generator: Union[Denoiser, ResponseGenerator],
    candidates: Sequence[InfillCandidate],
    template: PromptTemplate,
    examples: Sequence[FewShotExample],
    cfg: PipelineConfig,
) -> List[InfillCandidate]:
    """
    Score every candidate by its mean score over all examples.

    Example j is always generated with seed derive_seed(cfg.seed, "validate", j),
    so a candidate's score does not depend on its neighbours in the list.

    Args:
        generator: Denoiser (wrapped with cfg.validation) or a ResponseGenerator
        candidates: Candidates to score
        template: Template the candidates were infilled from
        examples: Few-shot examples with reference responses
        cfg: Pipeline settings

    Returns:
        Scored candidates, in input order
    """
    if not candidates:
        raise PipelineError("no candidates to validate")
    if not examples:
        raise ContractError("at least one few-shot example is required")
    generator = _as_generator(generator, cfg)
    scorer = create_scorer(cfg.scorer)
    vocab = template.vocab
    references = [response_text(vocab, ex.response) for ex in examples]

    cache: Dict[Tuple[int, ...], List[float]] = {}
    scored = []
    for candidate in candidates:
        if candidate.tokens not in cache:
            prompt = candidate.as_template(template)
            scores = []
            for j, (example, reference) in enumerate(zip(examples, references)):
                rendered = prompt.render(example.values)
                predicted = generator.generate(
                    TokenSequence(rendered.tokens, len(rendered.tokens)),
                    len(example.response),
                    derive_seed(cfg.seed, "validate", j),
                )
                scores.append(scorer.score(response_text(vocab, predicted), reference))
            cache[candidate.tokens] = scores
        scored.append(candidate.with_scores(cache[candidate.tokens]))
    return scored


def select_best(candidates: Sequence[InfillCandidate], cfg: Optional[PipelineConfig] = None) -> InfillCandidate:
    """Highest score wins; ties go to the lowest candidate index."""
    if not candidates:
        raise PipelineError("no candidates to select from")
    if not all(c.is_scored for c in candidates):
        raise ContractError("every candidate must be scored before selection")
    return min(candidates, key=lambda c: (-c.score, c.index))


def sliding_window_infill(
    model: Denoiser,
    prompt: PromptTemplate,
    window: int,
    stride: int,
    mask_size: int,
    examples: Sequence[FewShotExample],
    cfg: PipelineConfig,
    generator: Optional[ResponseGenerator] = None,
) -> PipelineRun:
    """
    Refine a clean prompt window by window.

    Each window masks `mask_size` tokens at its start and is infilled
    conditioned on one example (cycling). The unmodified prompt is candidate 0.

    Args:
        model: Denoiser used for infilling (and validation unless `generator` is given)
        prompt: Clean template; slot markers are allowed
        window: Window length
        stride: Offset between consecutive windows
        mask_size: Masked tokens at the start of each window
        examples: Few-shot examples
        cfg: Pipeline settings
        generator: Optional validation generator

    Returns:
        PipelineRun over the baseline and one candidate per window
    """
    check_window(window, stride, mask_size)
    if not examples:
        raise ContractError("at least one few-shot example is required")
    candidates = [InfillCandidate(prompt.tokens, BASELINE_PROVENANCE, 0)]
    for w, offset in enumerate(window_offsets(len(prompt), window, stride)):
        j = w % len(examples)
        seed = derive_seed(cfg.seed, "window", offset)
        masked = prompt.with_window_mask(offset, mask_size)
        tokens = _infill_candidate(model, masked, examples[j], cfg.infill, seed)
        candidates.append(InfillCandidate(tokens, (j, seed), w + 1))
    logger.info("Sliding window produced %d candidates (baseline included)", len(candidates))

    scored = validate_candidates(generator or model, candidates, prompt, examples, cfg)
    return PipelineRun(tuple(scored), select_best(scored, cfg))


def evaluate_recovery(
    model: Denoiser,
    template: PromptTemplate,
    reference: PromptTemplate,
    examples: Sequence[FewShotExample],
    sampler: SamplerConfig,
) -> RecoveryReport:
    """
    Infill `template` conditioned on each example and compare the masked spans
    with `reference` rendered for the same example.
    """
    if len(template) != len(reference) or template.slots != reference.slots:
        raise ContractError("template and reference must share length and slots")
    vocab = template.vocab
    diagnostics = []
    for j, example in enumerate(examples):
        rendered = template.render(example.values)
        context = assemble_infill_context(template, example)
        completed = infill(model, context, sampler.model_copy(update={"seed": derive_seed(sampler.seed, "recover", j)}))
        candidate = completed.tokens[: len(rendered.tokens)]
        target = reference.render(example.values).tokens
        diagnostics.append(infill_diagnostics(candidate, target, rendered.mask_spans, vocab.eos_id, vocab.pad_id))
    return RecoveryReport.from_pairs(diagnostics)


class PromptPipeline:
    """
    Runs the infilling pipeline against one frozen denoiser and keeps count of
    infill calls, so reuse of the selected prompt can be audited.
    """

    def __init__(
        self,
        model: Denoiser,
        template: PromptTemplate,
        examples: Sequence[FewShotExample],
        config: Optional[PipelineConfig] = None,
        generator: Optional[ResponseGenerator] = None,
    ):
        self.model = model
        self.template = template
        self.examples = list(examples)
        self.config = config or PipelineConfig()
        self.config.check()
        if not self.examples:
            raise ContractError("at least one few-shot example is required")
        self.generator = generator or DiffusionResponseGenerator(model, self.config.validation)
        self.infill_calls = 0

    def propose(self) -> List[InfillCandidate]:
        candidates = propose_candidates(self.model, self.template, self.examples, self.config)
        self.infill_calls += len(candidates)
        return candidates

    def validate(self, candidates: Sequence[InfillCandidate]) -> List[InfillCandidate]:
        return validate_candidates(self.generator, candidates, self.template, self.examples, self.config)

    def run(self) -> PipelineRun:
        """Propose, validate and select."""
        scored = self.validate(self.propose())
        best = select_best(scored, self.config)
        logger.info("Selected candidate %d with score %.3f", best.index, best.score)
        return PipelineRun(tuple(scored), best)

    def sliding_window(self, prompt: Optional[PromptTemplate] = None) -> PipelineRun:
        """Sliding-window refinement of `prompt` (default: the pipeline template, which must be clean)."""
        prompt = prompt or self.template
        cfg = self.config
        run = sliding_window_infill(
            self.model, prompt, cfg.window, cfg.stride, cfg.mask_size, self.examples, cfg, self.generator
        )
        self.infill_calls += len(run.candidates) - 1
        return run

    def apply(
        self, best: InfillCandidate, inputs: Sequence[Mapping[str, str]], length: int
    ) -> List[Tuple[int, ...]]:
        """
        Answer test inputs with the selected prompt; never infills.

        Args:
            best: Selected candidate
            inputs: Slot values per test input
            length: Response length to generate

        Returns:
            Generated response tokens per input
        """
        prompt = best.as_template(self.template)
        responses = []
        for i, values in enumerate(inputs):
            try:
                rendered = prompt.render(values)
            except AssemblyError as e:
                raise AssemblyError(f"test input {i}: {e}")
            responses.append(self.generator.generate(
                TokenSequence(rendered.tokens, len(rendered.tokens)), length, derive_seed(self.config.seed, "apply", i)
            ))
        return responses


def _candidate_record(candidate: InfillCandidate, template: PromptTemplate) -> Dict[str, object]:
    return {
        "index": candidate.index,
        "provenance": list(candidate.provenance),
        "prompt": candidate.as_template(template).to_text(),
        "per_example_scores": list(candidate.per_example_scores),
        "score": candidate.score,
    }


def write_candidate_report(path: str | Path, candidates: Sequence[InfillCandidate], template: PromptTemplate) -> None:
    """One JSON line per scored candidate."""
    lines = [json.dumps(_candidate_record(c, template), sort_keys=True) for c in candidates]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_selected(path: str | Path, best: InfillCandidate, template: PromptTemplate) -> None:
    """Single-record file naming the selected prompt."""
    Path(path).write_text(json.dumps(_candidate_record(best, template), sort_keys=True) + "\n", encoding="utf-8")
