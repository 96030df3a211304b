"""
Prompt infilling: templates, candidate proposal, validation, selection and
sliding-window refinement.
"""

from .template import (
    FewShotExample,
    InfillCandidate,
    PromptTemplate,
    RenderedPrompt,
    assemble_infill_context,
    extract_template_tokens,
)
from .scorers import ExactMatchScorer, NumericScorer, Scorer, create_scorer, response_text
from .generators import CallableResponseGenerator, DiffusionResponseGenerator, ResponseGenerator
from .pipeline import (
    PipelineConfig,
    PipelineRun,
    PromptPipeline,
    evaluate_recovery,
    propose_candidates,
    select_best,
    sliding_window_infill,
    validate_candidates,
    window_offsets,
    write_candidate_report,
    write_selected,
)

__all__ = [
    "FewShotExample",
    "InfillCandidate",
    "PromptTemplate",
    "RenderedPrompt",
    "assemble_infill_context",
    "extract_template_tokens",
    "ExactMatchScorer",
    "NumericScorer",
    "Scorer",
    "create_scorer",
    "response_text",
    "CallableResponseGenerator",
    "DiffusionResponseGenerator",
    "ResponseGenerator",
    "PipelineConfig",
    "PipelineRun",
    "PromptPipeline",
    "evaluate_recovery",
    "propose_candidates",
    "select_best",
    "sliding_window_infill",
    "validate_candidates",
    "window_offsets",
    "write_candidate_report",
    "write_selected",
]
