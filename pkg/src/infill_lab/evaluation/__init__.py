"""
Evaluation: diffusion perplexity, task metrics, infill diagnostics and the
synthetic tasks used to reproduce the training-inference gap.
"""

from .metrics import (
    MetricReport,
    RecoveryReport,
    aggregate_reports,
    exact_match,
    infill_diagnostics,
    metric_report,
    normalize_answer,
    parse_number,
    rank_correlations,
)
from .perplexity import PPLConfig, PPLEstimate, corpus_ppl, diffusion_ppl, region_policy
from .synth import (
    RECOVERY_TASKS,
    SynthDataset,
    SynthTaskSpec,
    TaskKind,
    synth_task_generate,
    task_vocabulary,
)

__all__ = [
    "MetricReport",
    "RecoveryReport",
    "aggregate_reports",
    "exact_match",
    "infill_diagnostics",
    "metric_report",
    "normalize_answer",
    "parse_number",
    "rank_correlations",
    "PPLConfig",
    "PPLEstimate",
    "corpus_ppl",
    "diffusion_ppl",
    "region_policy",
    "RECOVERY_TASKS",
    "SynthDataset",
    "SynthTaskSpec",
    "TaskKind",
    "synth_task_generate",
    "task_vocabulary",
]
