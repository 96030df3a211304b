"""
Supervised fine-tuning: the full-sequence and response-only objectives, the
single-stage trainer, and the staged pipeline producing tagged checkpoints.
"""

from .objectives import (
    ObjectiveOutput,
    loss_full_sequence,
    loss_response_only,
    masked_loss,
)
from .trainer import (
    StageKind,
    StageSpec,
    StepRecord,
    TrainConfig,
    TrainLog,
    lr_factor,
    train_stage,
)
from .pipeline import INITIAL_TAG, PipelineResult, checkpoint_name, run_pipeline, stage_tags

__all__ = [
    "ObjectiveOutput",
    "loss_full_sequence",
    "loss_response_only",
    "masked_loss",
    "StageKind",
    "StageSpec",
    "StepRecord",
    "TrainConfig",
    "TrainLog",
    "lr_factor",
    "train_stage",
    "INITIAL_TAG",
    "PipelineResult",
    "checkpoint_name",
    "run_pipeline",
    "stage_tags",
]
