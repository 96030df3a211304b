"""Staged fine-tuning: run RO / FS stages in order and checkpoint after each."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

from ..core import TokenSequence, derive_seed
from ..errors import ConfigError
from ..model import Denoiser, save_checkpoint
from .trainer import StageSpec, TrainLog, train_stage

logger = logging.getLogger(__name__)

INITIAL_TAG = "None"


def stage_tags(stages: Sequence[StageSpec]) -> List[str]:
    """Cumulative tags: [FS, RO] -> ["FS", "FS+RO"]."""
    tags, parts = [], []
    for stage in stages:
        parts.append(stage.kind.value)
        tags.append("+".join(parts))
    return tags


def checkpoint_name(tag: str) -> str:
    return f"stage-{tag}.ckpt"


@dataclass
class PipelineResult:
    """Final model plus the artifacts of every stage, keyed by stage tag."""
    model: Denoiser
    checkpoints: Dict[str, Path] = field(default_factory=dict)
    logs: Dict[str, TrainLog] = field(default_factory=dict)
    param_hashes: Dict[str, str] = field(default_factory=dict)

    @property
    def final_tag(self) -> str:
        return list(self.checkpoints)[-1]


def run_pipeline(
    model: Denoiser,
    stages: Sequence[StageSpec],
    dataset: Sequence[TokenSequence],
    seed: int,
    output_dir: str | Path,
    vocab_hash: str,
    save_initial: bool = False,
) -> PipelineResult:
    """
    Run `stages` in order, each continuing from the previous stage's parameters.

    A checkpoint is written after every stage. A failed write raises
    CheckpointError; checkpoints of earlier stages stay on disk untouched.

    Args:
        model: Initialized denoiser; updated in place
        stages: At least one StageSpec
        dataset: Clean training sequences
        seed: Root seed; stage i trains with derive_seed(seed, "stage", i)
        output_dir: Directory for checkpoints and train logs
        vocab_hash: Vocabulary hash stamped into every checkpoint
        save_initial: Also persist the starting parameters under tag "None"

    Returns:
        PipelineResult with checkpoints keyed by tag
    """
    if not stages:
        raise ConfigError("at least one training stage is required")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    result = PipelineResult(model=model)

    if save_initial:
        path = output_dir / checkpoint_name(INITIAL_TAG)
        result.param_hashes[INITIAL_TAG] = save_checkpoint(path, model, INITIAL_TAG, vocab_hash)
        result.checkpoints[INITIAL_TAG] = path

    for index, (stage, tag) in enumerate(zip(stages, stage_tags(stages))):
        stage_seed = derive_seed(seed, "stage", index)
        model, log = train_stage(model, dataset, stage, stage_seed)
        log.save(output_dir / f"train_log-{tag}.tsv")

        path = output_dir / checkpoint_name(tag)
        param_hash = save_checkpoint(path, model, tag, vocab_hash, rng_state=log.rng_state)
        result.model = model
        result.checkpoints[tag] = path
        result.logs[tag] = log
        result.param_hashes[tag] = param_hash
        logger.info("Stage %s done: final loss %.4f, params %s", tag, log.losses[-1], param_hash)

    return result
