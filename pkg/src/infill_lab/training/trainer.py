"""
Single-stage fine-tuning loop.

AdamW with decoupled weight decay, linear warmup followed by cosine decay to
zero, and global gradient-norm clipping. Data order and mask draws are derived
from the stage seed, so a stage is reproducible bit for bit on one thread.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
import torch
from pydantic import BaseModel, Field, model_validator

from ..core import MaskSampler, TokenSequence, make_rng
from ..errors import ConfigError, ContractError, TrainingDivergedError
from ..model import Denoiser
from .objectives import loss_full_sequence, loss_response_only

logger = logging.getLogger(__name__)


class StageKind(Enum):
    """Masking regime of a fine-tuning stage."""
    RESPONSE_ONLY = "RO"
    FULL_SEQUENCE = "FS"

    @property
    def default_epochs(self) -> int:
        return 8 if self is StageKind.FULL_SEQUENCE else 4


class TrainConfig(BaseModel):
    """Optimizer and schedule settings for one stage."""
    peak_lr: float = 3e-4
    warmup_steps: int = 50
    batch_size: int = 32
    epochs: Optional[int] = None
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    log_every: int = 50

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if self.peak_lr <= 0 or self.eps <= 0 or self.clip_norm <= 0:
            raise ValueError("learning rate, eps and clip norm must be positive")
        if self.warmup_steps < 0 or self.batch_size < 1 or self.weight_decay < 0:
            raise ValueError("warmup_steps >= 0, batch_size >= 1 and weight_decay >= 0 are required")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not all(0 <= b < 1 for b in self.betas):
            raise ValueError("betas must lie in [0, 1)")
        return self


class StageSpec(BaseModel):
    """A fine-tuning stage: masking regime, optimizer config and mask sampler."""
    kind: StageKind
    train: TrainConfig = Field(default_factory=TrainConfig)
    sampler: MaskSampler = MaskSampler.FIXED_COUNT

    @property
    def epochs(self) -> int:
        return self.train.epochs if self.train.epochs is not None else self.kind.default_epochs


@dataclass
class StepRecord:
    step: int
    stage: str
    t: float
    loss: float
    grad_norm: float
    grad_norm_raw: float
    lr: float


@dataclass
class TrainLog:
    """Per-step training records of one stage."""
    records: List[StepRecord] = field(default_factory=list)
    rng_state: Optional[Dict[str, Any]] = None

    def append(self, record: StepRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ContractError("train log steps must increase")
        self.records.append(record)

    def to_frame(self) -> pd.DataFrame:
        columns = ["step", "stage", "t", "loss", "grad_norm", "grad_norm_raw", "lr"]
        return pd.DataFrame([asdict(r) for r in self.records], columns=columns)

    def save(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, sep="\t", index=False, float_format="%.17g")

    @property
    def losses(self) -> List[float]:
        return [r.loss for r in self.records]


def lr_factor(step: int, warmup: int, total: int) -> float:
    """
    Multiplier on the peak learning rate for update `step` (1-based).

    Rises linearly to 1 at `warmup`, then follows a cosine to 0 at `total`.
    """
    if warmup > 0 and step <= warmup:
        return step / warmup
    span = max(1, total - warmup)
    progress = min(1.0, (step - warmup) / span)
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def _grad_norm(params: Sequence[torch.Tensor]) -> float:
    grads = [p.grad.detach().flatten() for p in params if p.grad is not None]
    if not grads:
        return 0.0
    return float(torch.linalg.vector_norm(torch.cat(grads)))


def train_stage(
    model: Denoiser,
    dataset: Sequence[TokenSequence],
    stage: StageSpec,
    seed: int,
) -> Tuple[Denoiser, TrainLog]:
    """
    Fine-tune `model` in place for one stage.

    Args:
        model: Denoiser to update
        dataset: Clean training sequences
        stage: Stage kind, optimizer config and mask sampler
        seed: Stage seed; data order and masks derive from it

    Returns:
        The updated model and the stage's TrainLog

    Raises:
        TrainingDivergedError: a step produced a non-finite loss
    """
    if not dataset:
        raise ContractError("training dataset is empty")
    longest = max(len(s) for s in dataset)
    if longest > model.config.max_len:
        raise ConfigError(f"longest training sequence ({longest}) exceeds max_len {model.config.max_len}")

    cfg = stage.train
    objective = loss_full_sequence if stage.kind is StageKind.FULL_SEQUENCE else loss_response_only
    batches_per_epoch = math.ceil(len(dataset) / cfg.batch_size)
    total_steps = stage.epochs * batches_per_epoch

    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(
        params, lr=cfg.peak_lr, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay
    )
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda i: lr_factor(i + 1, cfg.warmup_steps, total_steps)
    )

    log = TrainLog()
    model.train()
    step = 0
    logger.info(
        "Stage %s: %d examples, %d epochs, %d steps", stage.kind.value, len(dataset), stage.epochs, total_steps
    )
    for epoch in range(stage.epochs):
        order = make_rng(seed, "shuffle", epoch).permutation(len(dataset))
        for b in range(batches_per_epoch):
            step += 1
            batch = [dataset[i] for i in order[b * cfg.batch_size: (b + 1) * cfg.batch_size]]
            rng = make_rng(seed, "mask", epoch, b)
            out = objective(model, batch, rng, stage.sampler)
            loss_value = float(out.loss.detach())
            lr = optimizer.param_groups[0]["lr"]

            if not math.isfinite(loss_value):
                record = StepRecord(step, stage.kind.value, out.mean_t, loss_value, math.nan, math.nan, lr)
                log.records.append(record)
                raise TrainingDivergedError(f"non-finite loss {loss_value} at step {step}", record)

            optimizer.zero_grad(set_to_none=True)
            out.loss.backward()
            raw_norm = float(torch.nn.utils.clip_grad_norm_(params, cfg.clip_norm))
            clipped_norm = _grad_norm(params)
            optimizer.step()
            scheduler.step()

            log.append(StepRecord(step, stage.kind.value, out.mean_t, loss_value, clipped_norm, raw_norm, lr))
            log.rng_state = rng.bit_generator.state
            if step % cfg.log_every == 0 or step == total_steps:
                logger.info(
                    "step %d/%d [%s] loss=%.4f grad_norm=%.3f lr=%.2e",
                    step, total_steps, stage.kind.value, loss_value, clipped_norm, lr,
                )
    model.eval()
    return model, log
