"""
Run configuration.

A run is described by one YAML file with sections mirroring the packages:

    seed: 0
    output_dir: runs/demo
    data:     {vocab, train, heldout, examples, template, reference, prompt_file, prompts,
               checkpoints, manifest, task, num_examples}
    model:    {d_model, n_layers, n_heads, max_len, dtype}
    train:    {stages, mask_sampler, save_initial, optimizer: {peak_lr, ...}}
    sampler:  {steps, gen_length, temperature, strategy, seed}
    pipeline: {num_candidates, infill, validation, scorer, window, stride, mask_size, seed}
    ppl:      {mc_samples, sigma_max, region, stratified, batch_size, seed}
    synth:    {kind, size, heldout_size, ...}
    evaluation: {seeds}

Precedence is flags > --set options > file > defaults. Section seeds that are not given
explicitly are derived from the root seed. Once the inputs a command needs are
known to be present, the fully resolved config is written to
<output_dir>/resolved_config.yaml before anything else happens.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Mapping, Optional, Tuple

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from .core import MaskSampler, Vocabulary, derive_seed
from .errors import ConfigError, DataError, LabError
from .evaluation import PPLConfig, SynthTaskSpec
from .model import DenoiserConfig
from .prompting import PipelineConfig
from .sampling import SamplerConfig
from .training import StageKind, StageSpec, TrainConfig

logger = logging.getLogger(__name__)

COMMANDS = ("train", "generate", "infill", "pipeline", "sw-infill", "ppl", "eval", "synth", "inspect")
SEEDED_SECTIONS = ("sampler", "pipeline", "ppl", "synth")
RESOLVED_CONFIG = "resolved_config.yaml"

# data.* keys a command cannot start without; a tuple means any one of them
REQUIRED_INPUTS: Dict[str, Tuple[Tuple[str, ...], ...]] = {
    "train": (("vocab",), ("train",)),
    "generate": (("vocab",), ("checkpoints", "manifest"), ("prompts", "heldout")),
    "infill": (("vocab",), ("template",), ("checkpoints", "manifest")),
    "pipeline": (("vocab",), ("template",), ("examples", "train"), ("checkpoints", "manifest")),
    "sw-infill": (("vocab",), ("prompt_file",), ("examples", "train"), ("checkpoints", "manifest")),
    "ppl": (("vocab",), ("heldout",), ("checkpoints", "manifest")),
    "eval": (("vocab",), ("heldout",), ("checkpoints", "manifest")),
    "inspect": (("checkpoints",),),
    "synth": (),
}


class ModelSpec(BaseModel):
    """Denoiser architecture; vocabulary-dependent ids come from the vocab file."""
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    max_len: int = 64
    dtype: Literal["float64", "float32"] = "float64"

    def build(self, vocab: Vocabulary) -> DenoiserConfig:
        return DenoiserConfig(
            vocab_size=vocab.size,
            mask_id=vocab.mask_id,
            pad_id=vocab.pad_id,
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            max_len=self.max_len,
            dtype=self.dtype,
        )


class TrainSection(BaseModel):
    stages: List[StageKind] = Field(default_factory=lambda: [StageKind.FULL_SEQUENCE])
    mask_sampler: MaskSampler = MaskSampler.FIXED_COUNT
    save_initial: bool = False
    optimizer: TrainConfig = Field(default_factory=TrainConfig)

    def stage_specs(self) -> List[StageSpec]:
        return [StageSpec(kind=kind, train=self.optimizer, sampler=self.mask_sampler) for kind in self.stages]


class DataSection(BaseModel):
    vocab: Optional[Path] = None
    train: Optional[Path] = None
    heldout: Optional[Path] = None
    examples: Optional[Path] = None
    template: Optional[Path] = None
    reference: Optional[Path] = None
    prompt_file: Optional[Path] = None
    prompts: List[str] = Field(default_factory=list)
    checkpoints: List[Path] = Field(default_factory=list)
    manifest: Optional[Path] = None
    task: Optional[str] = None
    num_examples: int = 8


class EvalSection(BaseModel):
    """Answer-suite repetitions; seeds > 1 adds a mean and std row per checkpoint."""
    seeds: int = 1


class RunConfig(BaseModel):
    """Everything one command needs; see the module docstring for the layout."""
    command: Literal[COMMANDS]
    seed: int = 0
    output_dir: Path = Path("runs/default")
    data: DataSection = Field(default_factory=DataSection)
    model: ModelSpec = Field(default_factory=ModelSpec)
    train: TrainSection = Field(default_factory=TrainSection)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    ppl: PPLConfig = Field(default_factory=PPLConfig)
    synth: SynthTaskSpec = Field(default_factory=SynthTaskSpec)
    evaluation: EvalSection = Field(default_factory=EvalSection)

    @model_validator(mode="after")
    def _check(self) -> "RunConfig":
        if self.data.num_examples < 1:
            raise ValueError("data.num_examples must be at least 1")
        if not self.train.stages:
            raise ValueError("train.stages must name at least one stage")
        if self.ppl.mc_samples < 1:
            raise ValueError("ppl.mc_samples must be at least 1")
        if self.evaluation.seeds < 1:
            raise ValueError("evaluation.seeds must be at least 1")
        return self

    def derived_seed(self, *path: Any) -> int:
        return derive_seed(self.seed, *path)


class ExperimentManifest(BaseModel):
    """Artifacts of an experiment, keyed by name (checkpoints by stage tag)."""
    checkpoints: Dict[str, Path] = Field(default_factory=dict)
    datasets: Dict[str, Path] = Field(default_factory=dict)
    templates: Dict[str, Path] = Field(default_factory=dict)
    reports: Dict[str, Path] = Field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentManifest":
        """Read a manifest; every referenced file must exist."""
        path = Path(path)
        data = _read_yaml(path, DataError)
        try:
            manifest = cls.model_validate(data)
        except ValidationError as e:
            raise DataError(f"Malformed manifest {path}: {e}")
        base = path.parent
        for group in (manifest.checkpoints, manifest.datasets, manifest.templates, manifest.reports):
            for key, ref in group.items():
                resolved = ref if ref.is_absolute() else base / ref
                if not resolved.exists():
                    raise DataError(f"{path}: {key} refers to missing file {resolved}")
                group[key] = resolved
        return manifest

    def save(self, path: str | Path) -> None:
        """Paths are stored relative to the manifest's directory when possible."""
        path = Path(path)

        def rel(p: Path) -> str:
            try:
                return str(Path(p).resolve().relative_to(path.parent.resolve()))
            except ValueError:
                return str(p)

        data = {
            name: {key: rel(p) for key, p in getattr(self, name).items()}
            for name in ("checkpoints", "datasets", "templates", "reports")
        }
        path.write_text(yaml.safe_dump(data, sort_keys=True), encoding="utf-8")


def _read_yaml(path: Path, error: type[LabError]) -> Dict[str, Any]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise error(f"Failed to read {path}: {e}")
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise error(f"{path} is not valid YAML: {e}")
    if not isinstance(data, dict):
        raise error(f"{path} must contain a mapping at top level")
    return data


def _set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"cannot set {key}: {part} is not a section")
        node = child
    node[parts[-1]] = value


def parse_set_option(option: str) -> tuple[str, Any]:
    """Split "section.key=value"; the value is read as YAML (numbers, lists, booleans)."""
    key, sep, raw = option.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"--set expects section.key=value, got {option!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"--set {key}: cannot parse value {raw!r}: {e}")
    return key.strip(), value


def load_run_config(
    command: str,
    config_path: Optional[str | Path] = None,
    sets: Iterable[str] = (),
    flags: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Resolve a RunConfig from defaults, an optional YAML file, --set options and flags.

    Args:
        command: Command being run
        config_path: Optional YAML file
        sets: "section.key=value" overrides
        flags: Dotted keys from dedicated flags; None values are ignored

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: unreadable config file or invalid values
    """
    data: Dict[str, Any] = _read_yaml(Path(config_path), ConfigError) if config_path else {}
    for option in sets:
        _set_dotted(data, *parse_set_option(option))
    for key, value in (flags or {}).items():
        if value is not None:
            _set_dotted(data, key, value)
    data["command"] = command

    root = data.get("seed", 0)
    if not isinstance(root, int):
        raise ConfigError(f"seed must be an integer, got {root!r}")
    for section in SEEDED_SECTIONS:
        node = data.setdefault(section, {})
        if not isinstance(node, dict):
            raise ConfigError(f"section {section} must be a mapping")
        node.setdefault("seed", derive_seed(root, section))

    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}")
    cfg.pipeline.check()
    return cfg


def check_inputs(cfg: RunConfig) -> None:
    """
    Fail before any output exists when the command lacks a required data.* input.

    Raises:
        ConfigError: a required key (or every alternative of one) is unset
    """
    missing = []
    for keys in REQUIRED_INPUTS[cfg.command]:
        if not any(getattr(cfg.data, key) for key in keys):
            missing.append(" or ".join(f"data.{key}" for key in keys))
    if missing:
        raise ConfigError(f"{cfg.command} needs {', '.join(missing)} (set in the config file or via flags)")
    if cfg.command == "eval" and (cfg.data.template is None) != (cfg.data.reference is None):
        raise ConfigError("the recovery suite needs both data.template and data.reference")


def write_resolved_config(cfg: RunConfig) -> Path:
    """Snapshot the resolved config; passing it back via --config replays the run."""
    path = cfg.output_dir / RESOLVED_CONFIG
    data = cfg.model_dump(mode="json")
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(data, sort_keys=True), encoding="utf-8")
    except OSError as e:
        raise DataError(f"Failed to write {path}: {e}")
    logger.debug("Wrote %s", path)
    return path
