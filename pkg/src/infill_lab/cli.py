"""
Command Line Interface for the infilling laboratory.

Every command resolves a RunConfig (flags > --set > --config file > defaults), checks
that its required inputs are set, writes resolved_config.yaml to its output directory
and then does its work.
Machine-readable results go to JSON-lines files under the output directory;
tables are printed for people.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from .config import ExperimentManifest, RunConfig, check_inputs, load_run_config, write_resolved_config
from .core import NoisySequence, PairDataset, TokenSequence, Vocabulary, derive_seed
from .errors import CheckpointError, ConfigError, LabError
from .evaluation import (
    TaskKind,
    aggregate_reports,
    corpus_ppl,
    metric_report,
    synth_task_generate,
)
from .model import Checkpoint, init_params, load_checkpoint, read_header
from .prompting import (
    DiffusionResponseGenerator,
    FewShotExample,
    PromptPipeline,
    PromptTemplate,
    evaluate_recovery,
    response_text,
    write_candidate_report,
    write_selected,
)
from .sampling import generate as generate_sequence
from .sampling import infill_with_trace
from .training import run_pipeline

logger = logging.getLogger(__name__)

console = Console()

MANIFEST = "manifest.yaml"
SELECTED_PROMPT = "selected_prompt.txt"


def setup_logging(verbose: bool = False) -> None:
    """Route the package's log records through a rich handler."""
    root = logging.getLogger("infill_lab")
    root.handlers.clear()
    root.addHandler(RichHandler(console=console, show_path=False, rich_tracebacks=False))
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


COMMON_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML run configuration"),
    click.option("--set", "sets", multiple=True, metavar="SECTION.KEY=VALUE", help="Override one config value"),
    click.option("--seed", type=int, help="Root seed"),
    click.option("--output-dir", "-o", type=click.Path(file_okay=False), help="Directory for all outputs"),
    click.option("--verbose", "-v", is_flag=True, help="Debug logging"),
]


def with_options(options):
    """Apply a list of click options in declaration order."""

    def decorator(func):
        for option in reversed(options):
            func = option(func)
        return func

    return decorator


common_options = with_options(COMMON_OPTIONS)


def _resolve(
    command: str,
    config_path: Optional[str],
    sets: Sequence[str],
    seed: Optional[int],
    output_dir: Optional[str],
    verbose: bool,
    flags: Dict[str, Any],
) -> RunConfig:
    setup_logging(verbose)
    flags = {"seed": seed, "output_dir": output_dir, **flags}
    cfg = load_run_config(command, config_path, sets, flags)
    check_inputs(cfg)
    write_resolved_config(cfg)
    return cfg


def _load_vocab(cfg: RunConfig) -> Vocabulary:
    vocab = Vocabulary.from_file(cfg.data.vocab)
    logger.info("Loaded vocabulary of %d symbols", vocab.size)
    return vocab


def _load_model(path: Path, vocab: Vocabulary) -> Checkpoint:
    checkpoint = load_checkpoint(path)
    if checkpoint.vocab_hash != vocab.content_hash():
        raise CheckpointError(f"{path} was trained with a different vocabulary")
    logger.info("Loaded checkpoint %s (stage %s)", path, checkpoint.stage)
    return checkpoint


def _checkpoint_paths(cfg: RunConfig) -> List[Tuple[str, Path]]:
    """Checkpoints named on the command line, then those listed in the manifest."""
    paths = [(Path(p).stem, Path(p)) for p in cfg.data.checkpoints]
    if cfg.data.manifest is not None:
        manifest = ExperimentManifest.load(cfg.data.manifest)
        paths += sorted(manifest.checkpoints.items())
    if not paths:
        raise ConfigError("no checkpoint given (pass --checkpoint or --manifest)")
    return paths


def _records(cfg: RunConfig, path: Path, vocab: Vocabulary) -> List[Dict[str, Any]]:
    records = PairDataset(path, vocab).records
    if cfg.data.task is not None:
        records = [r for r in records if r.get("task") == cfg.data.task]
        if not records:
            raise ConfigError(f"no records of task {cfg.data.task!r} in {path}")
    return records


def _examples(cfg: RunConfig, vocab: Vocabulary) -> List[FewShotExample]:
    records = _records(cfg, cfg.data.examples or cfg.data.train, vocab)[: cfg.data.num_examples]
    return [FewShotExample.from_record(r, vocab) for r in records]


def _write_jsonl(path: Path, records: Iterable[Dict[str, Any]]) -> None:
    lines = [json.dumps(r, sort_keys=True) for r in records]
    path.write_text("\n".join(lines) + "\n" if lines else "", encoding="utf-8")
    logger.info("Wrote %s", path)


def _parse_slots(options: Sequence[str]) -> Dict[str, str]:
    values = {}
    for option in options:
        name, sep, value = option.partition("=")
        if not sep or not name:
            raise click.BadParameter(f"expected NAME=VALUE, got {option!r}", param_hint="--slot")
        values[name] = value
    return values


@click.group()
@click.version_option(package_name="infill-lab")
def cli():
    """Masked diffusion infilling laboratory."""
    pass


@cli.command()
@common_options
@click.option("--kind", type=click.Choice([k.value for k in TaskKind]), help="Synthetic task")
@click.option("--size", type=int, help="Training pairs")
@click.option("--heldout-size", type=int, help="Held-out pairs")
def synth(config_path, sets, seed, output_dir, verbose, kind, size, heldout_size):
    """Generate a synthetic task dataset."""
    cfg = _resolve("synth", config_path, sets, seed, output_dir, verbose, {
        "synth.kind": kind, "synth.size": size, "synth.heldout_size": heldout_size,
    })
    dataset = synth_task_generate(cfg.synth)
    paths = dataset.save(cfg.output_dir)

    manifest = ExperimentManifest(
        datasets={k: v for k, v in paths.items() if k in ("vocab", "train", "heldout")},
        templates={k: v for k, v in paths.items() if k == "template" or k.startswith("reference-")},
    )
    manifest.save(cfg.output_dir / MANIFEST)

    table = Table(title=f"Synthetic task: {cfg.synth.kind.value}")
    table.add_column("Artifact", style="cyan")
    table.add_column("Path", style="white")
    for name, path in paths.items():
        table.add_row(name, str(path))
    console.print(table)


@cli.command()
@common_options
@click.option("--vocab", type=click.Path(dir_okay=False), help="Vocabulary file")
@click.option("--data", type=click.Path(dir_okay=False), help="Training pairs (JSON-lines)")
@click.option("--stages", help="Comma separated stage kinds, e.g. FS,RO")
@click.option("--epochs", type=int, help="Epochs per stage (default depends on the stage kind)")
@click.option("--save-initial/--no-save-initial", default=None, help="Also checkpoint the untrained model")
def train(config_path, sets, seed, output_dir, verbose, vocab, data, stages, epochs, save_initial):
    """Fine-tune the denoiser stage by stage."""
    cfg = _resolve("train", config_path, sets, seed, output_dir, verbose, {
        "data.vocab": vocab,
        "data.train": data,
        "train.stages": [s.strip() for s in stages.split(",") if s.strip()] if stages else None,
        "train.optimizer.epochs": epochs,
        "train.save_initial": save_initial,
    })
    vocabulary = _load_vocab(cfg)
    train_path = cfg.data.train
    dataset = PairDataset(train_path, vocabulary)

    model = init_params(cfg.model.build(vocabulary), cfg.derived_seed("init"))
    result = run_pipeline(
        model,
        cfg.train.stage_specs(),
        dataset.sequences,
        cfg.seed,
        cfg.output_dir,
        vocabulary.content_hash(),
        save_initial=cfg.train.save_initial,
    )

    manifest = ExperimentManifest(
        checkpoints=result.checkpoints,
        datasets={"vocab": cfg.data.vocab, "train": train_path},
        reports={f"train_log-{tag}": cfg.output_dir / f"train_log-{tag}.tsv" for tag in result.logs},
    )
    manifest.save(cfg.output_dir / MANIFEST)

    table = Table(title="Training stages")
    table.add_column("Stage", style="cyan")
    table.add_column("Steps", justify="right")
    table.add_column("Final loss", justify="right", style="green")
    table.add_column("Parameter hash", style="dim")
    for tag, param_hash in result.param_hashes.items():
        log = result.logs.get(tag)
        steps = str(len(log.records)) if log else "0"
        loss = f"{log.losses[-1]:.4f}" if log and log.records else "-"
        table.add_row(tag, steps, loss, param_hash)
    console.print(table)


def _sampler_flags(steps, gen_length, temperature, strategy) -> Dict[str, Any]:
    return {
        "sampler.steps": steps,
        "sampler.gen_length": gen_length,
        "sampler.temperature": temperature,
        "sampler.strategy": strategy,
    }


sampler_options = with_options([
    click.option("--steps", type=int, help="Denoising steps"),
    click.option("--gen-length", type=int, help="Tokens to generate"),
    click.option("--temperature", type=float, help="Sampling temperature (0 = greedy)"),
    click.option("--strategy", help="Unmask strategy: confidence or random"),
])


@cli.command()
@common_options
@sampler_options
@click.option("--checkpoint", type=click.Path(dir_okay=False), help="Checkpoint to sample from")
@click.option("--vocab", type=click.Path(dir_okay=False), help="Vocabulary file")
@click.option("--prompt", "prompts", multiple=True, help="Prompt text (repeatable)")
@click.option("--data", type=click.Path(dir_okay=False), help="Take prompts from a pairs file")
@click.option("--trace", is_flag=True, help="Write the unmasking order of every generation")
def generate(config_path, sets, seed, output_dir, verbose, steps, gen_length, temperature, strategy,
             checkpoint, vocab, prompts, data, trace):
    """Generate responses after prompts."""
    cfg = _resolve("generate", config_path, sets, seed, output_dir, verbose, {
        **_sampler_flags(steps, gen_length, temperature, strategy),
        "data.vocab": vocab,
        "data.checkpoints": [checkpoint] if checkpoint else None,
        "data.prompts": list(prompts) or None,
        "data.heldout": data,
    })
    vocabulary = _load_vocab(cfg)
    texts = list(cfg.data.prompts)
    if cfg.data.heldout is not None:
        texts += [r["prompt"] for r in _records(cfg, cfg.data.heldout, vocabulary)]
    name, path = _checkpoint_paths(cfg)[0]
    model = _load_model(path, vocabulary).model

    records = []
    for i, text in enumerate(texts):
        tokens = vocabulary.encode(text)
        sampler = cfg.sampler.model_copy(update={"seed": derive_seed(cfg.sampler.seed, "generate", i)})
        result = generate_sequence(model, TokenSequence(tuple(tokens), len(tokens)), sampler)
        if trace:
            result.write_trace(cfg.output_dir / f"trace-{i}.jsonl")
        response = result.sequence.response
        records.append({
            "index": i,
            "prompt": text,
            "response": vocabulary.decode(response),
            "answer": response_text(vocabulary, response),
            "denoiser_calls": result.denoiser_calls,
        })
    _write_jsonl(cfg.output_dir / "generations.jsonl", records)

    table = Table(title=f"Generations ({name})")
    table.add_column("#", justify="right", style="dim")
    table.add_column("Prompt", style="cyan")
    table.add_column("Answer", style="green")
    for record in records:
        table.add_row(str(record["index"]), record["prompt"], record["answer"])
    console.print(table)


@cli.command()
@common_options
@sampler_options
@click.option("--checkpoint", type=click.Path(dir_okay=False), help="Checkpoint to sample from")
@click.option("--vocab", type=click.Path(dir_okay=False), help="Vocabulary file")
@click.option("--template", type=click.Path(dir_okay=False), help="Template with <mask*k> spans")
@click.option("--slot", "slots", multiple=True, metavar="NAME=VALUE", help="Slot value (repeatable)")
@click.option("--response", help="Clean response appended after the template as context")
def infill(config_path, sets, seed, output_dir, verbose, steps, gen_length, temperature, strategy,
           checkpoint, vocab, template, slots, response):
    """Fill the masked spans of a template."""
    cfg = _resolve("infill", config_path, sets, seed, output_dir, verbose, {
        **_sampler_flags(steps, gen_length, temperature, strategy),
        "data.vocab": vocab,
        "data.checkpoints": [checkpoint] if checkpoint else None,
        "data.template": template,
    })
    values = _parse_slots(slots)
    vocabulary = _load_vocab(cfg)
    prompt = PromptTemplate.from_file(cfg.data.template, vocabulary)
    rendered = prompt.render(values)
    suffix = tuple(vocabulary.encode(response)) if response else ()
    context = NoisySequence.from_tokens(rendered.tokens + suffix, vocabulary.mask_id, len(rendered.tokens))
    _, path = _checkpoint_paths(cfg)[0]
    model = _load_model(path, vocabulary).model

    result = infill_with_trace(model, context, cfg.sampler)
    result.write_trace(cfg.output_dir / "trace.jsonl")
    completed = result.sequence.tokens
    filled = prompt.fill([completed[p] for p in rendered.positions])
    record = {
        "template": prompt.to_text(),
        "filled": filled.to_text(),
        "sequence": vocabulary.decode(completed),
        "denoiser_calls": result.denoiser_calls,
    }
    _write_jsonl(cfg.output_dir / "infilled.jsonl", [record])
    console.print(Panel(record["filled"], title="Infilled template", border_style="green"))


def _candidate_table(title: str, candidates, template: PromptTemplate, best_index: int) -> Table:
    table = Table(title=title)
    table.add_column("#", justify="right", style="dim")
    table.add_column("Prompt", style="cyan")
    table.add_column("Score", justify="right", style="green")
    for c in candidates:
        marker = " *" if c.index == best_index else ""
        table.add_row(f"{c.index}{marker}", c.as_template(template).to_text(), f"{c.score:.3f}")
    return table


def _save_run(cfg: RunConfig, run, template: PromptTemplate, report_name: str) -> None:
    write_candidate_report(cfg.output_dir / report_name, run.candidates, template)
    write_selected(cfg.output_dir / "selected.jsonl", run.best, template)
    selected = run.best.as_template(template).to_text()
    (cfg.output_dir / SELECTED_PROMPT).write_text(selected + "\n", encoding="utf-8")


pipeline_options = with_options([
    click.option("--checkpoint", type=click.Path(dir_okay=False), help="Frozen denoiser"),
    click.option("--vocab", type=click.Path(dir_okay=False), help="Vocabulary file"),
    click.option("--examples", type=click.Path(dir_okay=False), help="Few-shot pairs with slot values"),
    click.option("--task", help="Only use records of this task"),
    click.option("--num-examples", type=int, help="Few-shot examples to use"),
])


@cli.command()
@common_options
@pipeline_options
@click.option("--template", type=click.Path(dir_okay=False), help="Template with <mask*k> spans")
@click.option("--num-candidates", "-N", type=int, help="Candidate prompts to infill")
@click.option("--scorer", help="Validation scorer: exact_match or numeric")
def pipeline(config_path, sets, seed, output_dir, verbose, checkpoint, vocab, examples, task, num_examples,
             template, num_candidates, scorer):
    """Infill candidate prompts, validate them and keep the best."""
    cfg = _resolve("pipeline", config_path, sets, seed, output_dir, verbose, {
        "data.vocab": vocab,
        "data.checkpoints": [checkpoint] if checkpoint else None,
        "data.examples": examples,
        "data.task": task,
        "data.num_examples": num_examples,
        "data.template": template,
        "pipeline.num_candidates": num_candidates,
        "pipeline.scorer": scorer,
    })
    vocabulary = _load_vocab(cfg)
    prompt = PromptTemplate.from_file(cfg.data.template, vocabulary)
    few_shot = _examples(cfg, vocabulary)
    _, path = _checkpoint_paths(cfg)[0]
    model = _load_model(path, vocabulary).model

    runner = PromptPipeline(model, prompt, few_shot, cfg.pipeline)
    run = runner.run()
    _save_run(cfg, run, prompt, "candidates.jsonl")
    console.print(_candidate_table("Infilled candidates", run.candidates, prompt, run.best.index))
    console.print(f"[dim]{runner.infill_calls} infill calls[/dim]")


@cli.command("sw-infill")
@common_options
@pipeline_options
@click.option("--prompt-file", type=click.Path(dir_okay=False), help="Clean prompt to refine")
@click.option("--window", type=int, help="Window length")
@click.option("--stride", type=int, help="Offset between windows")
@click.option("--mask-size", type=int, help="Masked tokens per window")
def sw_infill(config_path, sets, seed, output_dir, verbose, checkpoint, vocab, examples, task, num_examples,
              prompt_file, window, stride, mask_size):
    """Refine a prompt by re-infilling sliding windows."""
    cfg = _resolve("sw-infill", config_path, sets, seed, output_dir, verbose, {
        "data.vocab": vocab,
        "data.checkpoints": [checkpoint] if checkpoint else None,
        "data.examples": examples,
        "data.task": task,
        "data.num_examples": num_examples,
        "data.prompt_file": prompt_file,
        "pipeline.window": window,
        "pipeline.stride": stride,
        "pipeline.mask_size": mask_size,
    })
    vocabulary = _load_vocab(cfg)
    prompt = PromptTemplate.from_file(cfg.data.prompt_file, vocabulary)
    few_shot = _examples(cfg, vocabulary)
    _, path = _checkpoint_paths(cfg)[0]
    model = _load_model(path, vocabulary).model

    runner = PromptPipeline(model, prompt, few_shot, cfg.pipeline)
    run = runner.sliding_window()
    _save_run(cfg, run, prompt, "sw_candidates.jsonl")
    console.print(_candidate_table("Sliding-window candidates (0 = baseline)", run.candidates, prompt, run.best.index))


checkpoint_options = with_options([
    click.option("--checkpoint", "checkpoints", multiple=True, type=click.Path(dir_okay=False),
                  help="Checkpoint to evaluate (repeatable)"),
    click.option("--manifest", type=click.Path(dir_okay=False), help="Evaluate every checkpoint of a manifest"),
    click.option("--vocab", type=click.Path(dir_okay=False), help="Vocabulary file"),
    click.option("--data", type=click.Path(dir_okay=False), help="Held-out pairs (JSON-lines)"),
    click.option("--task", help="Only use records of this task"),
])


def _checkpoint_flags(checkpoints, manifest, vocab, data, task) -> Dict[str, Any]:
    return {
        "data.checkpoints": list(checkpoints) or None,
        "data.manifest": manifest,
        "data.vocab": vocab,
        "data.heldout": data,
        "data.task": task,
    }


@cli.command()
@common_options
@checkpoint_options
@click.option("--region", type=click.Choice(["full_sequence", "response_only", "prompt"]), help="Scored region")
@click.option("--mc-samples", "-K", type=int, help="Monte-Carlo draws")
def ppl(config_path, sets, seed, output_dir, verbose, checkpoints, manifest, vocab, data, task, region, mc_samples):
    """Estimate diffusion perplexity of held-out pairs."""
    cfg = _resolve("ppl", config_path, sets, seed, output_dir, verbose, {
        **_checkpoint_flags(checkpoints, manifest, vocab, data, task),
        "ppl.region": region,
        "ppl.mc_samples": mc_samples,
    })
    vocabulary = _load_vocab(cfg)
    records = _records(cfg, cfg.data.heldout, vocabulary)
    sequences = [TokenSequence.from_pair(vocabulary, r["prompt"], r["response"]) for r in records]

    rows = []
    for name, path in _checkpoint_paths(cfg):
        checkpoint = _load_model(path, vocabulary)
        estimate = corpus_ppl(checkpoint.model, sequences, cfg.ppl)
        rows.append({
            "checkpoint": name,
            "stage": checkpoint.stage,
            "param_hash": checkpoint.param_hash,
            "region": cfg.ppl.region,
            **estimate.to_record(),
        })
    _write_jsonl(cfg.output_dir / "ppl.jsonl", rows)

    table = Table(title=f"Diffusion perplexity ({cfg.ppl.region}, K={cfg.ppl.mc_samples})")
    table.add_column("Checkpoint", style="cyan")
    table.add_column("Stage")
    table.add_column("PPL", justify="right", style="green")
    table.add_column("NELBO/token", justify="right")
    table.add_column("Std. error", justify="right", style="dim")
    for row in rows:
        table.add_row(row["checkpoint"], row["stage"], f"{row['ppl']:.4f}",
                      f"{row['nelbo_per_token']:.4f}", f"{row['stderr']:.4f}")
    console.print(table)


def _aggregate_record(reports) -> Dict[str, Any]:
    """Flatten aggregate_reports into mean and <field>_std columns; undefined values become null."""
    record: Dict[str, Any] = {"seeds": len(reports)}
    for field, (mean, std) in aggregate_reports(reports).items():
        record[field] = None if math.isnan(mean) else mean
        record[f"{field}_std"] = None if math.isnan(std) else std
    return record


@cli.command("eval")
@common_options
@checkpoint_options
@click.option("--prompt-file", type=click.Path(dir_okay=False), help="Answer with this prompt instead of each record's own")
@click.option("--template", type=click.Path(dir_okay=False), help="Masked template for the recovery suite")
@click.option("--reference", type=click.Path(dir_okay=False), help="Reference template for the recovery suite")
@click.option("--num-examples", type=int, help="Held-out pairs used by the recovery suite")
@click.option("--seeds", type=int, help="Repeat the answer suite under this many seeds and report mean and std")
def evaluate(config_path, sets, seed, output_dir, verbose, checkpoints, manifest, vocab, data, task,
             prompt_file, template, reference, num_examples, seeds):
    """Exact match (and numeric correlations) of generated answers; template recovery."""
    cfg = _resolve("eval", config_path, sets, seed, output_dir, verbose, {
        **_checkpoint_flags(checkpoints, manifest, vocab, data, task),
        "data.prompt_file": prompt_file,
        "data.template": template,
        "data.reference": reference,
        "data.num_examples": num_examples,
        "evaluation.seeds": seeds,
    })
    vocabulary = _load_vocab(cfg)
    records = _records(cfg, cfg.data.heldout, vocabulary)

    shared = PromptTemplate.from_file(cfg.data.prompt_file, vocabulary) if cfg.data.prompt_file else None
    prompts = [
        tuple(shared.render(r.get("slots") or {}).tokens) if shared else tuple(vocabulary.encode(r["prompt"]))
        for r in records
    ]
    references = [vocabulary.encode(r["response"]) for r in records]
    numeric = all(r.get("task") == TaskKind.ARITHMETIC.value for r in records)
    prompt_name = str(cfg.data.prompt_file) if shared else "gold"

    rows = []
    for name, path in _checkpoint_paths(cfg):
        checkpoint = _load_model(path, vocabulary)
        generator = DiffusionResponseGenerator(checkpoint.model, cfg.sampler)
        answers = [response_text(vocabulary, r) for r in references]
        reports = []
        for replicate in range(cfg.evaluation.seeds):
            root = cfg.sampler.seed if replicate == 0 else derive_seed(cfg.sampler.seed, "replicate", replicate)
            predictions = []
            for i, (prompt, reference_tokens) in enumerate(zip(prompts, references)):
                seed_i = derive_seed(root, "eval", i)
                response = generator.generate(TokenSequence(prompt, len(prompt)), len(reference_tokens), seed_i)
                predictions.append(response_text(vocabulary, response))
            report = metric_report(predictions, answers, numeric=numeric)
            reports.append(report)
            rows.append({"checkpoint": name, "stage": checkpoint.stage, "suite": "answer",
                         "prompt": prompt_name, "replicate": replicate, **report.to_record()})
        if len(reports) > 1:
            rows.append({"checkpoint": name, "stage": checkpoint.stage, "suite": "answer-aggregate",
                         "prompt": prompt_name, **_aggregate_record(reports)})

        if cfg.data.template is not None:
            masked = PromptTemplate.from_file(cfg.data.template, vocabulary)
            target = PromptTemplate.from_file(cfg.data.reference, vocabulary)
            examples = [FewShotExample.from_record(r, vocabulary) for r in records[: cfg.data.num_examples]]
            recovery = evaluate_recovery(checkpoint.model, masked, target, examples, cfg.sampler)
            rows.append({"checkpoint": name, "stage": checkpoint.stage, "suite": "recovery",
                         "prompt": str(cfg.data.template), **recovery.to_record()})
    _write_jsonl(cfg.output_dir / "eval.jsonl", rows)

    table = Table(title="Evaluation")
    table.add_column("Checkpoint", style="cyan")
    table.add_column("Suite")
    table.add_column("Metrics", style="green")
    for row in rows:
        if row["suite"] == "answer":
            metrics = f"EM {row['exact_match']:.3f}"
            if row["spearman"] is not None:
                metrics += f"  r {row['pearson']:.3f}  rho {row['spearman']:.3f}  tau {row['kendall']:.3f}"
        elif row["suite"] == "answer-aggregate":
            metrics = f"EM {row['exact_match']:.3f} ± {row['exact_match_std']:.3f} over {row['seeds']} seeds"
        else:
            metrics = f"span accuracy {row['accuracy']:.3f}  EOS/PAD fill {row['fill_fraction']:.3f}"
        table.add_row(row["checkpoint"], row["suite"], metrics)
    console.print(table)


@cli.command()
@common_options
@click.option("--checkpoint", "checkpoints", multiple=True, type=click.Path(dir_okay=False),
              help="Checkpoint to describe (repeatable)")
def inspect(config_path, sets, seed, output_dir, verbose, checkpoints):
    """Show a checkpoint's configuration, stage and parameter hash."""
    cfg = _resolve("inspect", config_path, sets, seed, output_dir, verbose, {
        "data.checkpoints": list(checkpoints) or None,
    })
    for name, path in _checkpoint_paths(cfg):
        header, _ = read_header(path)
        lines = [
            f"[bold]Stage:[/bold] {header['stage']}",
            f"[bold]Parameter hash:[/bold] {header['param_hash']}",
            f"[bold]Vocabulary hash:[/bold] {header['vocab_hash']}",
            f"[bold]Tensors:[/bold] {len(header['params'])}",
        ]
        lines += [f"[dim]{key}:[/dim] {value}" for key, value in sorted(header["config"].items())]
        console.print(Panel("\n".join(lines), title=f"📦 {name}", border_style="blue"))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and map failures onto exit codes."""
    try:
        cli.main(args=list(argv) if argv is not None else None, prog_name="infill-lab", standalone_mode=False)
    except click.exceptions.Abort:
        console.print("[yellow]Aborted[/yellow]")
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except ConfigError as e:
        console.print(f"[red]Configuration error:[/red] {e}")
        return 1
    except LabError as e:
        console.print(f"[red]Error:[/red] {e}")
        return 2
    except OSError as e:
        console.print(f"[red]Error:[/red] cannot access {e.filename}: {e.strerror or e}")
        return 2
    return 0
