"""
End-to-end reproduction of the training-inference gap on the template
recovery task: a response-only model cannot recover masked instructions,
a full-sequence model can, and the prompt pipeline built on the latter
selects prompts that generalize.

Slow: trains two small denoisers on 20k pairs. Run with `pytest -m slow`.
"""

import numpy as np
import pytest

from infill_lab.core import TokenSequence, make_rng
from infill_lab.evaluation import (
    PPLConfig,
    SynthTaskSpec,
    TaskKind,
    corpus_ppl,
    exact_match,
    synth_task_generate,
)
from infill_lab.model import DenoiserConfig, init_params
from infill_lab.prompting import (
    FewShotExample,
    InfillCandidate,
    PipelineConfig,
    PromptPipeline,
    PromptTemplate,
    evaluate_recovery,
    response_text,
)
from infill_lab.sampling import SamplerConfig
from infill_lab.training import StageKind, StageSpec, TrainConfig, train_stage

pytestmark = pytest.mark.slow

SEED = 0
TASK = "reverse"


@pytest.fixture(scope="module")
def dataset():
    return synth_task_generate(SynthTaskSpec(kind=TaskKind.TEMPLATE_RECOVERY, size=20000, heldout_size=500, seed=SEED))


@pytest.fixture(scope="module")
def models(dataset):
    """FS and RO denoisers from the same initialization, seed and budget."""
    vocab = dataset.vocab
    config = DenoiserConfig(vocab_size=vocab.size, mask_id=vocab.mask_id, pad_id=vocab.pad_id,
                            d_model=128, n_layers=4, n_heads=4, max_len=40)
    sequences = [TokenSequence.from_pair(vocab, r["prompt"], r["response"]) for r in dataset.train]
    optimizer = TrainConfig(peak_lr=1e-3, warmup_steps=100, batch_size=64, epochs=6)
    trained = {}
    for kind in (StageKind.FULL_SEQUENCE, StageKind.RESPONSE_ONLY):
        model, _ = train_stage(init_params(config, SEED), sequences, StageSpec(kind=kind, train=optimizer), SEED)
        trained[kind.value] = model
    return trained


@pytest.fixture(scope="module")
def greedy():
    return SamplerConfig(steps=8, temperature=0.0, seed=SEED)


@pytest.fixture(scope="module")
def pipeline_run(dataset, models, greedy):
    """The FS pipeline run on eight training examples of TASK."""
    template = PromptTemplate.parse(dataset.template, dataset.vocab)
    records = [r for r in dataset.train if r["task"] == TASK][:8]
    examples = [FewShotExample.from_record(r, dataset.vocab) for r in records]
    config = PipelineConfig(num_candidates=8, infill=SamplerConfig(steps=6, temperature=1.0, seed=SEED),
                            validation=greedy, seed=SEED)
    pipeline = PromptPipeline(models["FS"], template, examples, config)
    return pipeline, pipeline.run()


def heldout_examples(dataset, task, limit):
    records = [r for r in dataset.heldout if r["task"] == task][:limit]
    return [FewShotExample.from_record(r, dataset.vocab) for r in records]


def recovery(model, dataset, sampler):
    masked = PromptTemplate.parse(dataset.template, dataset.vocab)
    reports = []
    for task, reference in sorted(dataset.references.items()):
        target = PromptTemplate.parse(reference, dataset.vocab)
        reports.append(evaluate_recovery(model, masked, target, heldout_examples(dataset, task, 25), sampler))
    return np.mean([r.accuracy for r in reports]), np.mean([r.fill_fraction for r in reports])


class TestTemplateRecovery:
    """Infilling the masked instruction preamble from reference responses."""

    def test_full_sequence_recovers_and_response_only_does_not(self, dataset, models, greedy):
        """Test that FS recovers the preamble while RO fills it with EOS instead."""
        fs_accuracy, fs_fill = recovery(models["FS"], dataset, greedy)
        ro_accuracy, ro_fill = recovery(models["RO"], dataset, greedy)
        assert fs_accuracy >= 0.9
        assert fs_accuracy - ro_accuracy >= 0.3
        assert ro_fill - fs_fill >= 0.3


class TestPerplexityOrdering:
    """Prompt perplexity separates the two regimes."""

    def test_full_sequence_has_lower_prompt_ppl(self, dataset, models):
        """Test that FS assigns the prompts lower perplexity by more than three standard errors."""
        vocab = dataset.vocab
        sequences = [TokenSequence.from_pair(vocab, r["prompt"], r["response"]) for r in dataset.heldout[:200]]
        config = PPLConfig(mc_samples=2000, region="prompt", seed=SEED)
        fs = corpus_ppl(models["FS"], sequences, config)
        ro = corpus_ppl(models["RO"], sequences, config)
        assert fs.ppl < ro.ppl
        gap = ro.nelbo_per_token - fs.nelbo_per_token
        assert gap > 3 * np.hypot(fs.stderr, ro.stderr)


class TestPipelineEndToEnd:
    """The selected prompt generalizes and is reused without further infilling."""

    def heldout_em(self, pipeline, candidate, dataset):
        records = [r for r in dataset.heldout if r["task"] == TASK][:40]
        inputs = [r["slots"] for r in records]
        responses = pipeline.apply(candidate, inputs, dataset.response_len)
        vocab = dataset.vocab
        return np.mean([
            exact_match(response_text(vocab, got), response_text(vocab, vocab.encode(r["response"])))
            for got, r in zip(responses, records)
        ])

    def test_selected_beats_unselected_mean(self, dataset, pipeline_run):
        """Test that the selected prompt beats the mean of the other candidates on held-out pairs."""
        pipeline, run = pipeline_run
        selected = self.heldout_em(pipeline, run.best, dataset)
        others = [self.heldout_em(pipeline, c, dataset) for c in run.candidates if c.index != run.best.index]
        assert selected >= np.mean(others)

    def test_selected_beats_random_prompt(self, dataset, pipeline_run):
        """Test that the selected prompt beats a random prompt of the same length."""
        pipeline, run = pipeline_run
        vocab = dataset.vocab
        content = [i for i in range(vocab.size) if i not in (vocab.mask_id, vocab.eos_id, vocab.pad_id)]
        rng = make_rng(SEED, "random-prompt")
        tokens = tuple(int(t) for t in rng.choice(content, size=len(run.best.tokens)))
        random_prompt = InfillCandidate(tokens, (0, 0), len(run.candidates))
        assert self.heldout_em(pipeline, run.best, dataset) >= self.heldout_em(pipeline, random_prompt, dataset)

    def test_infill_calls_independent_of_test_size(self, dataset, pipeline_run):
        """Test that applying the selected prompt never calls the infiller again."""
        pipeline, run = pipeline_run
        calls = pipeline.infill_calls
        assert calls == len(run.candidates)
        inputs = [r["slots"] for r in dataset.heldout if r["task"] == TASK]
        pipeline.apply(run.best, inputs[:5], dataset.response_len)
        pipeline.apply(run.best, inputs[:50], dataset.response_len)
        assert pipeline.infill_calls == calls
