"""
Tests for the denoiser, its masked loss, the two objectives and checkpoints.
"""

import math

import numpy as np
import pytest
import torch

from infill_lab.core import TokenSequence, make_rng
from infill_lab.errors import CheckpointError, ContractError, SequenceLengthError, UndefinedLossError
from infill_lab.model import (
    DenoiserConfig,
    collate,
    compute_gradients,
    forward,
    init_params,
    load_checkpoint,
    masked_cross_entropy,
    parameter_hash,
    per_example_losses,
    read_header,
    save_checkpoint,
)
from infill_lab.training import loss_full_sequence, loss_response_only, masked_loss


@pytest.fixture
def gradcheck_model():
    config = DenoiserConfig(vocab_size=32, mask_id=0, pad_id=2, d_model=16, n_layers=2, n_heads=2, max_len=8)
    return init_params(config, seed=11)


@pytest.fixture
def gradcheck_batch():
    return [
        TokenSequence((5, 9, 13, 17, 21, 25), 3),
        TokenSequence((4, 8, 12, 16, 20, 24, 28, 31), 4),
    ]


def numeric_gradients(model, loss_fn, h=1e-5):
    """Central differences of loss_fn() with respect to every parameter entry."""
    grads = {}
    with torch.no_grad():
        for name, param in model.named_parameters():
            flat = param.view(-1)
            grad = torch.zeros_like(flat)
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + h
                plus = loss_fn().item()
                flat[i] = original - h
                minus = loss_fn().item()
                flat[i] = original
                grad[i] = (plus - minus) / (2 * h)
            grads[name] = grad.view_as(param)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        scale = torch.clamp(torch.maximum(a.abs(), n.abs()), min=floor)
        worst = max(worst, float(((a - n).abs() / scale).max()))
    return worst


class TestDenoiserConfig:
    """Test architecture validation."""

    def test_heads_must_divide_width(self):
        """Test rejecting a head count that does not divide d_model."""
        with pytest.raises(ValueError):
            DenoiserConfig(vocab_size=10, mask_id=0, pad_id=2, d_model=10, n_heads=3)

    def test_ids_in_vocabulary(self):
        """Test that mask and pad ids must lie inside the vocabulary."""
        with pytest.raises(ValueError):
            DenoiserConfig(vocab_size=10, mask_id=12, pad_id=2)

    def test_default_ff_width(self):
        """Test the default feed-forward width."""
        assert DenoiserConfig(vocab_size=10, mask_id=0, pad_id=2, d_model=16, n_heads=2).d_ff == 64


class TestDenoiser:
    """Test the forward pass."""

    def test_logit_shape(self, tiny_model, vocab):
        """Test the shape of the logits."""
        tokens, _ = collate([[3, 4, 0], [5, 0]], vocab.pad_id)
        logits = tiny_model(tokens)
        assert logits.shape == (2, 3, vocab.size)
        assert logits.dtype == torch.float64

    def test_init_is_deterministic(self, tiny_config):
        """Test that one seed gives one set of weights."""
        a = init_params(tiny_config, seed=3)
        b = init_params(tiny_config, seed=3)
        c = init_params(tiny_config, seed=4)
        assert parameter_hash(a) == parameter_hash(b)
        assert parameter_hash(a) != parameter_hash(c)

    def test_projection_scale(self):
        """Test the spread of freshly initialised projections."""
        config = DenoiserConfig(vocab_size=32, mask_id=0, pad_id=2, d_model=128, n_layers=1, n_heads=4, max_len=16)
        model = init_params(config, seed=0)
        std = float(model.blocks[0].attn.q.weight.std())
        assert abs(std - 1 / math.sqrt(128)) < 0.1 / math.sqrt(128)

    def test_seeds_give_different_weights(self, tiny_config):
        """Test that different seeds give different weights."""
        a = init_params(tiny_config, seed=1)
        b = init_params(tiny_config, seed=2)
        assert not torch.equal(a.tok_emb.weight, b.tok_emb.weight)
        assert not torch.equal(a.blocks[0].ff1.weight, b.blocks[0].ff1.weight)

    def test_predictions_are_distributions(self, tiny_model, vocab):
        """Test that predicted token probabilities sum to one."""
        tokens, key_mask = collate([[3, 0, 5, 6], [7, 0]], vocab.pad_id)
        probs = torch.softmax(tiny_model(tokens, key_mask), dim=-1)
        assert torch.allclose(probs.sum(dim=-1), torch.ones(2, 4, dtype=torch.float64), atol=1e-12)

    def test_too_long(self, tiny_model):
        """Test a sequence longer than max_len."""
        tokens = torch.full((1, tiny_model.config.max_len + 1), 3, dtype=torch.long)
        with pytest.raises(SequenceLengthError):
            tiny_model(tokens)

    def test_padding_does_not_leak(self, tiny_model, vocab):
        """Test that padding does not change logits at real positions."""
        from infill_lab.core import NoisySequence

        short = NoisySequence.from_tokens((3, 0, 5), vocab.mask_id, 1)
        long = NoisySequence.from_tokens((4, 6, 0, 7, 8, 0), vocab.mask_id, 2)
        alone = forward(tiny_model, [short])[0]
        batched = forward(tiny_model, [short, long])[0, :3]
        assert torch.allclose(alone, batched, atol=1e-10)

    def test_bidirectional(self, tiny_model):
        """Test that a later token changes earlier logits."""
        a = tiny_model(torch.tensor([[3, 0, 5, 6]]))
        b = tiny_model(torch.tensor([[3, 0, 5, 9]]))
        assert not torch.allclose(a[0, 1], b[0, 1])


class TestMaskedLoss:
    """Test the masked cross-entropy."""

    def test_uniform_logits(self):
        """Test the loss of uniform logits."""
        logits = torch.zeros(1, 3, 8, dtype=torch.float64)
        targets = torch.tensor([[1, 2, 3]])
        mask = torch.tensor([[True, False, True]])
        assert masked_cross_entropy(logits, targets, mask).item() == pytest.approx(math.log(8))

    def test_per_example_normalization(self):
        """Test normalising each example by its own mask count."""
        logits = torch.zeros(2, 2, 4, dtype=torch.float64)
        logits[0, 0, 1] = 10.0
        targets = torch.tensor([[1, 1], [1, 1]])
        mask = torch.tensor([[True, False], [True, True]])
        losses = per_example_losses(logits, targets, mask)
        expected_first = -torch.log_softmax(logits[0, 0], dim=-1)[1].item()
        assert losses[0].item() == pytest.approx(expected_first)
        assert losses[1].item() == pytest.approx(math.log(4))

    def test_empty_examples_skipped(self):
        """Test that examples with no masks do not count."""
        logits = torch.zeros(2, 2, 4, dtype=torch.float64)
        targets = torch.zeros(2, 2, dtype=torch.long)
        mask = torch.tensor([[False, False], [True, False]])
        assert masked_cross_entropy(logits, targets, mask).item() == pytest.approx(math.log(4))

    def test_all_empty(self):
        """Test a batch where nothing is masked."""
        with pytest.raises(UndefinedLossError):
            masked_cross_entropy(torch.zeros(1, 2, 4), torch.zeros(1, 2, dtype=torch.long),
                                 torch.zeros(1, 2, dtype=torch.bool))


class TestObjectives:
    """Test the full-sequence and response-only objectives."""

    def test_response_only_rejects_prompt_masks(self, tiny_model, pair):
        """Test that response-only loss refuses masks in the prompt."""
        with pytest.raises(ContractError):
            loss_response_only(tiny_model, [pair], masks=[[0, 4]])

    def test_response_only_needs_response(self, tiny_model):
        """Test response-only loss on a pair without a response."""
        with pytest.raises(ContractError):
            loss_response_only(tiny_model, [TokenSequence((3, 4), 2)], masks=[[1]])

    def test_drawn_masks_respect_region(self, tiny_model, pair):
        """Test that drawn masks stay inside each objective's region."""
        out = loss_response_only(tiny_model, [pair] * 8, rng=make_rng(0))
        assert all(min(n.masked_positions) >= pair.prompt_len for n in out.noisy)
        assert out.loss.requires_grad

    def test_rng_required_without_masks(self, tiny_model, pair):
        """Test that a generator is needed when no masks are given."""
        with pytest.raises(ContractError):
            loss_full_sequence(tiny_model, [pair])

    @pytest.mark.parametrize("objective", [loss_full_sequence, loss_response_only])
    def test_batch_order_does_not_matter(self, tiny_model, objective):
        """Test that reordering a batch leaves the loss unchanged."""
        batch = [
            TokenSequence((5, 9, 13, 17, 21), 2),
            TokenSequence((4, 8, 12, 16), 1),
            TokenSequence((6, 7, 10, 11, 14, 15), 3),
        ]
        masks = [[2, 4], [1, 2, 3], [5]]
        with torch.no_grad():
            reference = objective(tiny_model, batch, masks=masks).loss.item()
            for order in ([2, 0, 1], [1, 2, 0], [2, 1, 0]):
                permuted = objective(tiny_model, [batch[i] for i in order], masks=[masks[i] for i in order])
                assert permuted.loss.item() == pytest.approx(reference, rel=1e-12)

    def test_identity_on_response_confined_masks(self, tiny_model):
        """1,000 random instances; agreement is exact, not approximate."""
        rng = np.random.default_rng(2024)
        vocab_size = tiny_model.config.vocab_size
        instances = []
        for _ in range(1000):
            length = int(rng.integers(2, 13))
            prompt_len = int(rng.integers(1, length))
            tokens = tuple(int(t) for t in rng.integers(3, vocab_size, size=length))
            count = int(rng.integers(1, length - prompt_len + 1))
            mask = sorted(rng.choice(np.arange(prompt_len, length), size=count, replace=False).tolist())
            instances.append((TokenSequence(tokens, prompt_len), mask))
        with torch.no_grad():
            for start in range(0, len(instances), 10):
                chunk = instances[start: start + 10]
                batch = [seq for seq, _ in chunk]
                masks = [mask for _, mask in chunk]
                fs = loss_full_sequence(tiny_model, batch, masks=masks).loss
                ro = loss_response_only(tiny_model, batch, masks=masks).loss
                assert torch.equal(fs, ro)


class TestGradients:
    """Analytic gradients against central finite differences at double precision."""

    @pytest.mark.parametrize("objective, masks", [
        (loss_full_sequence, [[0, 2, 4], [1, 5, 6, 7]]),
        (loss_response_only, [[3, 5], [4, 6, 7]]),
    ])
    def test_matches_finite_differences(self, gradcheck_model, gradcheck_batch, objective, masks):
        """Test backpropagated gradients against finite differences."""
        noisy = objective(gradcheck_model, gradcheck_batch, masks=masks).noisy

        def loss_fn():
            return masked_loss(gradcheck_model, noisy)

        analytic = compute_gradients(gradcheck_model, loss_fn())
        numeric = numeric_gradients(gradcheck_model, loss_fn)
        assert max_relative_error(analytic, numeric) < 1e-4


class TestCheckpoint:
    """Test the checkpoint container."""

    def test_roundtrip_is_bit_exact(self, tmp_path, tiny_model, vocab):
        """Test that a saved checkpoint reloads bit for bit."""
        path = tmp_path / "stage-FS.ckpt"
        param_hash = save_checkpoint(path, tiny_model, "FS", vocab.content_hash(), rng_state={"epoch": 3})
        loaded = load_checkpoint(path)
        assert loaded.param_hash == param_hash == parameter_hash(tiny_model)
        assert loaded.stage == "FS"
        assert loaded.vocab_hash == vocab.content_hash()
        assert loaded.rng_state == {"epoch": 3}
        assert loaded.config == tiny_model.config
        for name, tensor in tiny_model.state_dict().items():
            assert torch.equal(tensor, loaded.model.state_dict()[name])

    def test_header_is_sorted_json(self, tmp_path, tiny_model, vocab):
        """Test the checkpoint header format."""
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, tiny_model, "RO", vocab.content_hash())
        header, payload = read_header(path)
        assert header["stage"] == "RO"
        assert sum(entry["nbytes"] for entry in header["params"]) == len(payload)

    def test_bad_magic(self, tmp_path):
        """Test a file without the checkpoint magic."""
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(CheckpointError, match="junk.ckpt"):
            load_checkpoint(path)

    def test_corrupt_payload(self, tmp_path, tiny_model, vocab):
        """Test a checkpoint whose payload hash does not match."""
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, tiny_model, "FS", vocab.content_hash())
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="parameter hash"):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        """Test loading a checkpoint that does not exist."""
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.ckpt")
