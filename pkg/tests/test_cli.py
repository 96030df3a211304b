"""
Tests for run configuration and the command-line interface.
"""

import json

import pytest
import yaml

from infill_lab import cli as cli_module
from infill_lab.cli import main
from infill_lab.config import (
    RESOLVED_CONFIG,
    ExperimentManifest,
    load_run_config,
    parse_set_option,
    write_resolved_config,
)
from infill_lab.core import derive_seed
from infill_lab.errors import ConfigError, DataError
from infill_lab.model import load_checkpoint

TINY_MODEL = [
    "--set", "model.d_model=16",
    "--set", "model.n_layers=1",
    "--set", "model.n_heads=2",
    "--set", "model.max_len=32",
    "--set", "train.optimizer.batch_size=8",
    "--set", "train.optimizer.warmup_steps=1",
]

FAST_SAMPLING = [
    "--set", "sampler.steps=2",
    "--set", "pipeline.infill.steps=2",
    "--set", "pipeline.validation.steps=2",
]


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def run_synth(output_dir, *extra):
    args = ["synth", "-o", str(output_dir), "--size", "40", "--heldout-size", "8",
            "--set", "synth.query_len=2", "--set", "synth.eos_pad=1", *extra]
    return main(args)


def run_train(output_dir, data_dir, *extra):
    args = ["train", "-o", str(output_dir), "--vocab", str(data_dir / "vocab.txt"),
            "--data", str(data_dir / "train.jsonl"), "--stages", "FS,RO", "--epochs", "1", *TINY_MODEL, *extra]
    return main(args)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("synth")
    assert run_synth(path) == 0
    return path


@pytest.fixture(scope="module")
def train_dir(tmp_path_factory, data_dir):
    path = tmp_path_factory.mktemp("train")
    assert run_train(path, data_dir) == 0
    return path


@pytest.fixture
def wide_console(monkeypatch):
    monkeypatch.setattr(cli_module.console, "width", 240)


class TestLoadRunConfig:
    """Test config resolution."""

    def test_defaults(self):
        """Test that an empty config resolves to the documented defaults."""
        cfg = load_run_config("ppl")
        assert cfg.command == "ppl"
        assert cfg.seed == 0
        assert cfg.sampler.seed == derive_seed(0, "sampler")
        assert cfg.ppl.seed == derive_seed(0, "ppl")

    def test_precedence(self, tmp_path):
        """Test that flags beat --set options, which beat the config file."""
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"seed": 5, "sampler": {"steps": 4, "temperature": 0.5}}))
        assert load_run_config("generate", path).sampler.steps == 4
        assert load_run_config("generate", path, ["sampler.steps=6"]).sampler.steps == 6
        cfg = load_run_config("generate", path, ["sampler.steps=6"], {"sampler.steps": 8, "sampler.strategy": None})
        assert cfg.sampler.steps == 8
        assert cfg.sampler.temperature == 0.5
        assert cfg.sampler.strategy == "confidence"
        assert cfg.sampler.seed == derive_seed(5, "sampler")

    def test_explicit_section_seed_kept(self):
        """Test that a section seed given explicitly is not re-derived."""
        cfg = load_run_config("pipeline", sets=["pipeline.seed=17"])
        assert cfg.pipeline.seed == 17

    @pytest.mark.parametrize("option", ["sampler.steps=0", "pipeline.num_candidates=0", "ppl.mc_samples=0",
                                        "pipeline.scorer=bleu", "train.stages=[XX]", "data.num_examples=0"])
    def test_invalid_values(self, option):
        """Test rejecting out-of-range config values with ConfigError."""
        with pytest.raises(ConfigError):
            load_run_config("pipeline", sets=[option])

    def test_bad_set_option(self):
        """Test rejecting a --set option without key=value form."""
        with pytest.raises(ConfigError):
            parse_set_option("no-equals-sign")
        assert parse_set_option("train.stages=[FS, RO]") == ("train.stages", ["FS", "RO"])

    def test_missing_config_file(self, tmp_path):
        """Test that an unreadable config file raises ConfigError."""
        with pytest.raises(ConfigError):
            load_run_config("train", tmp_path / "absent.yaml")

    def test_resolved_config_replays(self, tmp_path):
        """Test that reloading resolved_config.yaml yields the same config."""
        cfg = load_run_config("ppl", sets=["seed=3", f"output_dir={tmp_path}", "ppl.region=prompt"])
        path = write_resolved_config(cfg)
        assert path == tmp_path / RESOLVED_CONFIG
        assert load_run_config("ppl", path) == cfg


class TestManifest:
    """Test the experiment manifest."""

    def test_paths_resolve_against_manifest(self, tmp_path):
        """Test that relative manifest paths resolve against its directory."""
        (tmp_path / "model.ckpt").write_bytes(b"x")
        ExperimentManifest(checkpoints={"FS": tmp_path / "model.ckpt"}).save(tmp_path / "manifest.yaml")
        assert yaml.safe_load((tmp_path / "manifest.yaml").read_text())["checkpoints"] == {"FS": "model.ckpt"}
        assert ExperimentManifest.load(tmp_path / "manifest.yaml").checkpoints["FS"] == tmp_path / "model.ckpt"

    def test_missing_reference(self, tmp_path):
        """Test a manifest pointing at a file that does not exist."""
        (tmp_path / "manifest.yaml").write_text(yaml.safe_dump({"checkpoints": {"FS": "gone.ckpt"}}))
        with pytest.raises(DataError, match="gone.ckpt"):
            ExperimentManifest.load(tmp_path / "manifest.yaml")

    def test_malformed(self, tmp_path):
        """Test loading a manifest with the wrong shape."""
        (tmp_path / "manifest.yaml").write_text("- just\n- a list\n")
        with pytest.raises(DataError):
            ExperimentManifest.load(tmp_path / "manifest.yaml")


class TestExitCodes:
    """Test how failures map onto exit codes."""

    def test_config_error_writes_nothing(self, tmp_path):
        """Test that a config error exits 1 before any output is written."""
        out = tmp_path / "run"
        assert main(["pipeline", "-o", str(out), "-N", "0"]) == 1
        assert not out.exists()

    def test_missing_required_input(self, tmp_path):
        """Test that a missing data input is rejected before the output directory exists."""
        out = tmp_path / "run"
        assert main(["train", "-o", str(out)]) == 1
        assert not out.exists()

    @pytest.mark.parametrize("command", ["generate", "infill", "pipeline", "sw-infill", "ppl", "eval", "inspect"])
    def test_every_command_checks_inputs_first(self, tmp_path, command):
        """Test that each model command refuses to start without its inputs and writes nothing."""
        out = tmp_path / "run"
        assert main([command, "-o", str(out)]) == 1
        assert not out.exists()

    def test_generate_without_prompts(self, tmp_path, data_dir, train_dir):
        """Test that generate needs --prompt or --data before writing anything."""
        out = tmp_path / "run"
        code = main(["generate", "-o", str(out), "--vocab", str(data_dir / "vocab.txt"),
                     "--checkpoint", str(train_dir / "stage-FS.ckpt")])
        assert code == 1
        assert not out.exists()

    def test_unwritable_output(self, tmp_path):
        """Test that an output path under a regular file fails with exit code 2."""
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory\n")
        assert run_synth(blocker / "run") == 2

    def test_unwritable_report(self, tmp_path, monkeypatch):
        """Test that an OSError raised while writing results maps onto exit code 2."""
        def refuse(self, *args, **kwargs):
            raise PermissionError(13, "Permission denied", str(self))

        monkeypatch.setattr(ExperimentManifest, "save", refuse)
        assert run_synth(tmp_path / "run") == 2

    def test_unknown_option(self, tmp_path):
        """Test that an unknown flag exits 1."""
        assert main(["synth", "--no-such-flag"]) == 1

    def test_missing_data_file(self, tmp_path, data_dir):
        """Test that a missing data file exits 2."""
        code = main(["train", "-o", str(tmp_path / "run"), "--vocab", str(data_dir / "vocab.txt"),
                     "--data", str(tmp_path / "absent.jsonl")])
        assert code == 2

    def test_vocabulary_mismatch(self, tmp_path, data_dir, train_dir):
        """Test a checkpoint whose vocabulary size disagrees with the vocab file."""
        other = tmp_path / "vocab.txt"
        other.write_text("\n".join(["<mask>", "<eos>", "<pad>", "a", "b"]) + "\n")
        code = main(["ppl", "-o", str(tmp_path / "run"), "--vocab", str(other),
                     "--checkpoint", str(train_dir / "stage-FS.ckpt"), "--data", str(data_dir / "heldout.jsonl")])
        assert code == 2


class TestSynthCommand:
    """Test dataset generation."""

    def test_outputs(self, data_dir):
        """Test the files written by synth."""
        for name in ("vocab.txt", "train.jsonl", "heldout.jsonl", "template.txt", "manifest.yaml", RESOLVED_CONFIG):
            assert (data_dir / name).exists()
        assert len(read_jsonl(data_dir / "train.jsonl")) == 40
        manifest = ExperimentManifest.load(data_dir / "manifest.yaml")
        assert set(manifest.datasets) == {"vocab", "train", "heldout"}
        assert "reference-copy" in manifest.templates

    def test_rerun_is_byte_identical(self, tmp_path, data_dir):
        """Test that running synth twice gives identical bytes."""
        assert run_synth(tmp_path) == 0
        for name in ("train.jsonl", "heldout.jsonl", "vocab.txt"):
            assert (tmp_path / name).read_bytes() == (data_dir / name).read_bytes()

    def test_replay_from_resolved_config(self, tmp_path, data_dir):
        """Test replaying synth from its own resolved config."""
        assert main(["synth", "--config", str(data_dir / RESOLVED_CONFIG), "-o", str(tmp_path)]) == 0
        assert (tmp_path / "train.jsonl").read_bytes() == (data_dir / "train.jsonl").read_bytes()


class TestTrainCommand:
    """Test staged training from the command line."""

    def test_checkpoints_and_manifest(self, train_dir):
        """Test that train writes one checkpoint per stage plus a manifest."""
        manifest = ExperimentManifest.load(train_dir / "manifest.yaml")
        assert list(manifest.checkpoints) == ["FS", "FS+RO"]
        assert load_checkpoint(manifest.checkpoints["FS+RO"]).stage == "FS+RO"
        assert (train_dir / "train_log-FS+RO.tsv").exists()

    def test_rerun_gives_same_parameters(self, tmp_path, data_dir, train_dir):
        """Test that retraining with the same seed reproduces parameter hashes."""
        assert run_train(tmp_path, data_dir) == 0
        for name in ("stage-FS.ckpt", "stage-FS+RO.ckpt"):
            assert load_checkpoint(tmp_path / name).param_hash == load_checkpoint(train_dir / name).param_hash


class TestInspectCommand:
    """Test checkpoint inspection."""

    def test_shows_hash(self, tmp_path, train_dir, wide_console, capsys):
        """Test that inspect prints the parameter hash."""
        path = train_dir / "stage-FS+RO.ckpt"
        assert main(["inspect", "-o", str(tmp_path), "--checkpoint", str(path)]) == 0
        out = capsys.readouterr().out
        assert load_checkpoint(path).param_hash in out
        assert "FS+RO" in out


class TestModelCommands:
    """Test the commands that run a trained denoiser."""

    def test_ppl_over_manifest(self, tmp_path, data_dir, train_dir):
        """Test ppl over every checkpoint listed in a manifest."""
        args = ["ppl", "--manifest", str(train_dir / "manifest.yaml"), "--vocab", str(data_dir / "vocab.txt"),
                "--data", str(data_dir / "heldout.jsonl"), "-K", "8", "--region", "response_only"]
        assert main([*args, "-o", str(tmp_path / "a")]) == 0
        rows = read_jsonl(tmp_path / "a" / "ppl.jsonl")
        assert [row["checkpoint"] for row in rows] == ["FS", "FS+RO"]
        assert all(row["ppl"] > 1.0 and row["region"] == "response_only" for row in rows)

        assert main([*args, "-o", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "ppl.jsonl").read_bytes() == (tmp_path / "b" / "ppl.jsonl").read_bytes()

    def test_generate(self, tmp_path, data_dir, train_dir):
        """Test generating responses for flag prompts."""
        code = main(["generate", "-o", str(tmp_path), "--vocab", str(data_dir / "vocab.txt"),
                     "--checkpoint", str(train_dir / "stage-FS+RO.ckpt"), "--gen-length", "3",
                     "--prompt", "please copy the digits below : 1 2 =", "--trace", *FAST_SAMPLING])
        assert code == 0
        rows = read_jsonl(tmp_path / "generations.jsonl")
        assert len(rows) == 1
        assert len(rows[0]["response"].split()) == 3
        assert (tmp_path / "trace-0.jsonl").exists()

    def test_infill(self, tmp_path, data_dir, train_dir):
        """Test infilling a masked template."""
        code = main(["infill", "-o", str(tmp_path), "--vocab", str(data_dir / "vocab.txt"),
                     "--checkpoint", str(train_dir / "stage-FS+RO.ckpt"), "--template", str(data_dir / "template.txt"),
                     "--slot", "query=1 2", "--response", "1 2 <eos>", *FAST_SAMPLING])
        assert code == 0
        record = read_jsonl(tmp_path / "infilled.jsonl")[0]
        assert "<mask" not in record["filled"]
        assert record["filled"].endswith("{query} =")
        assert len(read_jsonl(tmp_path / "trace.jsonl")) == 2

    def test_pipeline(self, tmp_path, data_dir, train_dir):
        """Test the propose, validate and select command end to end."""
        code = main(["pipeline", "-o", str(tmp_path), "--vocab", str(data_dir / "vocab.txt"),
                     "--checkpoint", str(train_dir / "stage-FS+RO.ckpt"), "--template", str(data_dir / "template.txt"),
                     "--examples", str(data_dir / "train.jsonl"), "--task", "copy", "--num-examples", "2",
                     "-N", "3", *FAST_SAMPLING])
        assert code == 0
        candidates = read_jsonl(tmp_path / "candidates.jsonl")
        assert [c["index"] for c in candidates] == [0, 1, 2]
        selected = read_jsonl(tmp_path / "selected.jsonl")[0]
        assert selected["score"] == max(c["score"] for c in candidates)
        assert (tmp_path / "selected_prompt.txt").read_text().strip() == selected["prompt"]

    def test_sliding_window(self, tmp_path, data_dir, train_dir):
        """Test the sliding-window infill command."""
        code = main(["sw-infill", "-o", str(tmp_path), "--vocab", str(data_dir / "vocab.txt"),
                     "--checkpoint", str(train_dir / "stage-FS+RO.ckpt"),
                     "--prompt-file", str(data_dir / "reference-copy.txt"),
                     "--examples", str(data_dir / "train.jsonl"), "--task", "copy", "--num-examples", "2",
                     "--window", "3", "--stride", "3", "--mask-size", "2", *FAST_SAMPLING])
        assert code == 0
        candidates = read_jsonl(tmp_path / "sw_candidates.jsonl")
        assert candidates[0]["provenance"] == [-1, -1]
        assert len(candidates) > 1

    def test_eval_with_recovery(self, tmp_path, data_dir, train_dir):
        """Test eval with both the answer and recovery suites."""
        code = main(["eval", "-o", str(tmp_path), "--vocab", str(data_dir / "vocab.txt"),
                     "--checkpoint", str(train_dir / "stage-FS+RO.ckpt"), "--data", str(data_dir / "heldout.jsonl"),
                     "--task", "copy", "--template", str(data_dir / "template.txt"),
                     "--reference", str(data_dir / "reference-copy.txt"), "--num-examples", "2", *FAST_SAMPLING])
        assert code == 0
        rows = read_jsonl(tmp_path / "eval.jsonl")
        assert [row["suite"] for row in rows] == ["answer", "recovery"]
        assert 0.0 <= rows[0]["exact_match"] <= 1.0
        assert rows[0]["spearman"] is None
        assert 0.0 <= rows[1]["accuracy"] <= 1.0

    def test_eval_needs_both_templates(self, tmp_path, data_dir, train_dir):
        """Test that eval refuses a template without a reference."""
        out = tmp_path / "run"
        code = main(["eval", "-o", str(out), "--vocab", str(data_dir / "vocab.txt"),
                     "--checkpoint", str(train_dir / "stage-FS.ckpt"), "--data", str(data_dir / "heldout.jsonl"),
                     "--template", str(data_dir / "template.txt")])
        assert code == 1
        assert not out.exists()

    def test_eval_seed_aggregation(self, tmp_path, data_dir, train_dir):
        """Test that --seeds repeats the answer suite and appends a mean and std row."""
        code = main(["eval", "-o", str(tmp_path), "--vocab", str(data_dir / "vocab.txt"),
                     "--checkpoint", str(train_dir / "stage-FS.ckpt"), "--data", str(data_dir / "heldout.jsonl"),
                     "--seeds", "3", *FAST_SAMPLING])
        assert code == 0
        rows = read_jsonl(tmp_path / "eval.jsonl")
        assert [row["suite"] for row in rows] == ["answer"] * 3 + ["answer-aggregate"]
        assert [row["replicate"] for row in rows[:3]] == [0, 1, 2]
        ems = [row["exact_match"] for row in rows[:3]]
        aggregate = rows[3]
        assert aggregate["seeds"] == 3
        assert aggregate["exact_match"] == pytest.approx(sum(ems) / 3)
        assert aggregate["exact_match_std"] >= 0.0
        assert aggregate["spearman"] is None

    def test_eval_rejects_zero_seeds(self, tmp_path, data_dir, train_dir):
        """Test that --seeds 0 is a configuration error."""
        code = main(["eval", "-o", str(tmp_path / "run"), "--vocab", str(data_dir / "vocab.txt"),
                     "--checkpoint", str(train_dir / "stage-FS.ckpt"), "--data", str(data_dir / "heldout.jsonl"),
                     "--seeds", "0"])
        assert code == 1
