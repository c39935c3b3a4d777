"""Tests for the command-line entry point."""

import json

import pytest

from src.cli import build_parser, main

FAST = ["--set", "epochs=1", "--set", "channels=8", "--set", "batch_size=8", "--set", "num_classes=4"]


@pytest.fixture
def trained(tmp_path, corpus_dir):
    """Checkpoint directory produced by ``train``."""
    out = tmp_path / "run"
    assert main(["train", "--data", str(corpus_dir), "--out", str(out), *FAST]) == 0
    return out


@pytest.fixture
def sample(corpus_dir, synthetic_clips):
    """Path of the first clip of the corpus."""
    clip = synthetic_clips[0]
    return corpus_dir / clip.subject_id / f"{clip.label + 1:02d}" / "00000.txt"


class TestParser:
    """Tests for argument parsing."""

    def test_requires_command(self):
        """Test a bare invocation is a usage error."""
        with pytest.raises(SystemExit) as excinfo:
            build_parser().parse_args([])
        assert excinfo.value.code == 2

    def test_repeated_overrides(self):
        """Test --set collects every override."""
        args = build_parser().parse_args(
            ["train", "--data", "d", "--out", "o", "--set", "epochs=2", "--set", "gamma=2"]
        )
        assert args.set == ["epochs=2", "gamma=2"]


class TestCommands:
    """End-to-end runs of each subcommand on a tiny corpus."""

    def test_synth(self, tmp_path):
        """Test the generator writes clips and a manifest."""
        out = tmp_path / "synth"
        code = main(["synth", "--out", str(out), "--samples", "2", "--frames", "6", "--pairs", "2"])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["clips"]) == 8
        assert manifest["metadata"]["seed"] == 0

    def test_synth_unknown_class(self, tmp_path):
        """Test an unknown class name is a configuration error."""
        assert main(["synth", "--out", str(tmp_path), "--classes", "hug"]) == 2

    def test_train_writes_artifacts(self, trained):
        """Test checkpoint and report files."""
        assert (trained / "model.json").is_file()
        assert (trained / "model.bin").is_file()
        report = json.loads((trained / "report.json").read_text())
        assert len(report["epochs"]) == 1

    def test_eval(self, trained, corpus_dir, tmp_path):
        """Test evaluating a checkpoint over the whole corpus."""
        out = tmp_path / "eval.json"
        assert main(["eval", "--model", str(trained), "--data", str(corpus_dir), "--out", str(out)]) == 0
        assert json.loads(out.read_text())["evaluation"]["num_samples"] == 16

    def test_inspect_and_curves(self, trained, sample, tmp_path):
        """Test mask, attention and curve exports for one clip."""
        masks, attention = tmp_path / "masks.json", tmp_path / "attention.json"
        code = main(
            ["inspect", "--model", str(trained), "--sample", str(sample), "--emit", str(masks), str(attention)]
        )
        assert code == 0
        assert len(json.loads(masks.read_text())["selections"]) == 2
        assert "attention" in json.loads(attention.read_text())

        curves = tmp_path / "curves.csv"
        assert main(["curves", "--model", str(trained), "--sample", str(sample), "--out", str(curves)]) == 0
        assert curves.read_text().startswith("person,joint,name,frame,velocity,weighted_energy")

    def test_ablate(self, corpus_dir, tmp_path):
        """Test a two-arm ablation table."""
        out = tmp_path / "ablation"
        code = main(
            ["ablate", "--data", str(corpus_dir), "--out", str(out), "--strategies", "none-baseline,atnac", *FAST]
        )
        assert code == 0
        assert len((out / "ablation.csv").read_text().splitlines()) == 3

    def test_cv(self, corpus_dir, tmp_path):
        """Test a two-fold cross-validation."""
        out = tmp_path / "cv"
        assert main(["cv", "--data", str(corpus_dir), "--out", str(out), "--k", "2", *FAST]) == 0
        assert len(json.loads((out / "cv_report.json").read_text())["folds"]) == 2

    def test_gradcheck_corrupted(self, tmp_path):
        """Test a corrupted gradient exits with the numeric failure code."""
        out = tmp_path / "gradcheck.json"
        code = main(
            ["gradcheck", "--max-elements", "3", "--corrupt", "classifier.weight", "--out", str(out)]
        )
        assert code == 4
        document = json.loads(out.read_text())
        assert document["failures"] == ["classifier.weight"]
        assert document["config"]["num_classes"] == 3


class TestExitCodes:
    """Tests for error reporting."""

    def test_unknown_config_key(self, corpus_dir, tmp_path):
        """Test an unknown key exits with the configuration code."""
        code = main(["train", "--data", str(corpus_dir), "--out", str(tmp_path), "--set", "colour=red"])
        assert code == 2

    def test_missing_data(self, tmp_path):
        """Test a missing corpus directory."""
        assert main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path), *FAST]) == 2

    def test_class_count_mismatch(self, corpus_dir, tmp_path):
        """Test a model with fewer classes than the data."""
        code = main(
            ["train", "--data", str(corpus_dir), "--out", str(tmp_path), *FAST, "--set", "num_classes=2"]
        )
        assert code == 2

    def test_missing_checkpoint(self, corpus_dir, tmp_path):
        """Test evaluating without a checkpoint is a data error."""
        code = main(["eval", "--model", str(tmp_path), "--data", str(corpus_dir), "--out", str(tmp_path / "e.json")])
        assert code == 3

    def test_unknown_corrupt_parameter(self):
        """Test the gradient hook with an unknown name."""
        assert main(["gradcheck", "--max-elements", "1", "--corrupt", "nope"]) == 2
