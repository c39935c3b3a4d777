"""Tests for skeleton sequences, parsing, normalization, folds and batching."""

import numpy as np
import pytest
import torch

from src.dataset import (
    SBU_STANDARD_FOLDS,
    SkeletonSequence,
    collate,
    load_sbu,
    make_folds,
    normalize,
    parse_sbu_line,
    read_sbu_file,
    train_test_split,
)
from src.exceptions import ConfigError, DataError, SkeletonParseError
from src.graph import build_graph
from src.models import FoldProtocol


def _line(frame=1, value=0.5):
    return ",".join([str(frame)] + [str(value)] * 90)


class TestParseSbuLine:
    """Tests for parse_sbu_line."""

    def test_valid_line(self):
        """Test a 91-field line."""
        index, joints = parse_sbu_line(_line(3, 0.25))
        assert index == 3
        assert joints.shape == (2, 15, 3)
        assert np.all(joints == 0.25)

    def test_trailing_comma(self):
        """Test that a trailing separator is tolerated."""
        _, joints = parse_sbu_line(_line() + ",")
        assert joints.shape == (2, 15, 3)

    def test_wrong_field_count_names_line(self):
        """Test the error carries path and line number."""
        with pytest.raises(SkeletonParseError, match="clip.txt:7") as excinfo:
            parse_sbu_line("1,2,3", "clip.txt", 7)
        assert excinfo.value.line_number == 7

    def test_other_joint_count(self):
        """Test a five-joint line has 31 fields."""
        index, joints = parse_sbu_line(",".join(["2"] + ["1.5"] * 30), joints=5)
        assert index == 2
        assert joints.shape == (2, 5, 3)

    def test_joint_count_mismatch(self):
        """Test an SBU-width line read as a five-joint skeleton."""
        with pytest.raises(SkeletonParseError, match="expected 31 fields, got 91"):
            parse_sbu_line(_line(), joints=5)

    def test_non_numeric(self):
        """Test a non-numeric field."""
        fields = _line().split(",")
        fields[10] = "abc"
        with pytest.raises(SkeletonParseError, match="non-numeric"):
            parse_sbu_line(",".join(fields))


class TestReadSbu:
    """Tests for read_sbu_file and load_sbu."""

    def test_single_frame_skipped(self, tmp_path):
        """Test that a one-frame clip is skipped."""
        path = tmp_path / "one.txt"
        path.write_text(_line() + "\n")
        assert read_sbu_file(path, 0, "s01s02") is None

    def test_load_layout(self, tmp_path):
        """Test pair and class folders determine subject and label."""
        folder = tmp_path / "s01s02" / "03" / "001"
        folder.mkdir(parents=True)
        (folder / "skeleton_pos.txt").write_text("\n".join(_line(i) for i in range(1, 5)) + "\n")
        sequences = load_sbu(tmp_path)
        assert len(sequences) == 1
        assert sequences[0].label == 2
        assert sequences[0].subject_id == "s01s02"
        assert sequences[0].frames == 4

    def test_missing_root(self, tmp_path):
        """Test a missing directory."""
        with pytest.raises(DataError):
            load_sbu(tmp_path / "nope")


class TestSkeletonSequence:
    """Tests for SkeletonSequence validation."""

    def test_missing_joints_flagged(self, make_clip):
        """Test that all-zero joints are marked missing."""
        coords = np.ones((3, 4, 2, 5))
        coords[:, 1, 0, 2] = 0.0
        clip = make_clip(coords)
        assert clip.missing[1, 0, 2]
        assert clip.missing.sum() == 1

    def test_too_short(self, make_clip):
        """Test that one-frame sequences are rejected."""
        with pytest.raises(DataError):
            make_clip(np.ones((3, 1, 2, 5)))

    def test_non_finite(self, make_clip):
        """Test that NaN coordinates are rejected."""
        coords = np.ones((3, 4, 2, 5))
        coords[0, 0, 0, 0] = np.nan
        with pytest.raises(DataError):
            make_clip(coords)


class TestNormalize:
    """Tests for normalize."""

    def test_first_frame_centered_and_torso_unit(self, synthetic_clips):
        """Test centroid and torso length after normalization."""
        graph = build_graph("sbu15")
        clip = normalize(synthetic_clips[0], graph)
        first = clip.coords[:, 0].reshape(3, -1)
        np.testing.assert_allclose(first.mean(axis=1), np.zeros(3), atol=1e-12)
        a, b = graph.torso
        torso = np.linalg.norm(clip.coords[:, 0, 0, a] - clip.coords[:, 0, 0, b])
        assert torso == pytest.approx(1.0)

    def test_missing_joints_stay_zero(self, make_clip):
        """Test that missing joints are excluded and re-zeroed."""
        rng = np.random.default_rng(0)
        coords = rng.normal(size=(3, 4, 2, 15)) + 5.0
        coords[:, 2, 1, 7] = 0.0
        clip = normalize(make_clip(coords), build_graph("sbu15"))
        assert np.all(clip.coords[:, 2, 1, 7] == 0.0)

    def test_degenerate_torso_uses_unit_scale(self, make_clip, caplog):
        """Test the warning and unit scale for a zero-length torso."""
        coords = np.ones((3, 3, 2, 15))
        clip = normalize(make_clip(coords), build_graph("sbu15"))
        assert "degenerate torso" in caplog.text
        np.testing.assert_allclose(clip.coords, np.zeros_like(coords), atol=1e-12)


class TestMakeFolds:
    """Tests for make_folds."""

    def _clips(self, make_clip, pairs):
        return [make_clip(np.ones((3, 2, 2, 3)), label=i % 2, subject_id=p) for i, p in enumerate(pairs)]

    def test_seeded_folds_partition_pairs(self, make_clip):
        """Test that every pair is tested exactly once and never leaks."""
        clips = self._clips(make_clip, [f"s{i:02d}s99" for i in range(10)])
        folds = make_folds(clips, k=5, seed=3)
        assert len(folds) == 5
        tested = []
        for train, test in folds:
            train_pairs = {c.subject_id for c in train}
            test_pairs = {c.subject_id for c in test}
            assert not train_pairs & test_pairs
            tested.extend(test_pairs)
        assert sorted(tested) == sorted({c.subject_id for c in clips})

    def test_deterministic(self, make_clip):
        """Test that the same seed gives the same folds."""
        clips = self._clips(make_clip, [f"s{i:02d}s99" for i in range(6)])
        first = [[c.subject_id for c in test] for _, test in make_folds(clips, 3, seed=1)]
        second = [[c.subject_id for c in test] for _, test in make_folds(clips, 3, seed=1)]
        assert first == second

    def test_too_few_pairs(self, make_clip):
        """Test that k larger than the pair count is rejected."""
        with pytest.raises(ConfigError):
            make_folds(self._clips(make_clip, ["s01s02", "s02s03"]), k=5)

    def test_standard_protocol(self, make_clip):
        """Test the published split when all pairs are present."""
        pairs = [p for fold in SBU_STANDARD_FOLDS for p in fold]
        folds = make_folds(self._clips(make_clip, pairs), protocol=FoldProtocol.SBU_STANDARD)
        assert [sorted({c.subject_id for c in test}) for _, test in folds] == [
            sorted(fold) for fold in SBU_STANDARD_FOLDS
        ]

    def test_standard_protocol_rejects_other_k(self, make_clip):
        """Test the published split only exists as five folds."""
        pairs = [p for fold in SBU_STANDARD_FOLDS for p in fold]
        with pytest.raises(ConfigError, match="k=3"):
            make_folds(self._clips(make_clip, pairs), k=3, protocol=FoldProtocol.SBU_STANDARD)

    def test_standard_protocol_missing_pairs(self, make_clip):
        """Test the published split needs its pairs."""
        with pytest.raises(ConfigError):
            make_folds(self._clips(make_clip, ["s01s02"] * 5), protocol=FoldProtocol.SBU_STANDARD)


class TestSplitAndCollate:
    """Tests for train_test_split and collate."""

    def test_stratified_split(self, synthetic_clips):
        """Test each class keeps its share in the test set."""
        train, test = train_test_split(synthetic_clips, 0.25, seed=0)
        assert len(test) == 4
        assert sorted(c.label for c in test) == [0, 1, 2, 3]
        assert len(train) + len(test) == len(synthetic_clips)

    def test_padding(self, make_clip):
        """Test zero padding and the pad mask."""
        batch = collate([make_clip(np.ones((3, 4, 2, 5))), make_clip(np.ones((3, 2, 2, 5)), label=1)])
        assert batch.data.shape == (2, 3, 4, 2, 5)
        assert batch.pad_mask.tolist() == [[1, 1, 1, 1], [1, 1, 0, 0]]
        assert torch.all(batch.data[1, :, 2:] == 0)
        assert batch.labels.tolist() == [0, 1]

    def test_fixed_length_resampling(self, make_clip):
        """Test linear resampling keeps endpoints and fills every frame."""
        coords = np.zeros((3, 3, 2, 5))
        coords[0, :, :, :] = np.array([0.0, 1.0, 2.0])[:, None, None]
        batch = collate([make_clip(coords + 1.0)], fixed_length=5)
        assert batch.pad_mask.sum().item() == 5
        np.testing.assert_allclose(batch.data[0, 0, :, 0, 0].numpy(), [1.0, 1.5, 2.0, 2.5, 3.0])

    def test_joint_count_mismatch(self, make_clip):
        """Test clips with different skeletons cannot share a batch."""
        with pytest.raises(DataError):
            collate([make_clip(np.ones((3, 2, 2, 5))), make_clip(np.ones((3, 2, 2, 6)))])

    def test_sequence_properties(self):
        """Test frames and joints accessors."""
        clip = SkeletonSequence(coords=np.ones((3, 6, 2, 4)), label=0, subject_id="x")
        assert (clip.frames, clip.joints) == (6, 4)
