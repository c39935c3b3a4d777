"""Test configuration and fixtures."""

import os
import sys

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

import pytest
import torch
from pydantic_settings import SettingsConfigDict

from src.config import Settings
from src.dataset import SkeletonSequence
from src.gradcheck import tiny_config, tiny_graph
from src.models import AseaConfig, SynthSpec, TrainSpec
from src.network import build_model
from src.repository import CorpusRepository
from src.synthetic import synthesize
from src.tensor_ops import DTYPE


class TestSettings(Settings):
    """Settings that never read a local .env file."""

    __test__ = False
    model_config = SettingsConfigDict(env_prefix="ASEA_", env_file=None, extra="ignore")


test_settings = TestSettings()


def get_test_settings() -> TestSettings:
    """Get test settings."""
    return test_settings


@pytest.fixture(autouse=True)
def override_settings():
    """Override get_settings for all tests."""
    from src import config as config_module

    original_get_settings = config_module.get_settings
    config_module.get_settings = get_test_settings
    yield
    config_module.get_settings = original_get_settings


@pytest.fixture
def chain_graph():
    """Five-joint chain skeleton."""
    return tiny_graph()


@pytest.fixture
def small_config():
    """Depth-1, three-class configuration on the chain skeleton."""
    return tiny_config()


@pytest.fixture
def small_model(small_config, chain_graph):
    """Seeded float64 network on the chain skeleton."""
    return build_model(small_config, chain_graph, seed=0)


@pytest.fixture
def random_batch():
    """Two chain-skeleton clips of six frames; the second has one padded frame."""
    generator = torch.Generator().manual_seed(7)
    data = torch.randn(2, 3, 6, 2, 5, generator=generator, dtype=DTYPE)
    data[1, :, 5] = 0.0
    pad_mask = torch.ones(2, 6, dtype=DTYPE)
    pad_mask[1, 5] = 0.0
    labels = torch.tensor([0, 2])
    return data, pad_mask, labels


@pytest.fixture
def sbu_config():
    """Narrow four-class configuration on the 15-joint skeleton."""
    return AseaConfig(channels=[8], num_classes=4)


@pytest.fixture
def fast_spec():
    """One short epoch."""
    return TrainSpec(epochs=1, batch_size=8, seed=0)


@pytest.fixture
def synthetic_clips():
    """Sixteen short synthetic clips, four per class, over four pairs."""
    return synthesize(SynthSpec(samples_per_class=4, frames=12, n_pairs=4), seed=0)


@pytest.fixture
def corpus_dir(tmp_path, synthetic_clips):
    """Synthetic clips written as a corpus directory."""
    root = tmp_path / "corpus"
    CorpusRepository(root).save(synthetic_clips, name="synthetic", metadata={"seed": 0})
    return root


@pytest.fixture
def make_clip():
    """Factory building a clip from a ``[3, T, 2, N]`` array."""

    def _make(coords, label=0, subject_id="s01s02", name="clip"):
        return SkeletonSequence(coords=coords, label=label, subject_id=subject_id, name=name)

    return _make
