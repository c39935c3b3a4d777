"""Tests for skeleton graphs and adjacency initialization."""

import json

import numpy as np
import pytest
import torch

from src.exceptions import ConfigError
from src.graph import build_graph, graph_for, init_adjacency, is_connected, load_custom_graph
from src.models import SkeletonKind


class TestBuildGraph:
    """Tests for build_graph."""

    def test_sbu_skeleton(self):
        """Test the 15-joint layout."""
        graph = build_graph("sbu15")
        assert graph.n_joints == 15
        assert len(graph.edges) == 14
        assert graph.names[2] == "torso"

    def test_ntu_skeleton(self):
        """Test the 25-joint layout."""
        graph = build_graph(SkeletonKind.NTU25)
        assert graph.n_joints == 25
        assert len(graph.edges) == 24
        assert is_connected(25, graph.edges)

    def test_unknown_kind(self):
        """Test that unknown kinds are rejected."""
        with pytest.raises(ConfigError, match="unknown skeleton"):
            build_graph("kinect99")

    def test_custom_out_of_range_edge(self):
        """Test an edge referencing a missing joint."""
        with pytest.raises(ConfigError, match="outside"):
            build_graph("custom", edges=[(0, 1), (1, 5)], n_joints=3)

    def test_custom_disconnected(self):
        """Test that disconnected custom graphs are rejected."""
        with pytest.raises(ConfigError, match="connected"):
            build_graph("custom", edges=[(0, 1), (2, 3)], n_joints=4)

    def test_custom_requires_edges(self):
        """Test that a custom kind needs edges."""
        with pytest.raises(ConfigError):
            build_graph("custom")

    def test_graph_for_custom_without_path(self):
        """Test resolving a custom skeleton without a graph file."""
        with pytest.raises(ConfigError):
            graph_for(SkeletonKind.CUSTOM, None)


class TestLoadCustomGraph:
    """Tests for load_custom_graph."""

    def test_round_trip(self, tmp_path):
        """Test reading the JSON form."""
        path = tmp_path / "graph.json"
        path.write_text(json.dumps({"names": ["a", "b", "c"], "edges": [[0, 1], [1, 2]], "torso": [0, 1]}))
        graph = load_custom_graph(path)
        assert graph.n_joints == 3
        assert graph.edges == [(0, 1), (1, 2)]
        assert graph.torso == (0, 1)

    def test_unreadable(self, tmp_path):
        """Test a missing file."""
        with pytest.raises(ConfigError):
            load_custom_graph(tmp_path / "missing.json")


class TestInitAdjacency:
    """Tests for init_adjacency."""

    def test_two_joint_chain(self):
        """Test the closed form for a single bone: every entry is 1/2."""
        adjacency = init_adjacency(build_graph("custom", edges=[(0, 1)], n_joints=2))
        np.testing.assert_allclose(adjacency.numpy(), np.full((2, 2), 0.5), atol=1e-12)

    def test_symmetric_with_unit_spectral_radius(self):
        """Test symmetry and largest eigenvalue 1 of the normalized adjacency."""
        adjacency = init_adjacency(build_graph("sbu15")).numpy()
        np.testing.assert_allclose(adjacency, adjacency.T, atol=1e-12)
        assert np.max(np.abs(np.linalg.eigvalsh(adjacency))) == pytest.approx(1.0, abs=1e-9)

    def test_dtype(self):
        """Test float64 output."""
        assert init_adjacency(build_graph("ntu25")).dtype == torch.float64
