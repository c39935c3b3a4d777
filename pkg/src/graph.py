"""Skeleton graphs and the normalized adjacency that seeds the spatial encoder."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from src.exceptions import ConfigError
from src.models import SkeletonKind
from src.tensor_ops import DTYPE

SBU15_NAMES = [
    "head", "neck", "torso",
    "left_shoulder", "left_elbow", "left_hand",
    "right_shoulder", "right_elbow", "right_hand",
    "left_hip", "left_knee", "left_foot",
    "right_hip", "right_knee", "right_foot",
]  # fmt: skip
SBU15_EDGES = [
    (0, 1), (1, 2), (1, 3), (3, 4), (4, 5), (1, 6), (6, 7),
    (7, 8), (2, 9), (9, 10), (10, 11), (2, 12), (12, 13), (13, 14),
]  # fmt: skip

NTU25_NAMES = [
    "spine_base", "spine_mid", "neck", "head",
    "left_shoulder", "left_elbow", "left_wrist", "left_hand",
    "right_shoulder", "right_elbow", "right_wrist", "right_hand",
    "left_hip", "left_knee", "left_ankle", "left_foot",
    "right_hip", "right_knee", "right_ankle", "right_foot",
    "spine_shoulder", "left_hand_tip", "left_thumb", "right_hand_tip", "right_thumb",
]  # fmt: skip
_NTU25_EDGES_1BASED = [
    (1, 2), (2, 21), (3, 21), (4, 3), (5, 21), (6, 5), (7, 6), (8, 7),
    (9, 21), (10, 9), (11, 10), (12, 11), (13, 1), (14, 13), (15, 14), (16, 15),
    (17, 1), (18, 17), (19, 18), (20, 19), (22, 23), (23, 8), (24, 25), (25, 12),
]  # fmt: skip
NTU25_EDGES = [(i - 1, j - 1) for i, j in _NTU25_EDGES_1BASED]


@dataclass(frozen=True)
class SkeletonGraph:
    """Joint names, bone list and the joint pair that defines torso length."""

    n_joints: int
    edges: List[Tuple[int, int]]
    names: List[str] = field(default_factory=list)
    torso: Tuple[int, int] = (0, 1)

    def __post_init__(self) -> None:
        if self.n_joints < 1:
            raise ConfigError(f"a skeleton needs at least one joint, got {self.n_joints}")
        for i, j in list(self.edges) + [self.torso]:
            if not (0 <= i < self.n_joints and 0 <= j < self.n_joints):
                raise ConfigError(
                    f"edge ({i}, {j}) references a joint outside 0..{self.n_joints - 1}"
                )
        if self.names and len(self.names) != self.n_joints:
            raise ConfigError(f"{len(self.names)} joint names given for {self.n_joints} joints")
        if not is_connected(self.n_joints, self.edges):
            raise ConfigError("skeleton graph must be connected")


def is_connected(n_joints: int, edges: Sequence[Tuple[int, int]]) -> bool:
    """Union-find connectivity test."""
    parent = list(range(n_joints))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in edges:
        parent[find(i)] = find(j)
    return len({find(i) for i in range(n_joints)}) == 1


def build_graph(
    kind: SkeletonKind | str,
    edges: Optional[Sequence[Tuple[int, int]]] = None,
    n_joints: Optional[int] = None,
    names: Optional[List[str]] = None,
    torso: Tuple[int, int] = (0, 1),
) -> SkeletonGraph:
    """Return the bone list of a named skeleton, or validate a custom one."""
    try:
        kind = SkeletonKind(kind)
    except ValueError as e:
        raise ConfigError(f"unknown skeleton kind '{kind}'") from e

    if kind == SkeletonKind.SBU15:
        return SkeletonGraph(15, list(SBU15_EDGES), list(SBU15_NAMES), torso=(1, 2))
    if kind == SkeletonKind.NTU25:
        return SkeletonGraph(25, list(NTU25_EDGES), list(NTU25_NAMES), torso=(0, 20))

    if edges is None:
        raise ConfigError("custom skeleton requires explicit edges")
    edge_list = [(int(i), int(j)) for i, j in edges]
    if n_joints is None:
        n_joints = len(names) if names else 1 + max(max(e) for e in edge_list)
    return SkeletonGraph(n_joints, edge_list, list(names or []), torso=torso)


def load_custom_graph(path: str | Path) -> SkeletonGraph:
    """Read ``{"names": [...], "edges": [[i, j], ...], "torso": [i, j]}``."""
    try:
        document = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read custom skeleton {path}: {e}") from e
    names = document.get("names") or []
    return build_graph(
        SkeletonKind.CUSTOM,
        edges=[tuple(edge) for edge in document.get("edges", [])],
        n_joints=document.get("n_joints", len(names) or None),
        names=names,
        torso=tuple(document.get("torso", (0, 1))),
    )


def graph_for(kind: SkeletonKind, custom_graph_path: Optional[str] = None) -> SkeletonGraph:
    """Resolve the graph named by a model configuration."""
    if kind == SkeletonKind.CUSTOM:
        if not custom_graph_path:
            raise ConfigError("custom skeleton requires a graph file")
        return load_custom_graph(custom_graph_path)
    return build_graph(kind)


def init_adjacency(graph: SkeletonGraph) -> torch.Tensor:
    """Symmetrically normalized adjacency with self-loops, ``D^-1/2 (A + I) D^-1/2``."""
    adjacency = np.eye(graph.n_joints)
    for i, j in graph.edges:
        adjacency[i, j] = 1.0
        adjacency[j, i] = 1.0
    inv_sqrt_degree = 1.0 / np.sqrt(adjacency.sum(axis=1))
    normalized = adjacency * inv_sqrt_degree[:, None] * inv_sqrt_degree[None, :]
    return torch.tensor(normalized, dtype=DTYPE)
