"""The full two-person network, its objective and parameter accounting."""

import logging
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from src.atnac import (
    NodeAmplitudeSelector,
    NodeSelection,
    frame_speeds,
    frame_variance,
    joint_energy,
    temporal_weights,
)
from src.attention import AttentionRecord, ExternalAttention, concat_persons
from src.exceptions import ConfigError, DataError
from src.graph import SkeletonGraph, graph_for, init_adjacency
from src.intra_gcn import IntraPersonEncoder, split_persons
from src.models import AseaConfig, ParameterCount, SelectionStrategy
from src.temporal import MultiScaleTemporal
from src.tensor_ops import DTYPE

logger = logging.getLogger(__name__)

PERSONS = 2


class ForwardOutput(NamedTuple):
    """Logits plus the intermediate records exported for inspection."""

    logits: torch.Tensor
    selection: Optional[NodeSelection]
    record: Optional[AttentionRecord]
    gate: torch.Tensor


class LossParts(NamedTuple):
    """Classification loss, threshold regularizer and their sum."""

    task: torch.Tensor
    reg: torch.Tensor
    total: torch.Tensor


class AseaNetwork(nn.Module):
    """Encoder, joint selection, cross-person attention, temporal module and classifier."""

    def __init__(self, config: AseaConfig, graph: SkeletonGraph) -> None:
        super().__init__()
        self.config = config
        self.graph = graph
        channels = config.feature_channels
        self.encoder = IntraPersonEncoder(config, init_adjacency(graph))
        self.selector: Optional[NodeAmplitudeSelector] = None
        if config.selection != SelectionStrategy.NONE:
            self.selector = NodeAmplitudeSelector.from_config(config)
        self.attention: Optional[ExternalAttention] = None
        if config.use_attention:
            self.attention = ExternalAttention(channels, config.query_dim, config.value_dim)
        self.temporal = MultiScaleTemporal(
            channels,
            channels,
            kernel_size=config.temporal_kernel,
            dilations=config.dilations,
            double_tconv=config.double_tconv,
        )
        self.classifier = nn.Linear(channels, config.num_classes)

    @property
    def alpha_thresh(self) -> Optional[torch.Tensor]:
        """The learnable selection threshold, if the model selects joints."""
        return self.selector.alpha_thresh if self.selector is not None else None

    def _check_input(self, data: torch.Tensor) -> None:
        expected = (self.config.in_channels, PERSONS, self.graph.n_joints)
        if data.dim() != 5 or (data.shape[1], data.shape[3], data.shape[4]) != expected:
            raise ConfigError(
                f"input {tuple(data.shape)} does not match [B, {expected[0]}, T, {PERSONS}, {expected[2]}]"
            )

    def select(
        self, data: torch.Tensor, features: torch.Tensor, pad_mask: torch.Tensor
    ) -> Optional[NodeSelection]:
        """Per-person joint selection over rows ``b*M + m``."""
        if self.selector is None:
            return None
        frame_mask = pad_mask.repeat_interleave(PERSONS, dim=0)
        if self.config.selection == SelectionStrategy.VELOCITY:
            return self.selector.from_coords(split_persons(data), frame_mask)
        return self.selector.from_features(split_persons(features), frame_mask)

    def forward(self, data: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> ForwardOutput:
        self._check_input(data)
        batch, _, frames, persons, joints = data.shape
        if pad_mask is None:
            pad_mask = torch.ones(batch, frames, dtype=data.dtype)

        features = self.encoder(data, pad_mask)
        selection = self.select(data, features, pad_mask)
        if selection is None:
            gate = torch.ones(batch, persons, joints, dtype=features.dtype)
            log_gate = torch.zeros_like(gate)
        else:
            gate = selection.gate.reshape(batch, persons, joints)
            log_gate = selection.log_gate.reshape(batch, persons, joints)

        record = None
        if self.attention is not None:
            features, record = self.attention(features, gate, log_gate, pad_mask)

        stacked, node_gate = concat_persons(features, gate)
        columns = stacked.reshape(batch, stacked.shape[1], frames, joints * persons)
        hidden = self.temporal(columns, pad_mask)

        weights = pad_mask[:, None, :, None] * node_gate.reshape(batch, 1, 1, joints * persons)
        pooled = (hidden * weights).sum(dim=(2, 3)) / weights.sum(dim=(2, 3)).clamp_min(1e-12)
        return ForwardOutput(self.classifier(pooled), selection, record, gate)


def build_model(
    config: AseaConfig, graph: Optional[SkeletonGraph] = None, seed: Optional[int] = None
) -> AseaNetwork:
    """Instantiate a float64 network; ``seed`` makes initialization reproducible."""
    if seed is not None:
        torch.manual_seed(seed)
    if graph is None:
        graph = graph_for(config.skeleton, config.custom_graph_path)
    return AseaNetwork(config, graph).to(DTYPE)


def asea_loss(
    logits: torch.Tensor,
    labels: torch.Tensor,
    alpha_thresh: Optional[torch.Tensor],
    config: AseaConfig,
) -> LossParts:
    """Mean cross-entropy plus ``lambda * (alpha_thresh - alpha_target)^2``."""
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= logits.shape[-1]):
        raise DataError(
            f"labels must lie in [0, {logits.shape[-1] - 1}], got range "
            f"[{int(labels.min())}, {int(labels.max())}]"
        )
    task = F.cross_entropy(logits, labels)
    if alpha_thresh is None:
        reg = torch.zeros((), dtype=logits.dtype)
    else:
        reg = config.lambda_reg * (alpha_thresh - config.alpha_target) ** 2
    return LossParts(task, reg, task + reg)


def count_module_params(model: nn.Module) -> ParameterCount:
    """Trainable scalars per top-level child module."""
    by_module: Dict[str, int] = {}
    for name, child in model.named_children():
        by_module[name] = sum(p.numel() for p in child.parameters() if p.requires_grad)
    return ParameterCount(total=sum(by_module.values()), by_module=by_module)


def count_params(config: AseaConfig, graph: Optional[SkeletonGraph] = None) -> ParameterCount:
    """Parameter count of the network a configuration describes."""
    return count_module_params(build_model(config, graph))


@dataclass
class NodeCurves:
    """Per-person joint curves of one clip.

    ``velocity`` is ``[M, T-1, N]`` raw joint speed; ``energy`` is
    ``[M, T, N]`` feature energy scaled by its temporal weight.
    """

    velocity: np.ndarray
    energy: np.ndarray


@torch.no_grad()
def node_curves(model: AseaNetwork, data: torch.Tensor) -> NodeCurves:
    """Velocity and weighted feature-energy curves for a single clip ``[1, 3, T, M, N]``."""
    if data.shape[0] != 1:
        raise ConfigError(f"node_curves takes one clip, got batch of {data.shape[0]}")
    was_training = model.training
    model.eval()
    try:
        model._check_input(data)
        frames = data.shape[2]
        pad_mask = torch.ones(1, frames, dtype=data.dtype)
        features = split_persons(model.encoder(data, pad_mask))
        energies = joint_energy(features)
        weights = temporal_weights(frame_variance(energies), model.config.gamma)
        speeds, _ = frame_speeds(split_persons(data))
    finally:
        model.train(was_training)
    return NodeCurves(
        velocity=speeds.cpu().numpy(),
        energy=(weights[:, :, None] * energies).cpu().numpy(),
    )
