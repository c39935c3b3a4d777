"""Per-person spatial encoder with channel-wise topology refinement.

Each block learns a shared adjacency ``A`` and, from temporally pooled
features, a per-sample channel-specific correlation ``Q``; the refined topology
``R = A + alpha_refine * Q`` aggregates neighbour features channel by channel.
Both persons go through the same blocks.
"""

import logging
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from src.exceptions import ShapeError
from src.models import AseaConfig, EncoderKind
from src.tensor_ops import DTYPE
from src.temporal import MultiScaleTemporal, mask_frames

logger = logging.getLogger(__name__)


def temporal_mean(x: torch.Tensor, frame_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Mean of ``x[B, C, T, N]`` over real frames, giving ``[B, C, N]``."""
    if frame_mask is None:
        return x.mean(dim=2)
    weights = frame_mask[:, None, :, None]
    return (x * weights).sum(dim=2) / weights.sum(dim=2).clamp_min(1.0)


def channel_correlation(
    x: torch.Tensor,
    psi: nn.Conv1d,
    phi: nn.Conv1d,
    delta: nn.Conv2d,
    frame_mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Per-sample ``Q[B, N, N, C']`` with ``q_ij = delta(tanh(psi(x_i) - phi(x_j)))``."""
    pooled = temporal_mean(x, frame_mask)
    left = psi(pooled)
    right = phi(pooled)
    diff = torch.tanh(left.unsqueeze(-1) - right.unsqueeze(-2))
    return delta(diff).permute(0, 2, 3, 1)


def refine_topology(
    adjacency: torch.Tensor, correlation: torch.Tensor, alpha_refine: torch.Tensor | float
) -> torch.Tensor:
    """``R[b, i, j, c] = A[i, j] + alpha_refine * Q[b, i, j, c]``."""
    n = adjacency.shape[0]
    if adjacency.shape != (n, n) or correlation.shape[1:3] != (n, n):
        raise ShapeError(
            f"topology mismatch: A {tuple(adjacency.shape)} and Q {tuple(correlation.shape)}"
        )
    return adjacency[None, :, :, None] + alpha_refine * correlation


def spatial_aggregate(
    x: torch.Tensor,
    topology: torch.Tensor,
    feature: nn.Module,
    norm: nn.Module,
    frame_mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """``out[b, c, t, i] = sum_j R[b, i, j, c] * feature(x)[b, c, t, j]``, then norm and ReLU."""
    embedded = feature(x)
    if topology.shape[-1] != embedded.shape[1] or topology.shape[1] != embedded.shape[-1]:
        raise ShapeError(
            f"aggregate mismatch: R {tuple(topology.shape)} and features {tuple(embedded.shape)}"
        )
    out = torch.einsum("bijc,bctj->bcti", topology, embedded)
    return mask_frames(F.relu(norm(out)), frame_mask)


class ChannelTopologyGraphConv(nn.Module):
    """Spatial graph convolution over one person's joints."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        adjacency: torch.Tensor,
        reduction_ratio: int = 2,
        alpha_refine_init: float = 0.1,
        refine: bool = True,
    ) -> None:
        super().__init__()
        self.refine = refine
        self.reduced_channels = max(in_channels // reduction_ratio, 1)
        self.adjacency = nn.Parameter(adjacency.detach().clone().to(DTYPE))
        if refine:
            self.psi = nn.Conv1d(in_channels, self.reduced_channels, 1)
            self.phi = nn.Conv1d(in_channels, self.reduced_channels, 1)
            self.delta = nn.Conv2d(self.reduced_channels, out_channels, 1)
            self.alpha_refine = nn.Parameter(torch.tensor(float(alpha_refine_init), dtype=DTYPE))
        self.feature = nn.Conv2d(in_channels, out_channels, 1)
        self.norm = nn.BatchNorm2d(out_channels)
        self.out_channels = out_channels

    def topology(self, x: torch.Tensor, frame_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Refined ``R[B, N, N, C']`` for the batch (``R = A`` for the plain variant)."""
        if not self.refine:
            n = self.adjacency.shape[0]
            return self.adjacency[None, :, :, None].expand(x.shape[0], n, n, self.out_channels)
        correlation = channel_correlation(x, self.psi, self.phi, self.delta, frame_mask)
        return refine_topology(self.adjacency, correlation, self.alpha_refine)

    def forward(self, x: torch.Tensor, frame_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        return spatial_aggregate(x, self.topology(x, frame_mask), self.feature, self.norm, frame_mask)


class EncoderBlock(nn.Module):
    """Spatial aggregation, multi-scale temporal module and a residual add."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        adjacency: torch.Tensor,
        config: AseaConfig,
    ) -> None:
        super().__init__()
        self.gcn = ChannelTopologyGraphConv(
            in_channels,
            out_channels,
            adjacency,
            reduction_ratio=config.reduction_ratio,
            alpha_refine_init=config.alpha_refine_init,
            refine=config.encoder_kind == EncoderKind.CTR,
        )
        self.tcn = MultiScaleTemporal(
            out_channels,
            out_channels,
            kernel_size=config.temporal_kernel,
            dilations=config.dilations,
            double_tconv=config.double_tconv,
        )
        self.residual: nn.Module = (
            nn.Identity() if in_channels == out_channels else nn.Conv2d(in_channels, out_channels, 1)
        )

    def forward(self, x: torch.Tensor, frame_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        h = self.tcn(self.gcn(x, frame_mask), frame_mask)
        return mask_frames(F.relu(h + self.residual(x)), frame_mask)


def split_persons(x: torch.Tensor) -> torch.Tensor:
    """``[B, C, T, M, N]`` -> ``[B*M, C, T, N]`` with row ``b*M + m``."""
    b, c, t, m, n = x.shape
    return x.permute(0, 3, 1, 2, 4).reshape(b * m, c, t, n)


def merge_persons(x: torch.Tensor, persons: int) -> torch.Tensor:
    """Inverse of :func:`split_persons`."""
    bm, c, t, n = x.shape
    return x.reshape(bm // persons, persons, c, t, n).permute(0, 2, 3, 1, 4)


def encoder_forward(
    x: torch.Tensor,
    blocks: Sequence[EncoderBlock],
    pad_mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Run both persons of ``x[B, C, T, M, N]`` through the same blocks."""
    persons = x.shape[3]
    h = split_persons(x)
    frame_mask = pad_mask.repeat_interleave(persons, dim=0) if pad_mask is not None else None
    for block in blocks:
        h = block(h, frame_mask)
    return merge_persons(h, persons)


class IntraPersonEncoder(nn.Module):
    """Stack of encoder blocks with widths taken from the configuration."""

    def __init__(self, config: AseaConfig, adjacency: torch.Tensor) -> None:
        super().__init__()
        widths = [config.in_channels] + list(config.channels)
        self.blocks = nn.ModuleList(
            [EncoderBlock(c_in, c_out, adjacency, config) for c_in, c_out in zip(widths, widths[1:])]
        )

    def forward(self, x: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        return encoder_forward(x, list(self.blocks), pad_mask)
