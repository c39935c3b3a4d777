"""Four-branch multi-scale temporal module.

Three branches reduce channels, run a dilated temporal convolution and a
stride-1 max-pool; the fourth is a pointwise reduction only. Branch outputs are
concatenated in fixed order. Nothing here mixes joints.
"""

import logging
import math
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from src.exceptions import ConfigError
from src.tensor_ops import DTYPE, temporal_conv

logger = logging.getLogger(__name__)

POOL_WINDOW = 3


def mask_frames(x: torch.Tensor, frame_mask: Optional[torch.Tensor]) -> torch.Tensor:
    """Zero the padded frames of ``x[B, C, T, N]``; ``frame_mask`` is ``[B, T]``."""
    if frame_mask is None:
        return x
    return x * frame_mask[:, None, :, None]


def masked_max_pool(x: torch.Tensor, frame_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Stride-1 temporal max-pool that never picks a padded frame."""
    if frame_mask is not None:
        padded = (frame_mask[:, None, :, None] == 0).expand_as(x)
        x = x.masked_fill(padded, float("-inf"))
    pooled = F.max_pool2d(x, (POOL_WINDOW, 1), stride=1, padding=(POOL_WINDOW // 2, 0))
    if frame_mask is not None:
        pooled = pooled.masked_fill(padded, 0.0)
    return pooled


class TemporalConv(nn.Module):
    """Learned dilated convolution along time, ``C_in -> C_out``."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, dilation: int = 1) -> None:
        super().__init__()
        bound = 1.0 / math.sqrt(in_channels * kernel_size)
        self.weight = nn.Parameter(
            torch.empty(out_channels, in_channels, kernel_size, dtype=DTYPE).uniform_(-bound, bound)
        )
        self.bias = nn.Parameter(torch.zeros(out_channels, dtype=DTYPE))
        self.dilation = dilation

    def forward(self, x: torch.Tensor, frame_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        return temporal_conv(mask_frames(x, frame_mask), self.weight, self.dilation, bias=self.bias)


class ConvBranch(nn.Module):
    """1x1 reduce -> norm/ReLU -> dilated temporal conv(s) -> max-pool -> norm."""

    def __init__(
        self,
        in_channels: int,
        branch_channels: int,
        kernel_size: int,
        dilation: int,
        double_tconv: bool = False,
    ) -> None:
        super().__init__()
        self.reduce = nn.Conv2d(in_channels, branch_channels, 1)
        self.reduce_norm = nn.BatchNorm2d(branch_channels)
        self.tconv = TemporalConv(branch_channels, branch_channels, kernel_size, dilation)
        self.mid_norm: Optional[nn.BatchNorm2d] = None
        self.tconv2: Optional[TemporalConv] = None
        if double_tconv:
            self.mid_norm = nn.BatchNorm2d(branch_channels)
            self.tconv2 = TemporalConv(branch_channels, branch_channels, kernel_size, 2 * dilation)
        self.out_norm = nn.BatchNorm2d(branch_channels)

    def forward(self, x: torch.Tensor, frame_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        h = F.relu(self.reduce_norm(self.reduce(x)))
        h = self.tconv(h, frame_mask)
        if self.tconv2 is not None and self.mid_norm is not None:
            h = self.tconv2(F.relu(self.mid_norm(h)), frame_mask)
        h = masked_max_pool(h, frame_mask)
        return self.out_norm(h)


class PointwiseBranch(nn.Module):
    """1x1 channel reduction followed by normalization."""

    def __init__(self, in_channels: int, branch_channels: int) -> None:
        super().__init__()
        self.reduce = nn.Conv2d(in_channels, branch_channels, 1)
        self.norm = nn.BatchNorm2d(branch_channels)

    def forward(self, x: torch.Tensor, frame_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        return self.norm(self.reduce(x))


class MultiScaleTemporal(nn.Module):
    """Concatenation of three dilated branches and one pointwise branch."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 5,
        dilations: Sequence[int] = (1, 2, 3),
        double_tconv: bool = False,
    ) -> None:
        super().__init__()
        if out_channels % 4 != 0:
            raise ConfigError(f"temporal output channels must be divisible by 4, got {out_channels}")
        branch_channels = out_channels // 4
        self.out_channels = out_channels
        self.branches = nn.ModuleList(
            [
                ConvBranch(in_channels, branch_channels, kernel_size, d, double_tconv)
                for d in dilations
            ]
        )
        self.branches.append(PointwiseBranch(in_channels, branch_channels))

    def forward(self, x: torch.Tensor, frame_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        out = torch.cat([branch(x, frame_mask) for branch in self.branches], dim=1)
        return mask_frames(out, frame_mask)


def ms_temporal_forward(
    x: torch.Tensor, module: MultiScaleTemporal, frame_mask: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """Apply a multi-scale temporal module to ``x[B, C, T, N]``."""
    return module(x, frame_mask)
