"""Cross-person attention between active joints of the same frame.

Queries of one person attend to the keys of the other person; inactive key
joints are excluded through an additive log-gate on the logits and inactive
query joints receive no update. The joint axis keeps its full size.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
from torch import nn

from src.exceptions import ContractError, ShapeError
from src.tensor_ops import softmax

logger = logging.getLogger(__name__)


@dataclass
class AttentionRecord:
    """Attention maps ``[B, M, T, N, N]`` and attended values ``[B, M, d_v, T, N]``.

    ``maps[:, p]`` are person ``p``'s queries over the other person's keys.
    """

    maps: torch.Tensor
    outputs: torch.Tensor


def log_gate_from_mask(masks: torch.Tensor) -> torch.Tensor:
    """``0`` where a joint is active and ``-inf`` elsewhere."""
    return torch.zeros_like(masks).masked_fill(masks <= 0, float("-inf"))


class ExternalAttention(nn.Module):
    """Single-head attention with projections shared by all joints and both persons."""

    def __init__(self, channels: int, d_qk: int, d_v: int) -> None:
        super().__init__()
        self.query = nn.Linear(channels, d_qk, bias=False)
        self.key = nn.Linear(channels, d_qk, bias=False)
        self.value = nn.Linear(channels, d_v, bias=False)
        self.output = nn.Linear(d_v, channels)
        self.scale = 1.0 / math.sqrt(d_qk)

    def forward(
        self,
        x: torch.Tensor,
        gate: torch.Tensor,
        log_gate: Optional[torch.Tensor] = None,
        pad_mask: Optional[torch.Tensor] = None,
    ) -> Tuple[torch.Tensor, AttentionRecord]:
        if x.dim() != 5 or x.shape[3] != 2:
            raise ShapeError(f"external attention expects [B, C, T, 2, N], got {tuple(x.shape)}")
        b, _, t, m, n = x.shape
        if gate.shape != (b, m, n):
            raise ShapeError(f"gate {tuple(gate.shape)} does not match features {tuple(x.shape)}")
        if bool((gate.detach().sum(dim=-1) <= 0).any()):
            raise ContractError("every person needs at least one active joint")
        if log_gate is None:
            log_gate = log_gate_from_mask(gate)

        feats = x.permute(0, 3, 2, 4, 1)  # [B, M, T, N, C]
        q = self.query(feats)
        k = self.key(feats).flip(1)
        v = self.value(feats).flip(1)
        key_bias = log_gate.flip(1)[:, :, None, None, :]

        scores = torch.einsum("bmtid,bmtjd->bmtij", q, k) * self.scale + key_bias
        attn = softmax(scores, axis=-1)
        attended = torch.einsum("bmtij,bmtjd->bmtid", attn, v)

        query_gate = gate[:, :, None, :, None]
        if pad_mask is not None:
            query_gate = query_gate * pad_mask[:, None, :, None, None]
        update = self.output(attended) * query_gate
        y = x + update.permute(0, 4, 2, 1, 3)
        record = AttentionRecord(maps=attn * query_gate, outputs=attended.permute(0, 1, 4, 2, 3))
        return y, record


def ea_forward(
    x: torch.Tensor,
    masks: torch.Tensor,
    module: ExternalAttention,
    log_masks: Optional[torch.Tensor] = None,
    pad_mask: Optional[torch.Tensor] = None,
) -> Tuple[torch.Tensor, AttentionRecord]:
    """Apply ``module`` to ``x[B, C, T, 2, N]`` under per-person joint masks ``[B, 2, N]``."""
    return module(x, masks, log_masks, pad_mask)


def concat_persons(y: torch.Tensor, masks: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Reorder ``[B, C, T, M, N]`` to ``[B, C, T, N, M]``; masks follow as ``[B, N, M]``."""
    return y.permute(0, 1, 2, 4, 3), masks.permute(0, 2, 1)
