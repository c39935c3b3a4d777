"""Adaptive temporal node amplitude calculation and active-joint selection.

Per-frame joint energies are weighted over time by a softmax of their
across-joint variance, aggregated into one amplitude per joint, and compared
against a sample-specific threshold ``mean + alpha_thresh * std``. At least one
joint is always active. A velocity-based variant replaces feature energies with
raw frame-to-frame joint speeds.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from src.exceptions import ConfigError, SequenceLengthError, ShapeError
from src.models import AseaConfig, SelectionStrategy
from src.tensor_ops import DTYPE, l2_norm, masked_softmax

logger = logging.getLogger(__name__)

BETA_FLOOR = 1e-6


def joint_energy(x: torch.Tensor) -> torch.Tensor:
    """``E[b, t, n]``: Euclidean norm of ``x[B, C, T, N]`` over channels."""
    return l2_norm(x, axis=1)


def frame_variance(energies: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Population variance over joints per frame; padded frames are ``-inf``."""
    mean = energies.mean(dim=-1, keepdim=True)
    variance = ((energies - mean) ** 2).mean(dim=-1)
    if pad_mask is not None:
        variance = variance.masked_fill(pad_mask == 0, float("-inf"))
    return variance


def temporal_weights(
    variance: torch.Tensor, gamma: float, pad_mask: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """Softmax of ``gamma * V`` over real frames; padded frames get exactly 0."""
    if gamma < 0:
        raise ConfigError(f"gamma must be non-negative, got {gamma}")
    valid = torch.isfinite(variance)
    if pad_mask is not None:
        valid = valid & (pad_mask > 0)
    logits = gamma * variance.masked_fill(~valid, 0.0)
    return masked_softmax(logits, valid, axis=-1)


def node_amplitude(energies: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """``S[b, n] = sum_t W[b, t] * E[b, t, n]``."""
    if energies.shape[:2] != weights.shape:
        raise ShapeError(
            f"amplitude mismatch: energies {tuple(energies.shape)} and weights {tuple(weights.shape)}"
        )
    return torch.einsum("bt,btn->bn", weights, energies)


class ActiveSet(NamedTuple):
    """Threshold statistics and the hard selection of one batch."""

    mean: torch.Tensor
    std: torch.Tensor
    threshold: torch.Tensor
    mask: torch.Tensor
    top: torch.Tensor
    fallback: torch.Tensor


def select_active(amplitudes: torch.Tensor, alpha_thresh: torch.Tensor | float) -> ActiveSet:
    """Mark joints whose amplitude strictly exceeds ``mean + alpha_thresh * std``.

    When no joint qualifies the highest-amplitude joint (lowest index on ties)
    is marked instead.
    """
    n = amplitudes.shape[-1]
    mean = amplitudes.mean(dim=-1)
    std = l2_norm(amplitudes - mean[:, None], axis=-1) / math.sqrt(n)
    threshold = mean + alpha_thresh * std
    passed = amplitudes > threshold[:, None]
    top = torch.argmax(amplitudes, dim=-1)
    fallback = ~passed.any(dim=-1)
    mask = passed.clone()
    mask[torch.arange(amplitudes.shape[0]), top] = True
    return ActiveSet(mean, std, threshold, mask.to(amplitudes.dtype), top, fallback)


def soft_mask(
    amplitudes: torch.Tensor, threshold: torch.Tensor, beta: torch.Tensor | float
) -> torch.Tensor:
    """``sigmoid((S - tau) / beta)``, the differentiable stand-in for the strict test."""
    beta_t = torch.as_tensor(beta, dtype=amplitudes.dtype)
    if bool((beta_t <= 0).any()):
        raise ConfigError(f"soft-mask temperature must be positive, got {beta}")
    if beta_t.dim() == 1:
        beta_t = beta_t[:, None]
    return torch.sigmoid((amplitudes - threshold[:, None]) / beta_t)


def frame_speeds(
    coords: torch.Tensor, pad_mask: Optional[torch.Tensor] = None
) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
    """Joint speeds ``[B, T-1, N]`` from raw ``coords[B, 3, T, N]`` and their frame mask."""
    if coords.shape[2] < 2:
        raise SequenceLengthError(f"velocity needs at least 2 frames, got {coords.shape[2]}")
    speeds = l2_norm(coords[:, :, 1:] - coords[:, :, :-1], axis=1)
    speed_mask = None
    if pad_mask is not None:
        speed_mask = pad_mask[:, 1:] * pad_mask[:, :-1]
    return speeds, speed_mask


def velocity_amplitude(
    coords: torch.Tensor, gamma: float = 1.0, pad_mask: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """Amplitudes computed from joint speeds in place of feature energies."""
    speeds, speed_mask = frame_speeds(coords, pad_mask)
    weights = temporal_weights(frame_variance(speeds, speed_mask), gamma, speed_mask)
    return node_amplitude(speeds, weights)


@dataclass
class NodeSelection:
    """Everything computed while selecting active joints, leading axis ``B*M``.

    ``gate`` multiplies queries and pooling weights; ``log_gate`` biases the
    attention key logits. In hard mode they are the binary mask and ``0/-inf``.
    """

    energies: torch.Tensor
    variance: torch.Tensor
    weights: torch.Tensor
    amplitudes: torch.Tensor
    mean: torch.Tensor
    std: torch.Tensor
    threshold: torch.Tensor
    mask: torch.Tensor
    gate: torch.Tensor
    log_gate: torch.Tensor

    def active_indices(self, row: int) -> list[int]:
        """Indices of active joints in one row."""
        return [int(i) for i in torch.nonzero(self.mask[row] > 0).flatten()]


class NodeAmplitudeSelector(nn.Module):
    """Holds the learnable ``alpha_thresh`` and produces :class:`NodeSelection` records."""

    def __init__(
        self,
        gamma: float = 1.0,
        alpha_init: float = 0.5,
        beta: float = 0.1,
        relaxation: bool = True,
        strategy: SelectionStrategy = SelectionStrategy.ATNAC,
    ) -> None:
        super().__init__()
        if gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {gamma}")
        if beta <= 0:
            raise ConfigError(f"beta must be positive, got {beta}")
        self.gamma = gamma
        self.beta = beta
        self.relaxation = relaxation
        self.strategy = strategy
        self.alpha_thresh = nn.Parameter(torch.tensor(float(alpha_init), dtype=DTYPE))

    @classmethod
    def from_config(cls, config: AseaConfig) -> "NodeAmplitudeSelector":
        """Build the selector described by a model configuration."""
        return cls(
            gamma=config.gamma,
            alpha_init=config.alpha_init,
            beta=config.beta,
            relaxation=config.relaxation,
            strategy=config.selection,
        )

    def select(self, energies: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> NodeSelection:
        """Run the full selection on per-frame energies ``[B, T, N]``."""
        variance = frame_variance(energies, pad_mask)
        weights = temporal_weights(variance, self.gamma, pad_mask)
        amplitudes = node_amplitude(energies, weights)
        active = select_active(amplitudes, self.alpha_thresh)
        rows = torch.arange(amplitudes.shape[0])

        if self.training and self.relaxation:
            beta = (self.beta * active.std).clamp_min(BETA_FLOOR)
            scaled = (amplitudes - active.threshold[:, None]) / beta[:, None]
            keep = torch.zeros_like(active.mask, dtype=torch.bool)
            keep[rows, active.top] = True
            gate = torch.where(keep, torch.ones_like(scaled), torch.sigmoid(scaled))
            log_gate = torch.where(keep, torch.zeros_like(scaled), F.logsigmoid(scaled))
        else:
            gate = active.mask
            log_gate = torch.zeros_like(gate).masked_fill(gate == 0, float("-inf"))

        return NodeSelection(
            energies=energies,
            variance=variance,
            weights=weights,
            amplitudes=amplitudes,
            mean=active.mean,
            std=active.std,
            threshold=active.threshold,
            mask=active.mask,
            gate=gate,
            log_gate=log_gate,
        )

    def from_features(self, features: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> NodeSelection:
        """Selection driven by encoder features ``[B, C, T, N]``."""
        return self.select(joint_energy(features), pad_mask)

    def from_coords(self, coords: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> NodeSelection:
        """Selection driven by raw joint speeds of ``coords[B, 3, T, N]``."""
        speeds, speed_mask = frame_speeds(coords, pad_mask)
        return self.select(speeds, speed_mask)
