"""Differentiable tensor primitives used by every layer of the network.

All arrays are ``torch.float64`` tensors. Reverse-mode differentiation is
provided by torch's autograd graph: every result of these functions carries a
``grad_fn`` record pointing at its inputs, and :func:`backward` walks that graph
from a scalar root.
"""

import logging
from typing import Any, Dict, Mapping, Optional, Tuple

import torch
import torch.nn.functional as F

from src.exceptions import ContractError, SequenceLengthError, ShapeError

logger = logging.getLogger(__name__)

DTYPE = torch.float64


def _check_axis(x: torch.Tensor, axis: int) -> int:
    if not -x.dim() <= axis < x.dim():
        raise ShapeError(f"axis {axis} out of range for shape {tuple(x.shape)}")
    return axis % x.dim()


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Batched matrix product ``a[..., m, k] @ b[..., k, n]``."""
    if a.dim() < 2 or b.dim() < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul shape mismatch: {tuple(a.shape)} and {tuple(b.shape)}"
        )
    try:
        torch.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except RuntimeError as e:
        raise ShapeError(
            f"matmul leading extents not broadcastable: {tuple(a.shape)} and {tuple(b.shape)}"
        ) from e
    return torch.matmul(a, b)


def softmax(x: torch.Tensor, axis: int) -> torch.Tensor:
    """Numerically stable softmax along ``axis``.

    Entries equal to ``-inf`` receive weight exactly 0 as long as the slice has
    at least one finite entry.
    """
    axis = _check_axis(x, axis)
    shift = x.amax(dim=axis, keepdim=True).detach()
    exp = torch.exp(x - shift)
    return exp / exp.sum(dim=axis, keepdim=True)


def masked_softmax(x: torch.Tensor, mask: torch.Tensor, axis: int) -> torch.Tensor:
    """Softmax over the entries where ``mask`` is true; masked entries get 0.

    Slices with no unmasked entry come back as all zeros.
    """
    axis = _check_axis(x, axis)
    mask = mask.to(torch.bool).expand_as(x)
    filled = x.masked_fill(~mask, float("-inf"))
    shift = filled.amax(dim=axis, keepdim=True).detach()
    shift = torch.where(torch.isfinite(shift), shift, torch.zeros_like(shift))
    exp = torch.exp(filled - shift).masked_fill(~mask, 0.0)
    total = exp.sum(dim=axis, keepdim=True)
    return exp / torch.where(total > 0, total, torch.ones_like(total))


class _SafeNorm(torch.autograd.Function):
    """Euclidean norm whose subgradient at the zero vector is 0."""

    @staticmethod
    def forward(ctx: Any, x: torch.Tensor, axis: int) -> torch.Tensor:
        norm = torch.sqrt((x * x).sum(dim=axis))
        ctx.save_for_backward(x, norm)
        ctx.axis = axis
        return norm

    @staticmethod
    def backward(ctx: Any, grad: torch.Tensor) -> Tuple[Optional[torch.Tensor], None]:
        x, norm = ctx.saved_tensors
        norm = norm.unsqueeze(ctx.axis)
        safe = torch.where(norm > 0, norm, torch.ones_like(norm))
        scale = torch.where(norm > 0, grad.unsqueeze(ctx.axis) / safe, torch.zeros_like(norm))
        return x * scale, None


def l2_norm(x: torch.Tensor, axis: int) -> torch.Tensor:
    """Euclidean norm along ``axis`` (reduced); zero vectors have zero gradient."""
    return _SafeNorm.apply(x, _check_axis(x, axis))


def temporal_conv(
    x: torch.Tensor,
    kernel: torch.Tensor,
    dilation: int = 1,
    stride: int = 1,
    bias: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Dilated 1-D convolution along the time axis of ``x[B, C, T, N]``.

    ``kernel`` is either a 1-D tap vector applied to every channel, or a
    ``[C_out, C_in, K]`` weight. Zero padding keeps ``T`` unchanged at stride 1
    and joints never mix.
    """
    if x.dim() != 4:
        raise ShapeError(f"temporal_conv expects [B, C, T, N], got {tuple(x.shape)}")
    if dilation < 1 or stride < 1:
        raise ShapeError(f"dilation and stride must be positive, got {dilation}, {stride}")
    channels, frames = x.shape[1], x.shape[2]
    if frames < 1:
        raise SequenceLengthError("temporal_conv needs at least one frame")

    if kernel.dim() == 1:
        weight = kernel.reshape(1, 1, -1, 1).expand(channels, 1, -1, 1)
        groups = channels
    elif kernel.dim() == 3:
        if kernel.shape[1] != channels:
            raise ShapeError(
                f"temporal_conv channel mismatch: input {tuple(x.shape)} and kernel {tuple(kernel.shape)}"
            )
        weight = kernel.unsqueeze(-1)
        groups = 1
    else:
        raise ShapeError(f"temporal_conv kernel must be 1-D or 3-D, got {tuple(kernel.shape)}")

    taps = weight.shape[2]
    if taps % 2 == 0:
        raise ShapeError(f"temporal kernel length must be odd, got {taps}")
    padding = dilation * (taps - 1) // 2
    return F.conv2d(
        x,
        weight,
        bias=bias,
        stride=(stride, 1),
        padding=(padding, 0),
        dilation=(dilation, 1),
        groups=groups,
    )


def backward(
    root: torch.Tensor, parameters: Mapping[str, torch.Tensor]
) -> Dict[str, torch.Tensor]:
    """Differentiate a scalar ``root`` with respect to named leaf tensors.

    Parameters the root does not depend on get an all-zero gradient.
    """
    if root.numel() != 1:
        raise ContractError(f"backward needs a scalar root, got shape {tuple(root.shape)}")
    names = list(parameters)
    leaves = [parameters[name] for name in names]
    grads = torch.autograd.grad(root.reshape(()), leaves, allow_unused=True)
    return {
        name: grad if grad is not None else torch.zeros_like(leaf)
        for name, leaf, grad in zip(names, leaves, grads)
    }
