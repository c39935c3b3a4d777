"""Finite-difference verification of every analytic gradient.

Each parameter element is nudged by ``+-step`` and the central difference is
compared with the autograd gradient using the relative error
``|a - n| / max(|a|, |n|, 1e-6)``. Elements sitting on a non-smooth point
(ReLU or max-pool switch) are recognized by one-sided differences that
disagree with each other by more than ``KINK_SEPARATION``; such an element
passes when the analytic value matches one side within the tolerance, and is
counted as a kink and left out of the reported maximum.
"""

import logging
from typing import Callable, Dict, List, Mapping, Optional

import numpy as np
import torch

from src.exceptions import ConfigError
from src.graph import SkeletonGraph, build_graph
from src.models import AseaConfig, GradcheckSummary, GradientReport, SkeletonKind
from src.network import asea_loss, build_model
from src.tensor_ops import DTYPE, backward, l2_norm, masked_softmax, matmul, softmax, temporal_conv

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
KINK_SEPARATION = 1e-2
ERROR_FLOOR = 1e-6

MODULE_GROUPS = {
    "encoder": "intra-gcn",
    "selector": "atnac",
    "attention": "external-attention",
    "temporal": "temporal-multiscale",
    "classifier": "model-loss",
}


def relative_error(analytic: float, numeric: float) -> float:
    """``|a - n| / max(|a|, |n|, 1e-6)``."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), ERROR_FLOOR)


def _evaluate(fn: Callable[[], torch.Tensor]) -> float:
    with torch.no_grad():
        return float(fn())


def check_parameter(
    fn: Callable[[], torch.Tensor],
    name: str,
    param: torch.Tensor,
    analytic: torch.Tensor,
    group: str = "",
    step: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOLERANCE,
    indices: Optional[np.ndarray] = None,
) -> GradientReport:
    """Compare ``analytic`` against finite differences of ``fn`` for one tensor."""
    flat = param.data.view(-1)
    grad = analytic.reshape(-1)
    if indices is None:
        indices = np.arange(flat.numel())
    base = _evaluate(fn)

    worst, worst_index, kinks, passed = 0.0, -1, 0, True
    for index in indices:
        index = int(index)
        original = float(flat[index])
        flat[index] = original + step
        plus = _evaluate(fn)
        flat[index] = original - step
        minus = _evaluate(fn)
        flat[index] = original

        a = float(grad[index])
        error = relative_error(a, (plus - minus) / (2.0 * step))
        if error > tol:
            right, left = (plus - base) / step, (base - minus) / step
            non_smooth = relative_error(right, left) > max(KINK_SEPARATION, 10.0 * tol)
            one_sided = min(relative_error(a, right), relative_error(a, left))
            if non_smooth and one_sided <= tol:
                kinks += 1
                continue
            passed = False
        if error > worst:
            worst, worst_index = error, index

    return GradientReport(
        name=name,
        group=group,
        elements=len(indices),
        max_rel_error=worst,
        worst_index=worst_index,
        kinks=kinks,
        passed=passed,
    )


def check_gradients(
    fn: Callable[[], torch.Tensor],
    params: Mapping[str, torch.Tensor],
    step: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOLERANCE,
    max_elements: Optional[int] = None,
    corrupt: Optional[str] = None,
    groups: Optional[Mapping[str, str]] = None,
    seed: int = 0,
) -> List[GradientReport]:
    """Check every parameter in ``params`` against the scalar function ``fn``.

    ``corrupt`` names a parameter whose analytic gradient is deliberately
    distorted before comparison; it exists so callers can confirm that a wrong
    gradient is reported.
    """
    analytic = backward(fn(), params)
    if corrupt is not None:
        if corrupt not in analytic:
            raise ConfigError(f"no parameter named '{corrupt}'")
        analytic[corrupt] = analytic[corrupt] * 2.0 + 1e-3
    rng = np.random.default_rng(seed)

    reports = []
    for name, param in params.items():
        indices = None
        if max_elements is not None and param.numel() > max_elements:
            indices = np.sort(rng.choice(param.numel(), size=max_elements, replace=False))
        group = (groups or {}).get(name, name.split(".")[0])
        report = check_parameter(fn, name, param, analytic[name], group, step, tol, indices)
        logger.debug("%s: max rel error %.3e over %d elements", name, report.max_rel_error, report.elements)
        reports.append(report)
    return reports


def summarize(
    reports: List[GradientReport], seed: int, tol: float, config: Optional[AseaConfig] = None
) -> GradcheckSummary:
    """Fold per-parameter reports into per-group maxima and a kink count."""
    groups: Dict[str, float] = {}
    for report in reports:
        groups[report.group] = max(groups.get(report.group, 0.0), report.max_rel_error)
    failures = [report.name for report in reports if not report.passed]
    return GradcheckSummary(
        config=config.model_dump(mode="json") if config is not None else {},
        seed=seed,
        tolerance=tol,
        kinks=sum(report.kinks for report in reports),
        groups=groups,
        failures=failures,
        reports=reports,
    )


def _op_cases(rng: torch.Generator) -> Dict[str, Callable[[Dict[str, torch.Tensor]], torch.Tensor]]:
    """Scalar probes of each primitive, weighted by fixed random projections."""

    def weights(*shape: int) -> torch.Tensor:
        return torch.randn(*shape, generator=rng, dtype=DTYPE)

    w_matmul = weights(3, 2)
    w_softmax = weights(2, 4)
    w_masked = weights(2, 4)
    mask = torch.tensor([[1, 1, 0, 1], [0, 1, 1, 1]], dtype=torch.bool)
    w_norm = weights(2, 3)
    w_conv = weights(1, 2, 6, 3)

    return {
        "matmul": lambda p: (matmul(p["matmul.a"], p["matmul.b"]) * w_matmul).sum(),
        "softmax": lambda p: (softmax(p["softmax.x"], axis=-1) * w_softmax).sum(),
        "masked_softmax": lambda p: (masked_softmax(p["masked_softmax.x"], mask, axis=-1) * w_masked).sum(),
        "l2_norm": lambda p: (l2_norm(p["l2_norm.x"], axis=1) * w_norm).sum(),
        "temporal_conv": lambda p: (
            temporal_conv(p["temporal_conv.x"], p["temporal_conv.kernel"], dilation=2) * w_conv
        ).sum(),
    }


def run_op_gradcheck(
    seed: int = 0, step: float = DEFAULT_STEP, tol: float = DEFAULT_TOLERANCE
) -> List[GradientReport]:
    """Check the tensor primitives on small random inputs."""
    rng = torch.Generator().manual_seed(seed)

    def leaf(*shape: int) -> torch.Tensor:
        return torch.randn(*shape, generator=rng, dtype=DTYPE).requires_grad_(True)

    params = {
        "matmul.a": leaf(3, 4),
        "matmul.b": leaf(4, 2),
        "softmax.x": leaf(2, 4),
        "masked_softmax.x": leaf(2, 4),
        "l2_norm.x": leaf(2, 5, 3),
        "temporal_conv.x": leaf(1, 2, 6, 3),
        "temporal_conv.kernel": leaf(3),
    }
    cases = _op_cases(rng)

    reports = []
    for op, probe in cases.items():
        owned = {name: value for name, value in params.items() if name.startswith(f"{op}.")}
        reports.extend(
            check_gradients(
                lambda probe=probe: probe(params),
                owned,
                step=step,
                tol=tol,
                groups={name: "tensor-numerics" for name in owned},
                seed=seed,
            )
        )
    return reports


def tiny_config() -> AseaConfig:
    """Depth-1 configuration on a five-joint chain with three classes."""
    return AseaConfig(
        skeleton=SkeletonKind.CUSTOM,
        channels=[8],
        num_classes=3,
        relaxation=True,
    )


def tiny_graph() -> SkeletonGraph:
    """Five joints in a chain; joints 0 and 1 define the torso."""
    return build_graph(SkeletonKind.CUSTOM, edges=[(0, 1), (1, 2), (2, 3), (3, 4)], n_joints=5)


def run_model_gradcheck(
    seed: int = 0,
    corrupt: Optional[str] = None,
    step: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOLERANCE,
    max_elements: Optional[int] = None,
) -> GradcheckSummary:
    """Check ``d(L_total)/d(theta)`` for every parameter of the tiny network.

    Runs in training mode with the soft selection gate on a batch of two clips
    of six frames, the second padded by one frame.
    """
    config = tiny_config()
    model = build_model(config, tiny_graph(), seed=seed)
    model.train()

    generator = torch.Generator().manual_seed(seed)
    data = torch.randn(2, 3, 6, 2, 5, generator=generator, dtype=DTYPE)
    data[1, :, 5] = 0.0
    pad_mask = torch.ones(2, 6, dtype=DTYPE)
    pad_mask[1, 5] = 0.0
    labels = torch.randint(0, config.num_classes, (2,), generator=generator)

    def objective() -> torch.Tensor:
        output = model(data, pad_mask)
        return asea_loss(output.logits, labels, model.alpha_thresh, config).total

    params = dict(model.named_parameters())
    groups = {name: MODULE_GROUPS.get(name.split(".")[0], name) for name in params}
    reports = run_op_gradcheck(seed, step, tol)
    reports.extend(
        check_gradients(objective, params, step, tol, max_elements, corrupt, groups, seed)
    )
    summary = summarize(reports, seed, tol, config)
    for group, error in summary.groups.items():
        logger.info("gradcheck %-20s max rel error %.3e", group, error)
    if summary.kinks:
        logger.info("gradcheck accepted %d element(s) on non-smooth points", summary.kinks)
    if summary.failures:
        logger.error("gradcheck failed for %s", ", ".join(summary.failures))
    return summary

