"""Service layer: training, evaluation, cross-validation, ablation and inspection."""

import logging
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from src.dataset import SkeletonSequence, collate, make_folds, normalize
from src.exceptions import ConfigError, DataError, DivergenceError
from src.graph import SkeletonGraph, graph_for
from src.models import (
    AblationRow,
    AblationStrategy,
    AblationTable,
    AseaConfig,
    AttentionEntry,
    CrossValidationReport,
    EpochRecord,
    EvaluationResult,
    FoldProtocol,
    FoldReport,
    InspectResponse,
    JointSelectionRecord,
    LrSchedule,
    OptimizerKind,
    RunReport,
    SelectionStrategy,
    TrainSpec,
)
from src.network import PERSONS, AseaNetwork, asea_loss, build_model, count_module_params, node_curves

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 64

ABLATION_OVERRIDES: Dict[AblationStrategy, Dict[str, object]] = {
    AblationStrategy.NONE_BASELINE: {"selection": SelectionStrategy.NONE, "use_attention": False},
    AblationStrategy.ALL_NODE_EA: {"selection": SelectionStrategy.NONE, "use_attention": True},
    AblationStrategy.ATNAC: {"selection": SelectionStrategy.ATNAC, "use_attention": True},
    AblationStrategy.VELOCITY: {"selection": SelectionStrategy.VELOCITY, "use_attention": True},
}

# Reference expectation, best first; checked but never enforced.
EXPECTED_ORDER = [AblationStrategy.ATNAC, AblationStrategy.ALL_NODE_EA, AblationStrategy.NONE_BASELINE]


def prepare_sequences(
    sequences: Sequence[SkeletonSequence], config: AseaConfig, graph: SkeletonGraph
) -> List[SkeletonSequence]:
    """Apply the configured normalization and check joint counts."""
    for sequence in sequences:
        if sequence.joints != graph.n_joints:
            raise ConfigError(
                f"clip {sequence.name or sequence.subject_id} has {sequence.joints} joints, "
                f"skeleton expects {graph.n_joints}"
            )
    if not config.normalize:
        return list(sequences)
    return [normalize(sequence, graph) for sequence in sequences]


def check_labels(sequences: Sequence[SkeletonSequence], num_classes: int) -> None:
    """Reject labels the classifier cannot represent."""
    largest = max(sequence.label for sequence in sequences)
    if largest >= num_classes or min(sequence.label for sequence in sequences) < 0:
        raise ConfigError(
            f"class-count mismatch: data has label {largest} but the model has {num_classes} classes"
        )


def parameter_groups(model: nn.Module, weight_decay: float) -> List[Dict]:
    """Weight decay on matrices and kernels only.

    Biases, normalization scales, adjacency matrices and scalar thresholds are
    left undecayed.
    """
    decay, no_decay = [], []
    for name, param in model.named_parameters():
        if not param.requires_grad:
            continue
        if param.dim() < 2 or name.endswith("adjacency"):
            no_decay.append(param)
        else:
            decay.append(param)
    return [
        {"params": decay, "weight_decay": weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]


def make_optimizer(model: nn.Module, spec: TrainSpec) -> torch.optim.Optimizer:
    """Optimizer described by a training spec."""
    groups = parameter_groups(model, spec.weight_decay)
    if spec.optimizer == OptimizerKind.SGD_MOMENTUM:
        return torch.optim.SGD(groups, lr=spec.learning_rate, momentum=spec.momentum)
    return torch.optim.Adam(groups, lr=spec.learning_rate)


def make_scheduler(
    optimizer: torch.optim.Optimizer, spec: TrainSpec
) -> Optional[torch.optim.lr_scheduler.LRScheduler]:
    """Step decay every ``lr_step_epochs`` epochs, or None for a constant rate."""
    if spec.lr_schedule == LrSchedule.STEP_DECAY:
        return torch.optim.lr_scheduler.StepLR(optimizer, step_size=spec.lr_step_epochs, gamma=spec.lr_decay)
    return None


class EvaluationService:
    """Service for inference metrics."""

    def __init__(self, batch_size: int = EVAL_BATCH_SIZE) -> None:
        """Initialize evaluation service."""
        self.batch_size = batch_size

    @torch.no_grad()
    def predict(self, model: AseaNetwork, sequences: Sequence[SkeletonSequence]) -> torch.Tensor:
        """Logits ``[len(sequences), classes]`` in inference mode."""
        prepared = prepare_sequences(sequences, model.config, model.graph)
        was_training = model.training
        model.eval()
        try:
            logits = []
            for start in range(0, len(prepared), self.batch_size):
                batch = collate(prepared[start : start + self.batch_size], model.config.fixed_length)
                logits.append(model(batch.data, batch.pad_mask).logits)
        finally:
            model.train(was_training)
        return torch.cat(logits)

    @staticmethod
    def confusion_matrix(labels: Sequence[int], predictions: Sequence[int], num_classes: int) -> List[List[int]]:
        """Rows are true classes, columns predictions."""
        confusion = np.zeros((num_classes, num_classes), dtype=int)
        for label, prediction in zip(labels, predictions):
            confusion[label, prediction] += 1
        return confusion.tolist()

    @staticmethod
    def top_k_accuracy(logits: torch.Tensor, labels: torch.Tensor, k: int) -> float:
        """Fraction of samples whose label is among the ``k`` highest logits."""
        top = logits.topk(k, dim=-1).indices
        return float((top == labels[:, None]).any(dim=-1).to(torch.float64).mean())

    def evaluate(self, model: AseaNetwork, sequences: Sequence[SkeletonSequence]) -> EvaluationResult:
        """Top-1 accuracy and confusion; top-5 when there are at least five classes."""
        if not sequences:
            raise DataError("cannot evaluate on an empty data set")
        num_classes = model.config.num_classes
        check_labels(sequences, num_classes)
        logits = self.predict(model, sequences)
        labels = torch.tensor([s.label for s in sequences])
        predictions = logits.argmax(dim=-1)
        confusion = self.confusion_matrix(labels.tolist(), predictions.tolist(), num_classes)
        top5 = self.top_k_accuracy(logits, labels, 5) if num_classes >= 5 else None
        return EvaluationResult.from_confusion(confusion, top5)


class TrainingService:
    """Service for optimizing one model."""

    def __init__(self, config: AseaConfig, spec: TrainSpec, graph: Optional[SkeletonGraph] = None) -> None:
        """Initialize training service."""
        self.config = config
        self.spec = spec
        self.graph = graph or graph_for(config.skeleton, config.custom_graph_path)
        self.evaluator = EvaluationService()

    def _validate(self, sequences: Sequence[SkeletonSequence]) -> None:
        if not sequences:
            raise DataError("training data is empty")
        if len({s.label for s in sequences}) < 2:
            raise DataError("training data must contain at least two classes")
        check_labels(sequences, self.config.num_classes)

    def train(
        self,
        train_set: Sequence[SkeletonSequence],
        eval_set: Optional[Sequence[SkeletonSequence]] = None,
    ) -> Tuple[AseaNetwork, RunReport]:
        """Minimize the total loss; identical seeds give identical reports."""
        self._validate(train_set)
        started = time.perf_counter()
        spec = self.spec
        model = build_model(self.config, self.graph, seed=spec.seed)
        prepared = prepare_sequences(train_set, self.config, self.graph)
        optimizer = make_optimizer(model, spec)
        scheduler = make_scheduler(optimizer, spec)
        rng = np.random.default_rng(spec.seed)

        epochs: List[EpochRecord] = []
        step = 0
        for epoch in range(1, spec.epochs + 1):
            model.train()
            learning_rate = optimizer.param_groups[0]["lr"]
            totals = np.zeros(3)
            order = rng.permutation(len(prepared))
            for start in range(0, len(order), spec.batch_size):
                batch = collate([prepared[i] for i in order[start : start + spec.batch_size]], self.config.fixed_length)
                output = model(batch.data, batch.pad_mask)
                parts = asea_loss(output.logits, batch.labels, model.alpha_thresh, self.config)
                value = float(parts.total)
                if not np.isfinite(value):
                    raise DivergenceError(step, value)
                optimizer.zero_grad()
                parts.total.backward()
                optimizer.step()
                step += 1
                totals += batch.size * np.array([float(parts.task), float(parts.reg), value])
                logger.debug("step %d: loss %.6f", step, value)
            if scheduler is not None:
                scheduler.step()

            task_loss, reg_loss, total_loss = totals / len(prepared)
            accuracy = self.evaluator.evaluate(model, eval_set).accuracy if eval_set else None
            alpha = model.alpha_thresh
            record = EpochRecord(
                epoch=epoch,
                task_loss=task_loss,
                reg_loss=reg_loss,
                total_loss=total_loss,
                alpha_thresh=float(alpha) if alpha is not None else None,
                learning_rate=learning_rate,
                eval_accuracy=accuracy,
            )
            epochs.append(record)
            logger.info(
                "epoch %d/%d: loss %.4f (task %.4f, reg %.4f) alpha %s accuracy %s",
                epoch,
                spec.epochs,
                total_loss,
                task_loss,
                reg_loss,
                "n/a" if record.alpha_thresh is None else f"{record.alpha_thresh:.4f}",
                "n/a" if accuracy is None else f"{accuracy:.4f}",
            )

        model.eval()
        report = RunReport(
            config=self.config.model_dump(mode="json"),
            train_spec=spec.model_dump(mode="json"),
            epochs=epochs,
            evaluation=self.evaluator.evaluate(model, eval_set) if eval_set else None,
            wall_clock_seconds=time.perf_counter() - started,
        )
        return model, report


def audit_leakage(train: Sequence[SkeletonSequence], test: Sequence[SkeletonSequence]) -> None:
    """Fail if any participant pair appears on both sides of a split."""
    shared = {s.subject_id for s in train} & {s.subject_id for s in test}
    if shared:
        raise DataError(f"subjects {sorted(shared)} appear in both train and test sets")


class CrossValidationService:
    """Service for k-fold protocols, one fresh model per fold."""

    def __init__(self, config: AseaConfig, spec: TrainSpec, graph: Optional[SkeletonGraph] = None) -> None:
        """Initialize cross-validation service."""
        self.trainer = TrainingService(config, spec, graph)

    def cross_validate(
        self, folds: Sequence[Tuple[Sequence[SkeletonSequence], Sequence[SkeletonSequence]]]
    ) -> CrossValidationReport:
        """Train and evaluate every fold."""
        reports: List[FoldReport] = []
        for index, (train, test) in enumerate(folds, start=1):
            audit_leakage(train, test)
            _, report = self.trainer.train(train, test)
            accuracy = report.evaluation.accuracy if report.evaluation else 0.0
            logger.info("fold %d/%d: accuracy %.4f on %d clips", index, len(folds), accuracy, len(test))
            reports.append(
                FoldReport(
                    fold=index,
                    train_subjects=sorted({s.subject_id for s in train}),
                    test_subjects=sorted({s.subject_id for s in test}),
                    report=report,
                )
            )
        mean = float(np.mean([r.report.evaluation.accuracy for r in reports if r.report.evaluation]))
        logger.info("cross-validation mean accuracy %.4f over %d folds", mean, len(reports))
        return CrossValidationReport(folds=reports, mean_accuracy=mean)

    def run(
        self,
        sequences: Sequence[SkeletonSequence],
        k: int = 5,
        protocol: FoldProtocol = FoldProtocol.SEEDED,
    ) -> CrossValidationReport:
        """Split by participant pair, then cross-validate."""
        return self.cross_validate(make_folds(sequences, k, self.trainer.spec.seed, protocol))


class AblationService:
    """Service comparing module variants under one training spec."""

    def __init__(self, config: AseaConfig, spec: TrainSpec, graph: Optional[SkeletonGraph] = None) -> None:
        """Initialize ablation service."""
        self.config = config
        self.spec = spec
        self.graph = graph

    def variant(self, strategy: AblationStrategy) -> AseaConfig:
        """Configuration of one ablation arm."""
        return self.config.model_copy(update=ABLATION_OVERRIDES[AblationStrategy(strategy)])

    def ablate(
        self,
        train: Sequence[SkeletonSequence],
        test: Sequence[SkeletonSequence],
        strategies: Sequence[AblationStrategy],
    ) -> AblationTable:
        """Train every requested arm with the same seed and data."""
        strategies = [AblationStrategy(s) for s in dict.fromkeys(strategies)]
        if len(strategies) < 2:
            raise ConfigError("an ablation needs at least two strategies")

        rows = []
        for strategy in strategies:
            config = self.variant(strategy)
            model, report = TrainingService(config, self.spec, self.graph).train(train, test)
            accuracy = report.evaluation.accuracy if report.evaluation else 0.0
            parameters = count_module_params(model).total
            logger.info("ablation %s: accuracy %.4f, %d parameters", strategy.value, accuracy, parameters)
            rows.append(AblationRow(strategy=strategy, accuracy=accuracy, parameters=parameters))

        self._report_ordering(rows)
        return AblationTable(
            config=self.config.model_dump(mode="json"),
            train_spec=self.spec.model_dump(mode="json"),
            rows=rows,
        )

    @staticmethod
    def _report_ordering(rows: Sequence[AblationRow]) -> bool:
        accuracy = {row.strategy: row.accuracy for row in rows}
        ranked = [accuracy[s] for s in EXPECTED_ORDER if s in accuracy]
        holds = all(a >= b for a, b in zip(ranked, ranked[1:]))
        if not holds:
            logger.warning(
                "ablation ordering differs from the reference expectation %s: %s",
                " >= ".join(s.value for s in EXPECTED_ORDER if s in accuracy),
                ", ".join(f"{s.value}={accuracy[s]:.4f}" for s in EXPECTED_ORDER if s in accuracy),
            )
        return holds


class InspectionService:
    """Service exporting joint selections, attention maps and joint curves."""

    def __init__(self, model: AseaNetwork) -> None:
        """Initialize inspection service with a trained model."""
        self.model = model

    def prepare(self, sequence: SkeletonSequence) -> torch.Tensor:
        """Normalized single-clip batch ``[1, 3, T, M, N]``."""
        prepared = prepare_sequences([sequence], self.model.config, self.model.graph)
        return collate(prepared, self.model.config.fixed_length).data

    @torch.no_grad()
    def inspect(self, sequence: SkeletonSequence) -> InspectResponse:
        """Run inference on one clip and export its selection and attention."""
        data = self.prepare(sequence)
        self.model.eval()
        output = self.model(data)
        joints = data.shape[-1]

        selections = []
        for person in range(PERSONS):
            if output.selection is None:
                selections.append(
                    JointSelectionRecord(sample=0, person=person, amplitudes=[], threshold=None, active=list(range(joints)))
                )
                continue
            selection = output.selection
            selections.append(
                JointSelectionRecord(
                    sample=0,
                    person=person,
                    amplitudes=selection.amplitudes[person].tolist(),
                    threshold=float(selection.threshold[person]),
                    active=selection.active_indices(person),
                )
            )

        attention: List[AttentionEntry] = []
        if output.record is not None:
            maps = output.record.maps
            for b, person, frame, query, key in torch.nonzero(maps > 0).tolist():
                attention.append(
                    AttentionEntry(
                        sample=b,
                        frame=frame,
                        query_person=person,
                        query_joint=query,
                        key_joint=key,
                        weight=float(maps[b, person, frame, query, key]),
                    )
                )
        return InspectResponse(
            predicted_class=int(output.logits.argmax(dim=-1)[0]),
            selections=selections,
            attention=attention,
        )

    def curves_csv(self, sequence: SkeletonSequence) -> str:
        """Per-joint velocity and weighted feature-energy curves as CSV."""
        curves = node_curves(self.model, self.prepare(sequence))
        names = self.model.graph.names
        lines = ["person,joint,name,frame,velocity,weighted_energy"]
        persons, frames, joints = curves.energy.shape
        for person in range(persons):
            for joint in range(joints):
                name = names[joint] if names else str(joint)
                for frame in range(frames):
                    velocity = "" if frame == 0 else f"{curves.velocity[person, frame - 1, joint]:.9g}"
                    energy = f"{curves.energy[person, frame, joint]:.9g}"
                    lines.append(f"{person},{joint},{name},{frame},{velocity},{energy}")
        return "\n".join(lines) + "\n"

    def summary(self) -> Dict:
        """Configuration and parameter breakdown of the served model."""
        return {
            "config": self.model.config.model_dump(mode="json"),
            "parameters": count_module_params(self.model).model_dump(),
            "joints": self.model.graph.n_joints,
            "joint_names": list(self.model.graph.names),
        }
