"""Domain models for configuration, reports and exported records."""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator


class SkeletonKind(str, Enum):
    """Named skeleton layouts."""

    SBU15 = "sbu15"
    NTU25 = "ntu25"
    CUSTOM = "custom"


class EncoderKind(str, Enum):
    """Spatial encoder variants."""

    CTR = "ctr"
    PLAIN = "plain"


class SelectionStrategy(str, Enum):
    """How active joints are chosen before external attention."""

    ATNAC = "atnac"
    VELOCITY = "velocity"
    NONE = "none"


class AblationStrategy(str, Enum):
    """Arms of the module ablation."""

    NONE_BASELINE = "none-baseline"
    ALL_NODE_EA = "all-node-ea"
    ATNAC = "atnac"
    VELOCITY = "velocity"


class OptimizerKind(str, Enum):
    """Supported optimizers."""

    ADAM = "adam"
    SGD_MOMENTUM = "sgd-momentum"


class LrSchedule(str, Enum):
    """Learning-rate schedules."""

    CONSTANT = "constant"
    STEP_DECAY = "step-decay"


class InteractionClass(str, Enum):
    """Classes produced by the synthetic generator."""

    APPROACH = "approach"
    DEPART = "depart"
    HANDSHAKE = "handshake"
    WAVE = "wave"


class FoldProtocol(str, Enum):
    """Cross-validation split protocols."""

    SEEDED = "seeded"
    SBU_STANDARD = "sbu-standard"


class AseaConfig(BaseModel):
    """Network and objective configuration."""

    skeleton: SkeletonKind = SkeletonKind.SBU15
    custom_graph_path: Optional[str] = None
    in_channels: int = Field(default=3, ge=1)
    channels: List[int] = Field(default_factory=lambda: [16, 16, 32, 32])
    reduction_ratio: int = Field(default=2, ge=1)
    encoder_kind: EncoderKind = EncoderKind.CTR
    alpha_refine_init: float = 0.1
    temporal_kernel: int = Field(default=5, ge=1)
    dilations: List[int] = Field(default_factory=lambda: [1, 2, 3])
    double_tconv: bool = False
    gamma: float = Field(default=1.0, gt=0)
    alpha_init: float = 0.5
    alpha_target: float = 0.5
    lambda_reg: float = Field(default=0.1, ge=0)
    beta: float = Field(default=0.1, gt=0)
    relaxation: bool = True
    d_qk: Optional[int] = Field(default=None, ge=1)
    d_v: Optional[int] = Field(default=None, ge=1)
    num_classes: int = Field(default=4, ge=2)
    selection: SelectionStrategy = SelectionStrategy.ATNAC
    use_attention: bool = True
    normalize: bool = True
    fixed_length: Optional[int] = Field(default=None, ge=2)

    @field_validator("channels")
    def validate_channels(cls, v: List[int]) -> List[int]:
        """Every encoder width feeds a four-branch temporal module."""
        if not v:
            raise ValueError("channels must list at least one encoder block")
        for width in v:
            if width < 4 or width % 4 != 0:
                raise ValueError(f"channel width {width} must be a positive multiple of 4")
        return v

    @field_validator("temporal_kernel")
    def validate_kernel(cls, v: int) -> int:
        """Temporal kernels must be odd so padding preserves length."""
        if v % 2 == 0:
            raise ValueError(f"temporal_kernel must be odd, got {v}")
        return v

    @field_validator("dilations")
    def validate_dilations(cls, v: List[int]) -> List[int]:
        """One positive dilation per convolutional branch."""
        if len(v) != 3 or any(d < 1 for d in v):
            raise ValueError("dilations must be three positive integers")
        return v

    @property
    def feature_channels(self) -> int:
        """Channel count after the encoder."""
        return self.channels[-1]

    @property
    def query_dim(self) -> int:
        """Shared query/key width."""
        return self.d_qk or max(self.feature_channels // 2, 1)

    @property
    def value_dim(self) -> int:
        """Value width before the output projection."""
        return self.d_v or max(self.feature_channels // 2, 1)


class TrainSpec(BaseModel):
    """Optimization settings."""

    optimizer: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = Field(default=1e-3, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    epochs: int = Field(default=60, ge=1)
    batch_size: int = Field(default=16, ge=1)
    seed: int = 0
    lr_schedule: LrSchedule = LrSchedule.CONSTANT
    lr_step_epochs: int = Field(default=20, ge=1)
    lr_decay: float = Field(default=0.1, gt=0, le=1)
    test_fraction: float = Field(default=0.2, gt=0, lt=1)


class SynthSpec(BaseModel):
    """Synthetic corpus generator settings."""

    classes: List[InteractionClass] = Field(default_factory=lambda: list(InteractionClass))
    samples_per_class: int = Field(default=50, ge=1)
    frames: int = Field(default=32, ge=2)
    noise: float = Field(default=0.01, ge=0)
    n_pairs: int = Field(default=10, ge=1)

    @field_validator("classes")
    def validate_classes(cls, v: List[InteractionClass]) -> List[InteractionClass]:
        """Classes must be distinct and non-empty."""
        if not v:
            raise ValueError("at least one class is required")
        if len(set(v)) != len(v):
            raise ValueError("classes must not repeat")
        return v


class EpochRecord(BaseModel):
    """Losses and metrics of one training epoch."""

    epoch: int
    task_loss: float
    reg_loss: float
    total_loss: float
    alpha_thresh: Optional[float] = None
    learning_rate: float
    eval_accuracy: Optional[float] = None


class EvaluationResult(BaseModel):
    """Classification metrics on one data set."""

    num_samples: int
    accuracy: float
    top5_accuracy: Optional[float] = None
    confusion: List[List[int]]

    @classmethod
    def from_confusion(
        cls, confusion: List[List[int]], top5_accuracy: Optional[float] = None
    ) -> "EvaluationResult":
        """Build a result whose accuracy is trace over total."""
        total = sum(sum(row) for row in confusion)
        correct = sum(confusion[i][i] for i in range(len(confusion)))
        accuracy = correct / total if total else 0.0
        return cls(
            num_samples=total,
            accuracy=accuracy,
            top5_accuracy=top5_accuracy,
            confusion=confusion,
        )


class RunReport(BaseModel):
    """Everything recorded about one training run."""

    config: Dict
    train_spec: Dict
    epochs: List[EpochRecord] = Field(default_factory=list)
    evaluation: Optional[EvaluationResult] = None
    wall_clock_seconds: float = 0.0

    @property
    def alpha_trajectory(self) -> List[float]:
        """Threshold parameter value after every epoch."""
        return [record.alpha_thresh for record in self.epochs if record.alpha_thresh is not None]

    @property
    def loss_trace(self) -> List[float]:
        """Total training loss per epoch."""
        return [record.total_loss for record in self.epochs]


class FoldReport(BaseModel):
    """One cross-validation fold."""

    fold: int
    train_subjects: List[str]
    test_subjects: List[str]
    report: RunReport


class CrossValidationReport(BaseModel):
    """Per-fold reports and their mean accuracy."""

    folds: List[FoldReport]
    mean_accuracy: float


class AblationRow(BaseModel):
    """Accuracy of one ablation arm."""

    strategy: AblationStrategy
    accuracy: float
    parameters: int


class AblationTable(BaseModel):
    """Comparison of ablation arms trained under identical settings."""

    config: Dict
    train_spec: Dict
    rows: List[AblationRow]

    def to_csv(self) -> str:
        """Render the table as CSV text."""
        lines = ["strategy,accuracy,parameters"]
        lines.extend(f"{row.strategy.value},{row.accuracy:.6f},{row.parameters}" for row in self.rows)
        return "\n".join(lines) + "\n"


class ParameterCount(BaseModel):
    """Trainable scalar count, itemized per top-level module."""

    total: int
    by_module: Dict[str, int]


class JointSelectionRecord(BaseModel):
    """Active-joint selection of one person in one sample."""

    sample: int
    person: int
    amplitudes: List[float]
    threshold: Optional[float] = None
    active: List[int]


class AttentionEntry(BaseModel):
    """One non-zero cross-person attention weight."""

    sample: int
    frame: int
    query_person: int
    query_joint: int
    key_joint: int
    weight: float


class ParameterEntry(BaseModel):
    """Location of one named array inside a checkpoint blob."""

    name: str
    kind: str = "parameter"
    shape: List[int]
    offset: int
    length: int


class CheckpointManifest(BaseModel):
    """JSON half of a checkpoint."""

    format_version: int = 1
    dtype: str = "<f4"
    config: AseaConfig
    entries: List[ParameterEntry]


class InspectRequest(BaseModel):
    """One clip posted to the inspection endpoint."""

    frames: List[List[float]] = Field(..., min_length=2, description="Frames of 6N floats")


class InspectResponse(BaseModel):
    """Selection and attention exported for one clip."""

    predicted_class: int
    selections: List[JointSelectionRecord]
    attention: List[AttentionEntry]


class GradientReport(BaseModel):
    """Finite-difference comparison for one named parameter."""

    name: str
    group: str
    elements: int
    max_rel_error: float
    worst_index: int = -1
    kinks: int = 0
    passed: bool


class GradcheckSummary(BaseModel):
    """Largest relative error per group and the parameters that failed."""

    config: Dict = Field(default_factory=dict)
    seed: int
    tolerance: float
    kinks: int = 0
    groups: Dict[str, float]
    failures: List[str]
    reports: List[GradientReport]

    @property
    def passed(self) -> bool:
        """True when no parameter exceeded the tolerance."""
        return not self.failures
