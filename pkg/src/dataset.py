"""Two-person skeleton sequences: parsing, normalization, folds and batching."""

import logging
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from src.exceptions import ConfigError, DataError, SkeletonParseError
from src.graph import SkeletonGraph, build_graph
from src.models import FoldProtocol, SkeletonKind
from src.tensor_ops import DTYPE

logger = logging.getLogger(__name__)

SBU_JOINTS = 15
SBU_CLASSES = [
    "approaching", "departing", "kicking", "pushing",
    "shaking_hands", "hugging", "exchanging", "punching",
]  # fmt: skip

# Published five-fold split of the 21 SBU participant-pair folders.
SBU_STANDARD_FOLDS = [
    ["s01s02", "s03s04", "s05s02", "s06s04"],
    ["s02s03", "s02s07", "s03s05", "s05s03"],
    ["s01s03", "s01s07", "s07s01", "s07s03"],
    ["s02s01", "s02s06", "s03s02", "s03s06"],
    ["s04s02", "s04s03", "s04s06", "s06s02", "s06s03"],
]

_PAIR_PATTERN = re.compile(r"^s\d+s\d+$", re.IGNORECASE)
_CLASS_PATTERN = re.compile(r"^0*([1-8])$")


@dataclass(frozen=True)
class SkeletonSequence:
    """One labeled clip with coordinates laid out as ``[C=3, T, M=2, N]``."""

    coords: np.ndarray
    label: int
    subject_id: str
    source: str = "synthetic"
    missing: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self) -> None:
        if self.coords.ndim != 4 or self.coords.shape[0] != 3 or self.coords.shape[2] != 2:
            raise DataError(f"coords must be [3, T, 2, N], got {self.coords.shape}")
        if self.coords.shape[1] < 2:
            raise DataError(f"a sequence needs at least 2 frames, got {self.coords.shape[1]}")
        if not np.all(np.isfinite(self.coords)):
            raise DataError(f"sequence {self.name or self.subject_id} has non-finite coordinates")
        if self.missing is None:
            object.__setattr__(self, "missing", np.all(self.coords == 0.0, axis=0))

    @property
    def frames(self) -> int:
        """Number of frames T."""
        return int(self.coords.shape[1])

    @property
    def joints(self) -> int:
        """Joints per person N."""
        return int(self.coords.shape[3])


@dataclass
class Batch:
    """Padded mini-batch: ``data[B, C, T, M, N]``, ``labels[B]``, ``pad_mask[B, T]``."""

    data: torch.Tensor
    labels: torch.Tensor
    pad_mask: torch.Tensor
    subject_ids: List[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        """Batch size B."""
        return int(self.data.shape[0])


def frame_fields(joints: int) -> int:
    """Fields on one frame line: the index, then xyz for both persons."""
    return 1 + 2 * joints * 3


def parse_sbu_line(
    line: str, path: str = "<memory>", line_number: int = 1, joints: int = SBU_JOINTS
) -> Tuple[int, np.ndarray]:
    """Parse one frame line into its frame index and ``[M=2, N=joints, 3]`` coordinates."""
    expected = frame_fields(joints)
    fields = [item.strip() for item in line.strip().split(",")]
    if fields and fields[-1] == "":
        fields = fields[:-1]
    if len(fields) != expected:
        raise SkeletonParseError(path, line_number, f"expected {expected} fields, got {len(fields)}")
    try:
        frame_index = int(float(fields[0]))
        values = np.array([float(v) for v in fields[1:]], dtype=np.float64)
    except ValueError as e:
        raise SkeletonParseError(path, line_number, f"non-numeric field: {e}") from e
    if not np.all(np.isfinite(values)):
        raise SkeletonParseError(path, line_number, "non-finite coordinate")
    return frame_index, values.reshape(2, joints, 3)


def read_sbu_file(
    path: Path, label: int, subject_id: str, source: str = "sbu", joints: int = SBU_JOINTS
) -> Optional[SkeletonSequence]:
    """Read one clip file of ``joints`` joints per person.

    Returns None (with a warning) for clips too short to use.
    """
    frames: List[np.ndarray] = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            _, frame = parse_sbu_line(line, str(path), line_number, joints)
            frames.append(frame)
    if len(frames) < 2:
        logger.warning("skipping %s: %d usable frame(s)", path, len(frames))
        return None
    # [T, M, N, 3] -> [3, T, M, N]
    coords = np.stack(frames).transpose(3, 0, 1, 2).copy()
    return SkeletonSequence(coords=coords, label=label, subject_id=subject_id, source=source, name=str(path))


def load_sbu(root: str | Path) -> List[SkeletonSequence]:
    """Load every clip below an SBU-layout directory.

    The participant pair comes from the ``sXXsYY`` folder and the label from the
    numbered class folder (``01``..``08``) on the path of each text file.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"SBU directory not found: {root}")
    sequences: List[SkeletonSequence] = []
    for dirpath, _, filenames in sorted(os.walk(root)):
        for filename in sorted(filenames):
            if not filename.endswith(".txt"):
                continue
            path = Path(dirpath) / filename
            parts = path.relative_to(root).parts[:-1]
            pair = next((p for p in parts if _PAIR_PATTERN.match(p)), None)
            label_part = next((p for p in parts if _CLASS_PATTERN.match(p)), None)
            if pair is None or label_part is None:
                logger.warning("skipping %s: no participant-pair/class folder on path", path)
                continue
            label = int(_CLASS_PATTERN.match(label_part).group(1)) - 1  # type: ignore[union-attr]
            sequence = read_sbu_file(path, label, pair.lower())
            if sequence is not None:
                sequences.append(sequence)
    logger.info("loaded %d SBU clips from %s", len(sequences), root)
    return sequences


def normalize(sequence: SkeletonSequence, graph: Optional[SkeletonGraph] = None) -> SkeletonSequence:
    """Center on the first frame's two-person centroid and scale to unit torso length.

    Missing (zero-filled) joints are left at zero and excluded from the centroid.
    """
    if graph is None:
        graph = build_graph(SkeletonKind.SBU15) if sequence.joints == SBU_JOINTS else None
    coords = sequence.coords
    missing = sequence.missing
    present = ~missing[0]  # [M, N]
    if present.any():
        centroid = coords[:, 0][:, present].mean(axis=1)
    else:
        centroid = np.zeros(3)

    scale = 1.0
    if graph is not None:
        a, b = graph.torso
        torso = float(np.linalg.norm(coords[:, 0, 0, a] - coords[:, 0, 0, b]))
        if torso > 1e-12 and not (missing[0, 0, a] or missing[0, 0, b]):
            scale = torso
        else:
            logger.warning("degenerate torso length in %s; using unit scale", sequence.name or sequence.subject_id)

    normalized = (coords - centroid[:, None, None, None]) / scale
    normalized[:, missing] = 0.0
    return replace(sequence, coords=normalized, missing=missing.copy())


def make_folds(
    sequences: Sequence[SkeletonSequence],
    k: int = 5,
    seed: int = 0,
    protocol: FoldProtocol = FoldProtocol.SEEDED,
) -> List[Tuple[List[SkeletonSequence], List[SkeletonSequence]]]:
    """Split by participant pair into ``k`` (train, test) folds."""
    pairs = sorted({s.subject_id for s in sequences})
    if protocol == FoldProtocol.SBU_STANDARD:
        missing = {p for fold in SBU_STANDARD_FOLDS for p in fold} - set(pairs)
        if missing:
            raise ConfigError(f"standard SBU split needs pairs {sorted(missing)}")
        if k != len(SBU_STANDARD_FOLDS):
            raise ConfigError(f"the standard SBU split has {len(SBU_STANDARD_FOLDS)} folds, got k={k}")
        test_groups = [set(fold) for fold in SBU_STANDARD_FOLDS]
    else:
        if k < 2:
            raise ConfigError(f"k must be at least 2, got {k}")
        if len(pairs) < k:
            raise ConfigError(f"{len(pairs)} participant pairs cannot form {k} folds")
        order = np.random.default_rng(seed).permutation(len(pairs))
        shuffled = [pairs[i] for i in order]
        test_groups = [set(chunk) for chunk in np.array_split(np.array(shuffled, dtype=object), k)]

    folds = []
    for group in test_groups:
        train = [s for s in sequences if s.subject_id not in group]
        test = [s for s in sequences if s.subject_id in group]
        folds.append((train, test))
    return folds


def train_test_split(
    sequences: Sequence[SkeletonSequence], test_fraction: float = 0.2, seed: int = 0
) -> Tuple[List[SkeletonSequence], List[SkeletonSequence]]:
    """Stratified, seeded split keeping each class's proportion."""
    rng = np.random.default_rng(seed)
    by_label: Dict[int, List[int]] = {}
    for index, sequence in enumerate(sequences):
        by_label.setdefault(sequence.label, []).append(index)
    test_indices = set()
    for label in sorted(by_label):
        indices = by_label[label]
        count = int(round(len(indices) * test_fraction))
        chosen = rng.permutation(len(indices))[:count]
        test_indices.update(indices[i] for i in chosen)
    train = [s for i, s in enumerate(sequences) if i not in test_indices]
    test = [s for i, s in enumerate(sequences) if i in test_indices]
    return train, test


def _resample(coords: np.ndarray, length: int) -> np.ndarray:
    source = np.linspace(0.0, coords.shape[1] - 1, length)
    lower = np.floor(source).astype(int)
    upper = np.minimum(lower + 1, coords.shape[1] - 1)
    frac = (source - lower)[None, :, None, None]
    return coords[:, lower] * (1.0 - frac) + coords[:, upper] * frac


def collate(sequences: Sequence[SkeletonSequence], fixed_length: Optional[int] = None) -> Batch:
    """Stack sequences into a batch, zero-padding to the longest clip.

    With ``fixed_length`` every clip is linearly resampled instead and no frame
    is padded.
    """
    if not sequences:
        raise DataError("cannot collate an empty list of sequences")
    joints = {s.joints for s in sequences}
    if len(joints) != 1:
        raise DataError(f"sequences disagree on joint count: {sorted(joints)}")

    length = fixed_length or max(s.frames for s in sequences)
    data = np.zeros((len(sequences), 3, length, 2, joints.pop()))
    pad_mask = np.zeros((len(sequences), length))
    for b, sequence in enumerate(sequences):
        if fixed_length:
            data[b] = _resample(sequence.coords, fixed_length)
            pad_mask[b] = 1.0
        else:
            data[b, :, : sequence.frames] = sequence.coords
            pad_mask[b, : sequence.frames] = 1.0
    return Batch(
        data=torch.tensor(data, dtype=DTYPE),
        labels=torch.tensor([s.label for s in sequences], dtype=torch.long),
        pad_mask=torch.tensor(pad_mask, dtype=DTYPE),
        subject_ids=[s.subject_id for s in sequences],
    )
