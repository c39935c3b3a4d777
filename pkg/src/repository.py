"""File-backed repositories for corpora, checkpoints and reports."""

import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, Generic, List, Optional, TypeVar

import numpy as np
import torch
from pydantic import BaseModel, ValidationError

from src.dataset import SBU_JOINTS, SkeletonSequence, load_sbu, read_sbu_file
from src.exceptions import CheckpointFormatError, ConfigError, DataError
from src.models import CheckpointManifest, ParameterEntry, RunReport, SkeletonKind
from src.network import AseaNetwork, build_model

logger = logging.getLogger(__name__)

T = TypeVar("T")

MANIFEST_NAME = "manifest.json"
BLOB_DTYPE = np.dtype("<f4")


class BaseRepository(ABC, Generic[T]):
    """Base class for repositories rooted at one directory."""

    def __init__(self, root: str | Path) -> None:
        """Initialize repository with its root directory."""
        self.root = Path(root)

    def path_for(self, name: str, suffix: str = "") -> Path:
        """Path of a named artifact below the root."""
        return self.root / f"{name}{suffix}"

    def ensure_root(self) -> Path:
        """Create the root directory if needed."""
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DataError(f"cannot create {self.root}: {e}") from e
        return self.root

    @abstractmethod
    def save(self, obj: T, name: str) -> Path:
        """Persist an object under ``name``."""

    @abstractmethod
    def load(self, name: str) -> T:
        """Load the object stored under ``name``."""


def format_sbu_line(frame_index: int, joints: np.ndarray) -> str:
    """One frame as ``index, x, y, z, ...`` for both persons, ``joints`` is ``[M, N, 3]``."""
    values = ",".join(f"{v:.17g}" for v in joints.reshape(-1))
    return f"{frame_index},{values}"


class CorpusRepository(BaseRepository[List[SkeletonSequence]]):
    """Clips stored as SBU-style text files plus a ``manifest.json`` index.

    A directory without a manifest is read as the raw SBU layout.
    """

    def save(self, obj: List[SkeletonSequence], name: str = "", metadata: Optional[Dict[str, Any]] = None) -> Path:
        """Write every clip and the manifest; returns the manifest path."""
        joint_counts = {sequence.joints for sequence in obj}
        if len(joint_counts) > 1:
            raise DataError(f"clips of one corpus must share a joint count, got {sorted(joint_counts)}")
        joints = joint_counts.pop() if joint_counts else SBU_JOINTS
        root = self.ensure_root()
        clips = []
        for index, sequence in enumerate(obj):
            relative = Path(sequence.subject_id) / f"{sequence.label + 1:02d}" / f"{index:05d}.txt"
            path = root / relative
            path.parent.mkdir(parents=True, exist_ok=True)
            frames = sequence.coords.transpose(1, 2, 3, 0)  # [T, M, N, 3]
            lines = [format_sbu_line(t + 1, frames[t]) for t in range(sequence.frames)]
            path.write_text("\n".join(lines) + "\n")
            clips.append(
                {
                    "path": relative.as_posix(),
                    "label": sequence.label,
                    "subject_id": sequence.subject_id,
                    "name": sequence.name,
                    "frames": sequence.frames,
                }
            )
        manifest = {"name": name, "joints": joints, "metadata": metadata or {}, "clips": clips}
        manifest_path = root / MANIFEST_NAME
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        logger.info("wrote %d clips to %s", len(clips), root)
        return manifest_path

    def load(self, name: str = "") -> List[SkeletonSequence]:
        """Read the corpus below the root."""
        manifest_path = self.root / MANIFEST_NAME
        if not manifest_path.is_file():
            return load_sbu(self.root)
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as e:
            raise DataError(f"{manifest_path}: invalid JSON: {e}") from e

        joints = int(manifest.get("joints", SBU_JOINTS))
        sequences = []
        for clip in manifest.get("clips", []):
            sequence = read_sbu_file(
                self.root / clip["path"],
                int(clip["label"]),
                str(clip["subject_id"]),
                source="corpus",
                joints=joints,
            )
            if sequence is not None:
                sequences.append(
                    SkeletonSequence(
                        coords=sequence.coords,
                        label=sequence.label,
                        subject_id=sequence.subject_id,
                        source=sequence.source,
                        name=clip.get("name", ""),
                    )
                )
        logger.info("loaded %d clips from %s", len(sequences), self.root)
        return sequences

    def metadata(self) -> Dict[str, Any]:
        """Metadata block of the manifest, empty for raw SBU directories."""
        manifest_path = self.root / MANIFEST_NAME
        if not manifest_path.is_file():
            return {}
        return json.loads(manifest_path.read_text()).get("metadata", {})


class CheckpointRepository(BaseRepository[AseaNetwork]):
    """``<name>.json`` manifest plus ``<name>.bin`` little-endian float32 blob.

    Entry offsets are byte offsets into the blob; lengths count elements.
    """

    def save(self, obj: AseaNetwork, name: str = "model") -> Path:
        """Write manifest and blob; returns the manifest path."""
        self.ensure_root()
        entries: List[ParameterEntry] = []
        chunks: List[bytes] = []
        offset = 0
        named = [(n, "parameter", p) for n, p in obj.named_parameters()]
        named += [(n, "buffer", b) for n, b in obj.named_buffers()]
        for entry_name, kind, tensor in named:
            data = tensor.detach().cpu().numpy().astype(BLOB_DTYPE).reshape(-1)
            chunk = data.tobytes()
            entries.append(
                ParameterEntry(
                    name=entry_name,
                    kind=kind,
                    shape=list(tensor.shape),
                    offset=offset,
                    length=int(data.size),
                )
            )
            chunks.append(chunk)
            offset += len(chunk)

        manifest = CheckpointManifest(config=obj.config, entries=entries)
        manifest_path = self.path_for(name, ".json")
        manifest_path.write_text(manifest.model_dump_json(indent=2) + "\n")
        self.path_for(name, ".bin").write_bytes(b"".join(chunks))
        logger.info("saved checkpoint %s (%d arrays, %d bytes)", manifest_path, len(entries), offset)
        return manifest_path

    def read_manifest(self, name: str = "model") -> CheckpointManifest:
        """Parse and validate the JSON half of a checkpoint."""
        path = self.path_for(name, ".json")
        if not path.is_file():
            raise DataError(f"checkpoint manifest not found: {path}")
        try:
            manifest = CheckpointManifest.model_validate_json(path.read_text())
        except ValidationError as e:
            raise CheckpointFormatError(f"{path}: invalid manifest: {e}") from e
        if manifest.dtype != BLOB_DTYPE.str:
            raise CheckpointFormatError(f"unsupported blob dtype {manifest.dtype}")
        return manifest

    def load(self, name: str = "model", skeleton: Optional[SkeletonKind] = None) -> AseaNetwork:
        """Rebuild the network and copy every stored array into it."""
        manifest = self.read_manifest(name)
        if skeleton is not None and manifest.config.skeleton != SkeletonKind(skeleton):
            raise ConfigError(
                f"checkpoint was trained on skeleton '{manifest.config.skeleton.value}', "
                f"requested '{SkeletonKind(skeleton).value}'"
            )
        blob_path = self.path_for(name, ".bin")
        if not blob_path.is_file():
            raise DataError(f"checkpoint blob not found: {blob_path}")
        blob = blob_path.read_bytes()

        model = build_model(manifest.config)
        state = model.state_dict()
        itemsize = BLOB_DTYPE.itemsize
        end = 0
        for entry in manifest.entries:
            if int(np.prod(entry.shape, dtype=np.int64)) != entry.length:
                raise CheckpointFormatError(
                    f"shape {entry.shape} does not match length {entry.length}", entry.name
                )
            if entry.offset + entry.length * itemsize > len(blob):
                raise CheckpointFormatError(
                    f"blob truncated: need {entry.offset + entry.length * itemsize} bytes, "
                    f"have {len(blob)}",
                    entry.name,
                )
            if entry.name not in state:
                raise CheckpointFormatError("not present in the configured model", entry.name)
            target = state[entry.name]
            if list(target.shape) != entry.shape:
                raise CheckpointFormatError(
                    f"stored shape {entry.shape} does not match model shape {list(target.shape)}",
                    entry.name,
                )
            values = np.frombuffer(blob, dtype=BLOB_DTYPE, count=entry.length, offset=entry.offset)
            with torch.no_grad():
                target.copy_(torch.from_numpy(values.copy()).reshape(target.shape).to(target.dtype))
            end = max(end, entry.offset + entry.length * itemsize)

        missing = set(state) - {entry.name for entry in manifest.entries}
        if missing:
            raise CheckpointFormatError("missing from checkpoint", sorted(missing)[0])
        if end != len(blob):
            raise CheckpointFormatError(f"blob has {len(blob) - end} unexpected trailing bytes")
        model.eval()
        logger.info("loaded checkpoint %s", self.path_for(name, ".json"))
        return model


class ReportRepository(BaseRepository[RunReport]):
    """JSON and CSV artifacts of runs."""

    def save(self, obj: BaseModel, name: str = "report") -> Path:
        """Write any pydantic report as indented JSON."""
        self.ensure_root()
        path = self.path_for(name, ".json")
        path.write_text(obj.model_dump_json(indent=2) + "\n")
        logger.info("wrote %s", path)
        return path

    def save_text(self, text: str, name: str, suffix: str = ".csv") -> Path:
        """Write a text artifact such as a CSV table."""
        self.ensure_root()
        path = self.path_for(name, suffix)
        path.write_text(text)
        logger.info("wrote %s", path)
        return path

    def save_document(self, document: Any, name: str) -> Path:
        """Write a plain JSON document."""
        self.ensure_root()
        path = self.path_for(name, ".json")
        path.write_text(json.dumps(document, indent=2) + "\n")
        logger.info("wrote %s", path)
        return path

    def load(self, name: str = "report") -> RunReport:
        """Read a run report."""
        path = self.path_for(name, ".json")
        if not path.is_file():
            raise DataError(f"report not found: {path}")
        return RunReport.model_validate_json(path.read_text())
