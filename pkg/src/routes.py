"""API route handlers for the inspection service."""

from functools import lru_cache
from pathlib import Path

import numpy as np
from fastapi import APIRouter, Depends, HTTPException, status

from src.config import get_settings
from src.dataset import SkeletonSequence
from src.exceptions import AseaError
from src.models import InspectRequest, InspectResponse
from src.network import PERSONS, AseaNetwork
from src.repository import CheckpointRepository
from src.service import InspectionService

router = APIRouter()


@lru_cache(maxsize=4)
def load_served_model(path: str) -> AseaNetwork:
    """Load a checkpoint once per manifest path."""
    manifest = Path(path)
    return CheckpointRepository(manifest.parent).load(manifest.stem)


def get_model() -> AseaNetwork:
    """Model configured through ``ASEA_MODEL_PATH``."""
    settings = get_settings()
    if not settings.model_path:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="no model configured; set ASEA_MODEL_PATH",
        )
    try:
        return load_served_model(settings.model_path)
    except AseaError as e:
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=str(e)) from e


def frames_to_sequence(frames: list, joints: int) -> SkeletonSequence:
    """Frames of ``6N`` floats (person 0 then person 1, xyz per joint) to a clip."""
    width = PERSONS * joints * 3
    for index, frame in enumerate(frames):
        if len(frame) != width:
            raise HTTPException(
                status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
                detail=f"frame {index} has {len(frame)} values, expected {width}",
            )
    array = np.asarray(frames, dtype=np.float64).reshape(len(frames), PERSONS, joints, 3)
    return SkeletonSequence(coords=array.transpose(3, 0, 1, 2).copy(), label=0, subject_id="request", source="api")


@router.get("/model")
def describe_model(model: AseaNetwork = Depends(get_model)) -> dict:
    """Configuration and parameter breakdown of the served model."""
    return InspectionService(model).summary()


@router.post("/inspect", response_model=InspectResponse)
def inspect_clip(request: InspectRequest, model: AseaNetwork = Depends(get_model)) -> InspectResponse:
    """Classify one clip and return its joint selection and attention weights."""
    try:
        sequence = frames_to_sequence(request.frames, model.graph.n_joints)
        return InspectionService(model).inspect(sequence)
    except AseaError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e)) from e
