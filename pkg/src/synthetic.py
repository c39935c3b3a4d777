"""Seeded generator of two-person interaction clips on the 15-joint skeleton.

Coordinates use x along the line joining the two people, y up and z depth.
"""

import logging
from typing import List

import numpy as np

from src.dataset import SkeletonSequence
from src.models import InteractionClass, SynthSpec

logger = logging.getLogger(__name__)

# Standing pose facing +x, joints in the SBU order, meters.
REST_POSE = np.array(
    [
        [0.00, 1.70, 0.00],  # head
        [0.00, 1.50, 0.00],  # neck
        [0.00, 1.10, 0.00],  # torso
        [0.00, 1.45, 0.20],  # left shoulder
        [0.00, 1.15, 0.25],  # left elbow
        [0.00, 0.90, 0.25],  # left hand
        [0.00, 1.45, -0.20],  # right shoulder
        [0.00, 1.15, -0.25],  # right elbow
        [0.00, 0.90, -0.25],  # right hand
        [0.00, 0.90, 0.10],  # left hip
        [0.00, 0.50, 0.10],  # left knee
        [0.00, 0.05, 0.10],  # left foot
        [0.00, 0.90, -0.10],  # right hip
        [0.00, 0.50, -0.10],  # right knee
        [0.00, 0.05, -0.10],  # right foot
    ]
)
RIGHT_ELBOW, RIGHT_HAND, RIGHT_SHOULDER = 7, 8, 6


def _body(center_x: float, facing: float, scale: float) -> np.ndarray:
    """Rest pose placed at ``center_x``; ``facing`` = +1 faces +x, -1 faces -x."""
    pose = REST_POSE * scale
    pose = pose * np.array([1.0, 1.0, facing])
    pose[:, 0] += center_x
    return pose


def _clip(kind: InteractionClass, frames: int, rng: np.random.Generator) -> np.ndarray:
    """Noise-free clip as ``[T, M=2, N, 3]``."""
    t = np.linspace(0.0, 1.0, frames)
    scale = rng.uniform(0.9, 1.1, size=2)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    cycles = rng.uniform(1.5, 2.5)
    clip = np.zeros((frames, 2, REST_POSE.shape[0], 3))

    if kind in (InteractionClass.APPROACH, InteractionClass.DEPART):
        far = rng.uniform(1.8, 2.4)
        near = rng.uniform(0.6, 0.9)
        separation = far + (near - far) * t
        if kind == InteractionClass.DEPART:
            separation = separation[::-1]
        for f in range(frames):
            clip[f, 0] = _body(-separation[f] / 2.0, 1.0, scale[0])
            clip[f, 1] = _body(separation[f] / 2.0, -1.0, scale[1])
        return clip

    separation = rng.uniform(0.9, 1.2)
    for f in range(frames):
        clip[f, 0] = _body(-separation / 2.0, 1.0, scale[0])
        clip[f, 1] = _body(separation / 2.0, -1.0, scale[1])

    if kind == InteractionClass.HANDSHAKE:
        reach = 0.5 * (1.0 - np.cos(2.0 * np.pi * cycles * t + phase))
        midpoint = np.array([0.0, 1.1, 0.0])
        for person in range(2):
            rest_hand = clip[0, person, RIGHT_HAND].copy()
            rest_elbow = clip[0, person, RIGHT_ELBOW].copy()
            shoulder = clip[0, person, RIGHT_SHOULDER]
            for f in range(frames):
                hand = rest_hand + reach[f] * (midpoint - rest_hand)
                clip[f, person, RIGHT_HAND] = hand
                clip[f, person, RIGHT_ELBOW] = rest_elbow + 0.5 * reach[f] * (
                    (shoulder + hand) / 2.0 - rest_elbow
                )
        return clip

    # wave: the first person's right arm swings vertically
    swing = 0.35 * np.sin(2.0 * np.pi * cycles * t + phase)
    for f in range(frames):
        clip[f, 0, RIGHT_HAND, 1] += 0.6 + swing[f]
        clip[f, 0, RIGHT_ELBOW, 1] += 0.3 + 0.5 * swing[f]
    return clip


def synthesize(spec: SynthSpec, seed: int) -> List[SkeletonSequence]:
    """Generate ``len(classes) * samples_per_class`` labeled clips deterministically."""
    rng = np.random.default_rng(seed)
    sequences: List[SkeletonSequence] = []
    for label, kind in enumerate(spec.classes):
        for index in range(spec.samples_per_class):
            clip = _clip(kind, spec.frames, rng)
            if spec.noise > 0:
                clip = clip + rng.normal(0.0, spec.noise, size=clip.shape)
            sequences.append(
                SkeletonSequence(
                    coords=clip.transpose(3, 0, 1, 2).copy(),
                    label=label,
                    subject_id=f"pair{index % spec.n_pairs:02d}",
                    source="synthetic",
                    name=f"{kind.value}_{index:03d}",
                )
            )
    logger.info("synthesized %d clips over classes %s", len(sequences), [c.value for c in spec.classes])
    return sequences
