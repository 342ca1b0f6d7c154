"""Synthetic labeled clusters on the unit hypersphere.

The simulator is the toolkit's ground-truth oracle: it produces paired
reference/query sets whose diversity (spread) and concept drift (shift
angle) are independent dials with known closed forms. At spread 0 the
per-class centroid shift equals exactly 1 - cos(theta), because the query
mean is the reference mean rotated by theta inside a fixed seeded 2-plane.

Spread is a Gaussian perturbation before renormalization, not a von
Mises-Fisher draw; the oracle only needs monotone spread control, and the
Gaussian form avoids special-function sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .dataset import ClassLabel, EmbeddingSet, Modality, Split
from .errors import DegenerateRotation, ValidationError
from .seeding import derive_rng

# Seed stream ids, so per-purpose generators never collide.
_STREAM_MEANS = 0
_STREAM_ROTATION = 1
_STREAM_REFERENCES = 2
_STREAM_QUERIES = 3


@dataclass(frozen=True)
class ClusterSpec:
    """Parameters of one simulated experiment.

    ``spread`` is the standard deviation of the isotropic perturbation
    applied before renormalization; ``shift_degrees`` is the angle between
    each class's reference mean and its query mean.
    """

    dimension: int
    classes: int
    per_class: int
    spread: float
    shift_degrees: float
    seed: int

    def __post_init__(self):
        if self.dimension < 2:
            raise ValidationError(f"dimension must be >= 2, got {self.dimension}")
        if self.classes < 2:
            raise ValidationError(f"need >= 2 classes, got {self.classes}")
        if self.per_class < 1:
            raise ValidationError(f"need >= 1 sample per class, got {self.per_class}")
        if self.spread < 0:
            raise ValidationError(f"spread must be >= 0, got {self.spread}")
        if not 0.0 <= self.shift_degrees <= 180.0:
            raise ValidationError(
                f"shift angle must be in [0, 180] degrees, got {self.shift_degrees}"
            )


def sample_class_cluster(mean, spread: float, n: int, seed) -> np.ndarray:
    """n unit vectors drawn as normalize(mean + spread * gaussian).

    ``seed`` may be an int or a tuple key. Spread 0 returns n copies of
    the (normalized) mean.
    """
    if spread < 0:
        raise ValidationError(f"spread must be >= 0, got {spread}")
    if n < 1:
        raise ValidationError(f"need n >= 1, got {n}")
    center = geometry.unit_normalize(mean)
    if spread == 0.0:
        return np.tile(center, (n, 1))
    key = seed if isinstance(seed, tuple) else (seed,)
    noise = derive_rng(*key).standard_normal((n, center.shape[0]))
    return geometry.normalize_rows(center + spread * noise)


def _orthonormal_direction(mean: np.ndarray, raw: np.ndarray) -> np.ndarray:
    residual = raw - np.dot(raw, mean) * mean
    norm = float(np.linalg.norm(residual))
    if norm <= geometry.ZERO_NORM_EPS:
        raise DegenerateRotation(
            "drawn rotation direction is parallel to the class mean"
        )
    return residual / norm


def rotate_towards(mean: np.ndarray, direction: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate a unit vector by the given angle towards an orthonormal
    direction, staying on the sphere."""
    theta = math.radians(degrees)
    return math.cos(theta) * mean + math.sin(theta) * direction


def simulate_experiment(
    spec: ClusterSpec, name: str = "simulated", modality: Modality = Modality.IM
) -> tuple[EmbeddingSet, EmbeddingSet]:
    """Generate a (references, queries) pair under one spec.

    Class means are drawn uniformly on the sphere; reference clusters form
    around them, query clusters around the rotated means. Both sets share
    class ids and carry the train/eval split tags, so every downstream
    tool sees the same shape of data as with real ingested sets.
    """
    if spec.dimension < 2:
        raise DegenerateRotation("no rotation plane exists below dimension 2")
    labels = [ClassLabel(i, f"class-{i}") for i in range(spec.classes)]
    means = geometry.normalize_rows(
        derive_rng(spec.seed, _STREAM_MEANS).standard_normal(
            (spec.classes, spec.dimension)
        )
    )
    rotation_raw = derive_rng(spec.seed, _STREAM_ROTATION).standard_normal(
        (spec.classes, spec.dimension)
    )

    ref_classes = {}
    query_classes = {}
    for label in labels:
        mean = means[label.id]
        direction = _orthonormal_direction(mean, rotation_raw[label.id])
        query_mean = rotate_towards(mean, direction, spec.shift_degrees)
        ref_classes[label.id] = sample_class_cluster(
            mean, spec.spread, spec.per_class,
            (spec.seed, _STREAM_REFERENCES, label.id),
        )
        query_classes[label.id] = sample_class_cluster(
            query_mean, spec.spread, spec.per_class,
            (spec.seed, _STREAM_QUERIES, label.id),
        )

    references = EmbeddingSet(
        name, spec.dimension, modality, Split.TRAIN, labels, ref_classes
    )
    queries = EmbeddingSet(
        name, spec.dimension, modality, Split.EVAL, labels, query_classes
    )
    return references, queries


def offset_along_direction(rows, direction, offset: float) -> np.ndarray:
    """Shift every row by offset * direction, then renormalize.

    Used to manufacture a modality-gap analog: two clouds separated by a
    common displacement are linearly separable by construction.
    """
    arr = geometry.normalize_rows(np.asarray(rows, dtype=np.float64))
    d = geometry.unit_normalize(direction)
    return geometry.normalize_rows(arr + offset * d)
