"""Cross-modality linear separability probe and similarity summaries.

The probe is a classic mistake-driven perceptron with bias. It is an
existence certificate, not a max-margin fit: if some hyperplane separates
the two point clouds, the perceptron reaches a zero-mistake epoch in
finite time, and the returned (weights, bias) can be checked directly
against every point. Failure to converge within the epoch budget is
reported as "not separated within budget" (separable=False), because the
perceptron cannot certify inseparability.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import classify, metrics
from .seeding import derive_rng
from .dataset import EmbeddingSet, Modality
from .errors import DimensionMismatch, EmptySet

DEFAULT_MAX_EPOCHS = 1000


@dataclass(frozen=True)
class ProbeResult:
    """Outcome of a linear separability probe.

    ``separable=True`` implies ``training_accuracy == 1.0`` and the
    returned hyperplane classifies every input correctly. When not
    separable within the budget, the weights of the best epoch seen are
    returned together with that epoch's accuracy, and the margin is 0.
    """

    separable: bool
    training_accuracy: float
    epochs_used: int
    margin: float
    weights: np.ndarray
    bias: float


def _canonical_order(points: np.ndarray) -> np.ndarray:
    # Sort rows by content so the visit order (and therefore the update
    # trajectory) does not depend on which cloud was passed first.
    return np.lexsort(points.T[::-1])


def train_linear_probe(
    a, b, max_epochs: int = DEFAULT_MAX_EPOCHS, seed: int = 0
) -> ProbeResult:
    """Train a bias perceptron labeling ``a`` -> +1 and ``b`` -> -1.

    Points are visited in a per-epoch seeded shuffle over a content-sorted
    order, which makes the result deterministic and exactly antisymmetric
    under swapping ``a`` and ``b`` (for disjoint point clouds): the swap
    negates weights and bias and preserves the separable flag.
    """
    pa = np.asarray(a, dtype=np.float64)
    pb = np.asarray(b, dtype=np.float64)
    if pa.ndim != 2 or pb.ndim != 2:
        raise DimensionMismatch("expected 2-d point arrays")
    if pa.shape[0] == 0 or pb.shape[0] == 0:
        raise EmptySet("both point clouds must be non-empty")
    if pa.shape[1] != pb.shape[1]:
        raise DimensionMismatch(
            f"dimensions differ: {pa.shape[1]} vs {pb.shape[1]}"
        )
    points = np.concatenate([pa, pb])
    labels = np.concatenate(
        [np.ones(pa.shape[0]), -np.ones(pb.shape[0])]
    )
    order = _canonical_order(points)
    points = points[order]
    labels = labels[order]
    n, dim = points.shape

    rng = derive_rng(seed)
    w = np.zeros(dim)
    bias = 0.0
    best_acc = 0.0
    best_w = w.copy()
    best_bias = bias
    epochs_used = max_epochs
    separable = False
    for epoch in range(1, max_epochs + 1):
        for i in rng.permutation(n):
            y = labels[i]
            if y * (points[i] @ w + bias) <= 0.0:
                w += y * points[i]
                bias += y
        scores = labels * (points @ w + bias)
        acc = float(np.mean(scores > 0.0))
        if acc > best_acc:
            best_acc = acc
            best_w = w.copy()
            best_bias = bias
        if acc == 1.0:
            separable = True
            epochs_used = epoch
            break

    if separable:
        margin = float(np.min(labels * (points @ w + bias)) / np.linalg.norm(w))
        return ProbeResult(True, 1.0, epochs_used, margin, w, float(bias))
    return ProbeResult(False, best_acc, epochs_used, 0.0, best_w, float(best_bias))


def verify_hyperplane(a, b, weights, bias: float) -> bool:
    """Check a claimed separating hyperplane point-by-point."""
    pa = np.asarray(a, dtype=np.float64)
    pb = np.asarray(b, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    return bool(
        np.all(pa @ w + bias > 0.0) and np.all(pb @ w + bias < 0.0)
    )


@dataclass(frozen=True)
class SimilarityRow:
    reference_set: str
    query_set: str
    group: str
    avg_cos_similarity: float


def _pair_group(ref: EmbeddingSet, query: EmbeddingSet) -> str:
    if ref.modality != query.modality:
        return "cross-modality"
    if ref.modality is Modality.PRMT:
        return "within-prompt"
    return "within-image"


def modality_similarity_summary(
    sets: Sequence[EmbeddingSet],
) -> list[SimilarityRow]:
    """Average nearest-centroid cosine similarity for every ordered set pair.

    Rows are grouped into within-prompt, within-image, and cross-modality
    blocks. Reference roles use a name's train split and query roles its
    eval split, falling back to the only split available.
    """
    if len({es.name for es in sets}) < 2:
        raise EmptySet("need at least 2 distinct set names to summarize")
    roles = classify.group_roles(sets)
    rows = []
    for ref_name, ref_role in roles.items():
        index = classify.build_centroid_references(ref_role["reference"])
        for query_name, query_role in roles.items():
            query = query_role["query"]
            value = metrics.avg_cos_similarity(index, query)
            rows.append(
                SimilarityRow(
                    ref_name,
                    query_name,
                    _pair_group(ref_role["reference"], query),
                    value,
                )
            )
    group_order = {"within-prompt": 0, "within-image": 1, "cross-modality": 2}
    rows.sort(key=lambda r: (group_order[r.group], r.reference_set, r.query_set))
    return rows
