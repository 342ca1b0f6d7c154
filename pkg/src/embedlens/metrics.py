"""Diversity and shift metrics over labeled embedding sets.

* Centroid Distance: per-class mean of squared codiff from each embedding
  to its class centroid (diversity), averaged unweighted across classes
  for the set-level figure.
* Centroid shift: codiff between the spherical centroids of two
  collections for the same class (concept drift between sets).
* Frechet distance: squared mean difference plus a covariance trace term;
  the two terms are exposed separately because they carry different
  signal, and the mean term has a literal absolute-norm variant selected
  by flag.
* Average cosine similarity: mean over queries of the similarity to their
  paired reference (nearest by default, true-class behind a flag).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import geometry
from .dataset import EmbeddingSet
from .errors import (
    ClassUniverseMismatch,
    DimensionMismatch,
    EmptySet,
    NumericalFailure,
    TooFewSamples,
    ValidationError,
)

if TYPE_CHECKING:
    from .classify import ReferenceIndex

# Eigenvalues of a nominally-PSD matrix below this are a numerical
# failure; negatives above it are rounding noise and clamp to zero.
NEG_EIGENVALUE_TOL = -1e-8


@dataclass(frozen=True)
class ClassMetrics:
    class_id: int
    centroid: np.ndarray
    centroid_distance: float
    n: int


@dataclass(frozen=True)
class SetMetrics:
    per_class: tuple[ClassMetrics, ...]
    set_centroid_distance: float


def class_centroid_distance(es) -> float:
    """Mean squared codiff from each embedding to the class centroid."""
    arr = np.asarray(es, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[0] == 0:
        raise EmptySet("centroid distance of an empty class is undefined")
    centroid = geometry.spherical_centroid(arr)
    diffs = 1.0 - np.clip(geometry.normalize_rows(arr) @ centroid, -1.0, 1.0)
    return float(np.mean(diffs ** 2))


def set_centroid_distance(es: EmbeddingSet) -> SetMetrics:
    """Per-class Centroid Distance plus its unweighted mean over classes."""
    per_class = []
    for lb, arr in es.iter_classes():
        centroid = geometry.spherical_centroid(arr)
        diffs = 1.0 - np.clip(geometry.normalize_rows(arr) @ centroid, -1.0, 1.0)
        per_class.append(
            ClassMetrics(lb.id, centroid, float(np.mean(diffs ** 2)), arr.shape[0])
        )
    value = float(np.mean([cm.centroid_distance for cm in per_class]))
    return SetMetrics(tuple(per_class), value)


def centroid_shift(a, b) -> float:
    """codiff between the spherical centroids of two collections."""
    return geometry.codiff(
        geometry.spherical_centroid(a), geometry.spherical_centroid(b)
    )


def _psd_eig(cov: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        vals, vecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition of {what} diverged: {exc}") from exc
    worst = float(vals.min(initial=0.0))
    if worst < NEG_EIGENVALUE_TOL:
        raise NumericalFailure(
            f"{what} has eigenvalue {worst:.3e} below tolerance {NEG_EIGENVALUE_TOL}"
        )
    return np.clip(vals, 0.0, None), vecs


def frechet_terms(x, y, squared_mean: bool = True) -> tuple[float, float]:
    """The two Frechet-distance terms (mean term, covariance trace term).

    The trace term tr(Cx + Cy - 2(CxCy)^(1/2)) is evaluated through the
    symmetric eigendecomposition of Cx^(1/2) Cy Cx^(1/2), which has the
    same trace root as the unsymmetric product but keeps everything in a
    symmetric eigensolver. Covariances use 1/(N-1) normalization.

    ``squared_mean`` selects ||mu_x - mu_y||^2 (the common convention);
    False selects the plain norm |mu_x - mu_y|.
    """
    ax = np.asarray(x, dtype=np.float64)
    ay = np.asarray(y, dtype=np.float64)
    if ax.ndim != 2 or ay.ndim != 2:
        raise DimensionMismatch("expected 2-d sample arrays")
    if ax.shape[1] != ay.shape[1]:
        raise DimensionMismatch(
            f"dimensions differ: {ax.shape[1]} vs {ay.shape[1]}"
        )
    if ax.shape[0] < 2 or ay.shape[0] < 2:
        raise TooFewSamples(
            "need at least 2 samples on each side for a covariance "
            f"(got {ax.shape[0]} and {ay.shape[0]})"
        )
    mu_x = ax.mean(axis=0)
    mu_y = ay.mean(axis=0)
    cov_x = np.cov(ax, rowvar=False, ddof=1).reshape(ax.shape[1], ax.shape[1])
    cov_y = np.cov(ay, rowvar=False, ddof=1).reshape(ay.shape[1], ay.shape[1])

    mean_norm = float(np.linalg.norm(mu_x - mu_y))
    mean_term = mean_norm ** 2 if squared_mean else mean_norm

    vals_x, vecs_x = _psd_eig(cov_x, "first covariance")
    sqrt_x = (vecs_x * np.sqrt(vals_x)) @ vecs_x.T
    inner = sqrt_x @ cov_y @ sqrt_x
    inner = (inner + inner.T) / 2.0
    vals_i, _ = _psd_eig(inner, "symmetrized covariance product")
    trace_term = float(
        np.trace(cov_x) + np.trace(cov_y) - 2.0 * np.sum(np.sqrt(vals_i))
    )
    # The trace term is non-negative in exact arithmetic; only rounding
    # can take it below zero.
    return mean_term, max(trace_term, 0.0)


def frechet_distance(x, y, squared_mean: bool = True) -> float:
    """Frechet distance between two sample collections (sum of terms)."""
    mean_term, trace_term = frechet_terms(x, y, squared_mean=squared_mean)
    return mean_term + trace_term


def avg_cos_similarity(
    reference: "ReferenceIndex",
    queries: EmbeddingSet,
    pairing: str = "nearest",
) -> float:
    """Mean cosine similarity between each query and its paired reference.

    ``pairing="nearest"`` pairs every query with its most similar
    reference entry; ``pairing="true_class"`` pairs it with the best entry
    of the query's own class instead.
    """
    if reference.dimension != queries.dimension:
        raise DimensionMismatch(
            f"reference dimension {reference.dimension} != query "
            f"dimension {queries.dimension}"
        )
    rows, true_ids = queries.stacked()
    q = geometry.normalize_rows(rows)
    sims = np.clip(q @ reference.vectors.T, -1.0, 1.0)
    if pairing == "nearest":
        return float(sims.max(axis=1).mean())
    if pairing == "true_class":
        ref_ids = set(int(c) for c in reference.class_ids)
        missing = sorted(set(int(c) for c in true_ids) - ref_ids)
        if missing:
            raise ClassUniverseMismatch(
                f"query classes {missing} have no reference entries"
            )
        best = np.empty(q.shape[0])
        for cid in np.unique(true_ids):
            cols = np.flatnonzero(reference.class_ids == cid)
            mask = true_ids == cid
            best[mask] = sims[np.ix_(mask, cols)].max(axis=1)
        return float(best.mean())
    raise ValidationError(f"unknown pairing rule {pairing!r}")
