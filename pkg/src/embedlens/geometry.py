"""Unit-sphere vector kernels.

Every metric and classifier in the toolkit reduces to these operations:
unit normalization, cosine similarity, its complement ("codiff"), and the
spherical centroid (unit-normalized sum of unit-normalized vectors).

All functions accept array-likes and compute in float64 regardless of the
storage precision of the caller; sums are accumulated in float64 because
per-class populations can reach the low thousands and 32-bit accumulation
loses digits to cancellation in high dimensions.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, EmptySet, ZeroVector

# Norms at or below this are treated as "no direction".
ZERO_NORM_EPS = 1e-12


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


def unit_normalize(v) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm, preserving its direction.

    Raises ZeroVector when the norm is at or below 1e-12 (degenerate
    input, e.g. an all-zero row in a corrupt file).
    """
    arr = _as_vector(v)
    norm = float(np.linalg.norm(arr))
    if norm <= ZERO_NORM_EPS:
        raise ZeroVector(f"cannot normalize vector with norm {norm:.3e}")
    return arr / norm


def normalize_rows(m) -> np.ndarray:
    """Unit-normalize every row of a 2-d array.

    Raises ZeroVector naming the first offending row index.
    """
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d array, got shape {arr.shape}")
    norms = np.linalg.norm(arr, axis=1)
    bad = np.flatnonzero(norms <= ZERO_NORM_EPS)
    if bad.size:
        raise ZeroVector(f"row {int(bad[0])} has norm {norms[bad[0]]:.3e}")
    return arr / norms[:, None]


def cosine_similarity(a, b) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1].

    Inputs are expected to be unit-normalized; the clamp absorbs the
    rounding that can push the raw dot product past the bound.
    """
    va = _as_vector(a)
    vb = _as_vector(b)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"dimensions differ: {va.shape[0]} vs {vb.shape[0]}")
    return float(np.clip(np.dot(va, vb), -1.0, 1.0))


def codiff(a, b) -> float:
    """Complement of cosine similarity: 1 - cos(a, b), in [0, 2]."""
    return 1.0 - cosine_similarity(a, b)


def spherical_centroid(es) -> np.ndarray:
    """Unit-normalized sum of the unit-normalized input vectors.

    Raises EmptySet on an empty input and ZeroVector when the inputs
    cancel (perfectly opposed directions): picking an arbitrary direction
    there would silently corrupt every downstream metric.
    """
    arr = np.asarray(es, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[0] == 0:
        raise EmptySet("cannot take the centroid of an empty collection")
    summed = normalize_rows(arr).sum(axis=0)
    norm = float(np.linalg.norm(summed))
    if norm <= ZERO_NORM_EPS:
        raise ZeroVector(
            f"inputs cancel (sum norm {norm:.3e}); centroid direction undefined"
        )
    return summed / norm
