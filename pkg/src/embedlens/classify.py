"""Centroid and k-NN classification over reference/query set pairs.

References are either one spherical centroid per class or the full
labeled reference population; queries are classified by highest cosine
similarity. The nearest-neighbor search is an exact brute-force sweep,
blocked over query rows so the similarity matrix never exceeds a bounded
working set; at the scales involved the scan cost is dominated by the
reference count, so the layout is kept contiguous and the matmul does the
work.

Randomness appears only in tie-breaks and is derived per query from
(seed, query index), so results cannot depend on block sizes, thread
counts, or evaluation order.
"""
from __future__ import annotations

import enum
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import geometry
from .seeding import derive_rng
from .dataset import EmbeddingSet
from .errors import (
    ClassUniverseMismatch,
    DimensionMismatch,
    EmbedLensError,
    KTooLarge,
    MismatchedResults,
    ValidationError,
    ZeroVector,
)

QUERY_BLOCK_ROWS = 4096


@dataclass(frozen=True)
class ReferenceIndex:
    """Per-class reference structure for the similarity sweep.

    ``mode="centroid"`` holds exactly one collapsed centroid per class;
    ``mode="full"`` holds every reference embedding with its class label.
    Rows are unit-normalized float64 in set class order.
    """

    mode: str
    vectors: np.ndarray
    class_ids: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def n_entries(self) -> int:
        return int(self.vectors.shape[0])


@dataclass(frozen=True)
class Prediction:
    """Outcome of classifying one query.

    ``correct`` is meaningful only when the true class was supplied to the
    classifying call.
    """

    query_index: int
    predicted_class: int
    similarity: float
    correct: bool


@dataclass(frozen=True)
class ExperimentSpec:
    reference_set: str
    query_set: str
    method: str
    seed: int


@dataclass(frozen=True)
class ExperimentResult:
    spec: ExperimentSpec
    overall_accuracy: float
    per_class_accuracy: Mapping[int, float]
    avg_cos_similarity: float
    n_queries: int
    predictions: tuple[Prediction, ...]


class FailureTag(enum.Enum):
    HEALTHY = "healthy"
    CONCEPT_FAILURE = "concept-failure"
    SHIFT_FAILURE = "shift-failure"


METHOD_RE = re.compile(r"^knn(\d+)$")


def parse_method(label: str) -> tuple[str, int | None]:
    """Split a method label into ("centroid", None) or ("knn", k)."""
    if label == "centroid":
        return "centroid", None
    m = METHOD_RE.match(label)
    if m:
        k = int(m.group(1))
        if k < 1:
            raise ValidationError(f"k must be >= 1 in method {label!r}")
        return "knn", k
    raise ValidationError(f"unknown method {label!r} (expected 'centroid' or 'knn<k>')")


def build_centroid_references(refs: EmbeddingSet) -> ReferenceIndex:
    """Collapse each reference class to its spherical centroid."""
    rows = []
    ids = []
    for lb, arr in refs.iter_classes():
        try:
            rows.append(geometry.spherical_centroid(arr))
        except ZeroVector as exc:
            raise ZeroVector(f"class {lb.id} of '{refs.name}': {exc}") from exc
        ids.append(lb.id)
    return ReferenceIndex(
        "centroid", np.ascontiguousarray(rows), np.asarray(ids, dtype=np.int64)
    )


def build_full_references(refs: EmbeddingSet) -> ReferenceIndex:
    """Keep every reference embedding, unit-normalized, with its label."""
    rows, ids = refs.stacked()
    return ReferenceIndex(
        "full", np.ascontiguousarray(geometry.normalize_rows(rows)), ids
    )


def _tie_rng(seed: int, query_index: int) -> np.random.Generator:
    return derive_rng(seed, query_index)


def nearest_reference(
    q,
    index: ReferenceIndex,
    seed: int,
    query_index: int = 0,
    true_class: int | None = None,
) -> Prediction:
    """The reference entry with maximum cosine similarity to ``q``.

    Exact similarity ties are broken by a uniform seeded choice among the
    tied entries, keyed by (seed, query index).
    """
    vec = geometry.unit_normalize(q)
    if vec.shape[0] != index.dimension:
        raise DimensionMismatch(
            f"query dimension {vec.shape[0]} != index dimension {index.dimension}"
        )
    sims = np.clip(index.vectors @ vec, -1.0, 1.0)
    best = float(sims.max())
    tied = np.flatnonzero(sims == best)
    col = int(tied[0]) if tied.size == 1 else int(
        tied[_tie_rng(seed, query_index).integers(tied.size)]
    )
    predicted = int(index.class_ids[col])
    return Prediction(
        query_index, predicted, best,
        true_class is not None and predicted == true_class,
    )


def _check_universe(refs: EmbeddingSet, queries: EmbeddingSet) -> None:
    if refs.dimension != queries.dimension:
        raise DimensionMismatch(
            f"reference dimension {refs.dimension} != query dimension "
            f"{queries.dimension}"
        )
    if set(refs.class_ids) != set(queries.class_ids):
        raise ClassUniverseMismatch(
            f"sets '{refs.name}' and '{queries.name}' have different class ids"
        )


def _predict_nearest(
    sims: np.ndarray, offset: int, index: ReferenceIndex, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    row_max = sims.max(axis=1)
    cols = sims.argmax(axis=1)
    tie_rows = np.flatnonzero((sims == row_max[:, None]).sum(axis=1) > 1)
    for i in tie_rows:
        tied = np.flatnonzero(sims[i] == row_max[i])
        cols[i] = tied[_tie_rng(seed, offset + int(i)).integers(tied.size)]
    return index.class_ids[cols], row_max


def _vote_one(
    row: np.ndarray, k: int, index: ReferenceIndex, rng_key: tuple[int, int]
) -> tuple[int, float]:
    """Majority vote over the k most similar reference entries.

    Boundary ties in the top-k selection resolve by (-similarity, entry
    index), which is stable and order-independent. Vote ties resolve by
    the nearest single member among the tied classes, then by a seeded
    uniform choice.
    """
    n = row.shape[0]
    if k >= n:
        chosen = np.arange(n)
    else:
        part = np.argpartition(-row, k - 1)[:k]
        threshold = row[part].min()
        cand = np.flatnonzero(row >= threshold)
        order = np.lexsort((cand, -row[cand]))
        chosen = cand[order[:k]]
    labels = index.class_ids[chosen]
    uniq, counts = np.unique(labels, return_counts=True)
    leaders = uniq[counts == counts.max()]
    if leaders.size > 1:
        best_sims = np.array(
            [row[chosen[labels == cid]].max() for cid in leaders]
        )
        leaders = leaders[best_sims == best_sims.max()]
    if leaders.size > 1:
        predicted = int(leaders[_tie_rng(*rng_key).integers(leaders.size)])
    else:
        predicted = int(leaders[0])
    return predicted, float(row[chosen[labels == predicted]].max())


def _predict_all(
    index: ReferenceIndex, queries: EmbeddingSet, seed: int, k: int | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Classify every query row; returns (true, predicted, winner sim,
    nearest-reference sim) arrays in query set order."""
    rows, true_ids = queries.stacked()
    q = geometry.normalize_rows(rows)
    n = q.shape[0]
    preds = np.empty(n, dtype=np.int64)
    win_sims = np.empty(n)
    near_sims = np.empty(n)
    for start in range(0, n, QUERY_BLOCK_ROWS):
        stop = min(start + QUERY_BLOCK_ROWS, n)
        sims = np.clip(q[start:stop] @ index.vectors.T, -1.0, 1.0)
        near_sims[start:stop] = sims.max(axis=1)
        if k is None:
            block_preds, block_sims = _predict_nearest(sims, start, index, seed)
            preds[start:stop] = block_preds
            win_sims[start:stop] = block_sims
        else:
            for i in range(stop - start):
                preds[start + i], win_sims[start + i] = _vote_one(
                    sims[i], k, index, (seed, start + i)
                )
    return true_ids, preds, win_sims, near_sims


def _build_result(
    spec: ExperimentSpec,
    queries: EmbeddingSet,
    true_ids: np.ndarray,
    preds: np.ndarray,
    win_sims: np.ndarray,
    near_sims: np.ndarray,
) -> ExperimentResult:
    correct = preds == true_ids
    per_class = {
        lb.id: float(correct[true_ids == lb.id].mean()) for lb in queries.labels
    }
    predictions = tuple(
        Prediction(i, int(preds[i]), float(win_sims[i]), bool(correct[i]))
        for i in range(true_ids.shape[0])
    )
    return ExperimentResult(
        spec=spec,
        overall_accuracy=float(correct.mean()),
        per_class_accuracy=per_class,
        avg_cos_similarity=float(near_sims.mean()),
        n_queries=int(true_ids.shape[0]),
        predictions=predictions,
    )


def centroid_accuracy(
    refs: EmbeddingSet, queries: EmbeddingSet, seed: int
) -> ExperimentResult:
    """Fraction of queries whose nearest class centroid carries their label.

    Also fills per-class accuracies (bucketed by the query's true class;
    the overall figure is the query-count-weighted mean) and the average
    nearest-reference cosine similarity.
    """
    _check_universe(refs, queries)
    index = build_centroid_references(refs)
    spec = ExperimentSpec(refs.name, queries.name, "centroid", seed)
    return _build_result(
        spec, queries, *_predict_all(index, queries, seed, None)
    )


def knn_classify(
    refs: EmbeddingSet, queries: EmbeddingSet, k: int, seed: int
) -> ExperimentResult:
    """Majority vote over the k most similar reference embeddings.

    The reference set is not collapsed to centroids; every labeled
    reference row participates in the sweep.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    _check_universe(refs, queries)
    if k > refs.n_total:
        raise KTooLarge(
            f"k={k} exceeds the {refs.n_total} reference embeddings of "
            f"'{refs.name}'"
        )
    index = build_full_references(refs)
    spec = ExperimentSpec(refs.name, queries.name, f"knn{k}", seed)
    return _build_result(spec, queries, *_predict_all(index, queries, seed, k))


@dataclass(frozen=True)
class MatrixCell:
    """One (reference set, query set, method) cell of the experiment matrix."""

    experiment: int
    reference_set: str
    query_set: str
    method: str
    result: ExperimentResult | None = None
    error: str | None = None
    skipped: bool = False


def group_roles(sets: Sequence[EmbeddingSet]) -> dict[str, dict[str, EmbeddingSet]]:
    """Group sets by name and assign reference/query roles.

    References use a name's train split and queries its eval split; a name
    present with only one split serves both roles (the one-instance-per-
    class reference sets cannot be split).
    """
    by_name: dict[str, dict[str, EmbeddingSet]] = {}
    for es in sets:
        slot = by_name.setdefault(es.name, {})
        key = es.split.value
        if key in slot:
            raise ValidationError(
                f"two sets named '{es.name}' carry the same split tag '{key}'"
            )
        slot[key] = es
    roles = {}
    for name, slot in by_name.items():
        only = next(iter(slot.values()))
        roles[name] = {
            "reference": slot.get("train", only),
            "query": slot.get("eval", only),
        }
    return roles


def _skip_matches(rule: Mapping[str, str], ref: str, query: str, method: str) -> bool:
    return (
        rule.get("reference", ref) == ref
        and rule.get("query", query) == query
        and rule.get("method", method) == method
    )


def run_experiment_matrix(
    sets: Sequence[EmbeddingSet],
    methods: Sequence[str],
    seed: int,
    skip: Iterable[Mapping[str, str]] = (),
    threads: int | None = None,
) -> list[MatrixCell]:
    """Run every (reference set, query set, method) combination.

    Experiment numbers enumerate the (query, reference) pairs and are
    shared by all methods on the same pair. Cells listed in ``skip``
    (dicts with any of the keys reference/query/method; missing keys are
    wildcards) are marked skipped. Failing cells record the error and the
    matrix continues.

    Every cell uses the same seed as a direct call to centroid_accuracy /
    knn_classify would, so each can be recomputed independently.
    """
    for label in methods:
        parse_method(label)
    roles = group_roles(sets)
    names = list(roles)
    if not names:
        raise ValidationError("no sets supplied")
    skip_rules = list(skip)

    cells: list[tuple[int, str, str, str]] = []
    pair_no = 0
    for query_name in names:
        for ref_name in names:
            pair_no += 1
            for label in methods:
                cells.append((pair_no, ref_name, query_name, label))

    def run_cell(cell: tuple[int, str, str, str]) -> MatrixCell:
        number, ref_name, query_name, label = cell
        if any(_skip_matches(r, ref_name, query_name, label) for r in skip_rules):
            return MatrixCell(number, ref_name, query_name, label, skipped=True)
        kind, k = parse_method(label)
        try:
            if kind == "centroid":
                result = centroid_accuracy(
                    roles[ref_name]["reference"], roles[query_name]["query"], seed
                )
            else:
                result = knn_classify(
                    roles[ref_name]["reference"], roles[query_name]["query"], k, seed
                )
        except EmbedLensError as exc:
            return MatrixCell(number, ref_name, query_name, label, error=str(exc))
        return MatrixCell(number, ref_name, query_name, label, result=result)

    if threads is not None and threads == 1:
        return [run_cell(c) for c in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_cell, cells))


def diagnose_class_failures(
    natural_result: ExperimentResult,
    synthetic_result: ExperimentResult,
    low_threshold: float = 0.65,
    high_threshold: float = 0.75,
) -> dict[int, FailureTag]:
    """Tag each class by its failure pattern across two query populations.

    Both results must come from the same reference set over the same class
    universe; ``natural_result`` classifies natural queries and
    ``synthetic_result`` classifies synthetic ones. A class whose natural
    accuracy exceeds ``low_threshold`` is healthy. Below it, a synthetic
    accuracy at or above ``high_threshold`` means the generated data is
    self-consistent but displaced (shift failure); anything else means the
    concept itself is misrepresented (concept failure).
    """
    if natural_result.spec.reference_set != synthetic_result.spec.reference_set:
        raise MismatchedResults(
            "results use different reference sets "
            f"('{natural_result.spec.reference_set}' vs "
            f"'{synthetic_result.spec.reference_set}')"
        )
    nat = natural_result.per_class_accuracy
    syn = synthetic_result.per_class_accuracy
    if set(nat) != set(syn):
        raise MismatchedResults("results cover different class universes")
    tags = {}
    for cid in nat:
        if nat[cid] > low_threshold:
            tags[cid] = FailureTag.HEALTHY
        elif syn[cid] >= high_threshold:
            tags[cid] = FailureTag.SHIFT_FAILURE
        else:
            tags[cid] = FailureTag.CONCEPT_FAILURE
    return tags
