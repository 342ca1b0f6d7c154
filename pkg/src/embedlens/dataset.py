"""Labeled embedding sets: ingestion, validation, persistence, splitting.

On-disk format (the interchange surface between this toolkit and any
embedding producer):

* Manifest, JSON::

    {"name": ..., "dimension": D, "modality": "IM"|"PRMT",
     "split": "train"|"eval",
     "classes": [{"id": ..., "name": ..., "count": ...}, ...],
     "blob": "<relative path>", "dtype": "f32le",
     "layout": "row-major-by-class"}

* Blob: concatenated rows of 4*D bytes each (little-endian float32),
  grouped by class in manifest order. Trivially writable from any ML
  stack and memory-mappable.

* Label-override file: JSON array of ``{"id": ..., "prompt": ...}``.

Validation happens once, here, at the ingestion boundary; downstream
modules never re-check dimensions or finiteness. Loaded sets are
immutable (arrays are marked read-only) so any number of readers can
share one set.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .seeding import derive_rng
from .errors import (
    BlobSizeMismatch,
    ClassTooSmall,
    IoFailure,
    ManifestParse,
    NonFiniteValue,
    UnknownClassId,
    ValidationError,
)

BLOB_DTYPE = "f32le"
BLOB_LAYOUT = "row-major-by-class"


class Modality(enum.Enum):
    IM = "IM"
    PRMT = "PRMT"


class Split(enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class ClassLabel:
    """A class identity: stable integer id plus a mutable display name.

    Identity across sets is by id, not name: the disambiguation workflow
    rewrites names while ids stay fixed.
    """

    id: int
    name: str

    def __post_init__(self):
        if self.id < 0:
            raise ValidationError(f"class id must be >= 0, got {self.id}")
        if not self.name:
            raise ValidationError(f"class {self.id} has an empty name")


class EmbeddingSet:
    """A named, labeled collection of embeddings with modality/split tags.

    ``classes`` maps class id -> (n_c, D) float64 array; ``labels`` keeps
    the manifest's class order, which also fixes the blob row order.
    """

    def __init__(
        self,
        name: str,
        dimension: int,
        modality: Modality,
        split: Split,
        labels: Sequence[ClassLabel],
        classes: Mapping[int, np.ndarray],
    ):
        if not name:
            raise ValidationError("set name must be non-empty")
        if dimension < 2:
            raise ValidationError(f"dimension must be >= 2, got {dimension}")
        ids = [lb.id for lb in labels]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate class ids in set '{name}'")
        if set(ids) != set(classes.keys()):
            raise ValidationError(f"labels and class arrays disagree in set '{name}'")
        if not labels:
            raise ValidationError(f"set '{name}' has no classes")

        self.name = name
        self.dimension = int(dimension)
        self.modality = modality
        self.split = split
        self.labels = tuple(labels)
        self._classes: dict[int, np.ndarray] = {}
        for lb in self.labels:
            arr = np.ascontiguousarray(classes[lb.id], dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != dimension:
                raise ValidationError(
                    f"class {lb.id} of '{name}' has shape {arr.shape}, "
                    f"expected (n, {dimension})"
                )
            if arr.shape[0] == 0:
                raise ValidationError(f"class {lb.id} of '{name}' is empty")
            if not np.isfinite(arr).all():
                row = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
                raise NonFiniteValue(
                    f"class {lb.id} of '{name}' has a non-finite value in row {row}"
                )
            arr.setflags(write=False)
            self._classes[lb.id] = arr

    @property
    def classes(self) -> Mapping[int, np.ndarray]:
        return self._classes

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(lb.id for lb in self.labels)

    @property
    def n_total(self) -> int:
        return sum(arr.shape[0] for arr in self._classes.values())

    def vectors(self, class_id: int) -> np.ndarray:
        return self._classes[class_id]

    def label_for(self, class_id: int) -> ClassLabel:
        for lb in self.labels:
            if lb.id == class_id:
                return lb
        raise UnknownClassId(f"class id {class_id} not in set '{self.name}'")

    def iter_classes(self) -> Iterator[tuple[ClassLabel, np.ndarray]]:
        for lb in self.labels:
            yield lb, self._classes[lb.id]

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All rows in manifest class order plus their class ids."""
        rows = np.concatenate([self._classes[lb.id] for lb in self.labels])
        ids = np.concatenate(
            [np.full(self._classes[lb.id].shape[0], lb.id, dtype=np.int64)
             for lb in self.labels]
        )
        return rows, ids

    def replace(self, **kwargs) -> "EmbeddingSet":
        base = dict(
            name=self.name,
            dimension=self.dimension,
            modality=self.modality,
            split=self.split,
            labels=self.labels,
            classes=self._classes,
        )
        base.update(kwargs)
        return EmbeddingSet(**base)

    def __repr__(self):
        return (
            f"EmbeddingSet(name={self.name!r}, D={self.dimension}, "
            f"modality={self.modality.value}, split={self.split.value}, "
            f"classes={len(self.labels)}, rows={self.n_total})"
        )


def _manifest_field(manifest: dict, key: str):
    if key not in manifest:
        raise ManifestParse(f"manifest is missing field '{key}'")
    return manifest[key]


def load_set(path) -> EmbeddingSet:
    """Load and fully validate an embedding set from its manifest path.

    The blob is memory-mapped for the size check and row scan, then the
    rows are materialized as float64 (exact widening of the stored f32).
    """
    manifest_path = Path(path)
    try:
        text = manifest_path.read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {manifest_path}: {exc}") from exc
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestParse(f"{manifest_path} is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise ManifestParse(f"{manifest_path}: manifest must be a JSON object")

    name = _manifest_field(manifest, "name")
    dimension = _manifest_field(manifest, "dimension")
    if not isinstance(dimension, int) or dimension < 2:
        raise ManifestParse(f"{manifest_path}: bad dimension {dimension!r}")
    try:
        modality = Modality(_manifest_field(manifest, "modality"))
        split = Split(_manifest_field(manifest, "split"))
    except ValueError as exc:
        raise ManifestParse(f"{manifest_path}: {exc}") from exc
    if _manifest_field(manifest, "dtype") != BLOB_DTYPE:
        raise ManifestParse(f"{manifest_path}: unsupported dtype {manifest['dtype']!r}")
    if _manifest_field(manifest, "layout") != BLOB_LAYOUT:
        raise ManifestParse(f"{manifest_path}: unsupported layout {manifest['layout']!r}")

    entries = _manifest_field(manifest, "classes")
    if not isinstance(entries, list) or not entries:
        raise ManifestParse(f"{manifest_path}: 'classes' must be a non-empty array")
    labels = []
    counts = []
    for entry in entries:
        try:
            labels.append(ClassLabel(int(entry["id"]), str(entry["name"])))
            counts.append(int(entry["count"]))
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise ManifestParse(f"{manifest_path}: bad class entry {entry!r}: {exc}") from exc
    if any(c < 1 for c in counts):
        raise ManifestParse(f"{manifest_path}: class counts must be >= 1")

    blob_path = manifest_path.parent / _manifest_field(manifest, "blob")
    if not blob_path.exists():
        raise IoFailure(f"blob file {blob_path} does not exist")
    n_total = sum(counts)
    expected = 4 * dimension * n_total
    actual = blob_path.stat().st_size
    if actual != expected:
        raise BlobSizeMismatch(
            f"{blob_path}: blob is {actual} bytes, manifest implies "
            f"{expected} (4*{dimension}*{n_total})"
        )
    raw = np.memmap(blob_path, dtype="<f4", mode="r").reshape(n_total, dimension)

    classes: dict[int, np.ndarray] = {}
    offset = 0
    for lb, count in zip(labels, counts):
        block = np.asarray(raw[offset:offset + count], dtype=np.float64)
        finite = np.isfinite(block).all(axis=1)
        if not finite.all():
            row = int(np.flatnonzero(~finite)[0])
            raise NonFiniteValue(
                f"{blob_path}: non-finite value in class {lb.id} "
                f"(blob row {offset + row})"
            )
        classes[lb.id] = block
        offset += count
    del raw

    return EmbeddingSet(name, dimension, modality, split, labels, classes)


def save_set(es: EmbeddingSet, path) -> None:
    """Persist a set as manifest + f32 blob; the blob sits next to the
    manifest under ``<stem>.f32``.

    Loading the result reproduces the set bit-exactly at 32-bit storage
    precision (a set that has already been through one save/load cycle
    round-trips with identical bytes).
    """
    manifest_path = Path(path)
    blob_name = manifest_path.stem + ".f32"
    manifest = {
        "name": es.name,
        "dimension": es.dimension,
        "modality": es.modality.value,
        "split": es.split.value,
        "classes": [
            {"id": lb.id, "name": lb.name, "count": int(es.classes[lb.id].shape[0])}
            for lb in es.labels
        ],
        "blob": blob_name,
        "dtype": BLOB_DTYPE,
        "layout": BLOB_LAYOUT,
    }
    rows, _ = es.stacked()
    try:
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        with open(manifest_path.parent / blob_name, "wb") as fh:
            fh.write(rows.astype("<f4").tobytes())
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write set to {manifest_path}: {exc}") from exc


def split_set(
    es: EmbeddingSet, eval_fraction: float, seed: int
) -> tuple[EmbeddingSet, EmbeddingSet]:
    """Partition every class into disjoint train/eval subsets.

    Eval count per class is ``round(eval_fraction * n)`` with a floor of 1
    and a cap of n-1 so both sides stay non-empty. The permutation is
    derived per class from (seed, class id), so the result is independent
    of class iteration order.
    """
    if not 0.0 < eval_fraction < 1.0:
        raise ValidationError(f"eval_fraction must be in (0, 1), got {eval_fraction}")
    small = [lb.id for lb, arr in es.iter_classes() if arr.shape[0] < 2]
    if small:
        raise ClassTooSmall(
            f"classes {small} of '{es.name}' have fewer than 2 embeddings"
        )
    train_classes: dict[int, np.ndarray] = {}
    eval_classes: dict[int, np.ndarray] = {}
    for lb, arr in es.iter_classes():
        n = arr.shape[0]
        n_eval = min(max(1, math.floor(eval_fraction * n + 0.5)), n - 1)
        perm = derive_rng(seed, lb.id).permutation(n)
        eval_idx = np.sort(perm[:n_eval])
        train_idx = np.sort(perm[n_eval:])
        train_classes[lb.id] = arr[train_idx]
        eval_classes[lb.id] = arr[eval_idx]
    train = EmbeddingSet(
        es.name, es.dimension, es.modality, Split.TRAIN, es.labels, train_classes
    )
    evaluation = EmbeddingSet(
        es.name, es.dimension, es.modality, Split.EVAL, es.labels, eval_classes
    )
    return train, evaluation


def load_label_overrides(path) -> dict[int, str]:
    """Read a label-override file: JSON array of {id, prompt}."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read override file {p}: {exc}") from exc
    try:
        entries = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestParse(f"{p} is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise ManifestParse(f"{p}: override file must be a JSON array")
    overrides: dict[int, str] = {}
    for entry in entries:
        try:
            cid = int(entry["id"])
            prompt = str(entry["prompt"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestParse(f"{p}: bad override entry {entry!r}: {exc}") from exc
        if not prompt:
            raise ManifestParse(f"{p}: empty replacement prompt for id {cid}")
        if cid in overrides:
            raise ManifestParse(f"{p}: duplicate override for id {cid}")
        overrides[cid] = prompt
    return overrides


def apply_label_overrides(
    labels: Sequence[ClassLabel], overrides: Mapping[int, str]
) -> list[ClassLabel]:
    """Replace the names of the listed class ids, preserving order.

    Every override id must resolve against the label table; ids are the
    stable identity, names are what the disambiguation workflow rewrites.
    """
    known = {lb.id for lb in labels}
    missing = sorted(set(overrides) - known)
    if missing:
        raise UnknownClassId(f"override ids {missing} not present in label table")
    return [
        ClassLabel(lb.id, overrides[lb.id]) if lb.id in overrides else lb
        for lb in labels
    ]
