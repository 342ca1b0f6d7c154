import numpy as np
import pytest

from embedlens.dataset import ClassLabel, EmbeddingSet, Modality, Split


def make_set(
    classes,
    name="test-set",
    modality=Modality.IM,
    split=Split.TRAIN,
    names=None,
):
    """Build an EmbeddingSet from {class_id: rows}."""
    labels = [
        ClassLabel(cid, (names or {}).get(cid, f"class-{cid}"))
        for cid in classes
    ]
    dimension = np.asarray(next(iter(classes.values()))).shape[1]
    arrays = {cid: np.asarray(rows, dtype=np.float64) for cid, rows in classes.items()}
    return EmbeddingSet(name, dimension, modality, split, labels, arrays)


def random_instance(rng, max_classes=10, max_per_class=50, dims=(2, 8, 16)):
    """A random (reference set, query set) pair on a shared class universe."""
    dim = int(rng.choice(dims))
    n_classes = int(rng.integers(2, max_classes + 1))
    ref_classes = {}
    query_classes = {}
    for cid in range(n_classes):
        n_ref = int(rng.integers(1, max_per_class + 1))
        n_query = int(rng.integers(1, max(2, max_per_class // 2) + 1))
        ref_classes[cid] = rng.standard_normal((n_ref, dim))
        query_classes[cid] = rng.standard_normal((n_query, dim))
    refs = make_set(ref_classes, name="refs", split=Split.TRAIN)
    queries = make_set(query_classes, name="queries", split=Split.EVAL)
    return refs, queries


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
