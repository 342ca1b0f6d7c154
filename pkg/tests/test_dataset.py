import json

import numpy as np
import pytest

from conftest import make_set
from embedlens.dataset import (
    ClassLabel,
    Modality,
    Split,
    apply_label_overrides,
    load_label_overrides,
    load_set,
    save_set,
    split_set,
)
from embedlens.errors import (
    BlobSizeMismatch,
    ClassTooSmall,
    IoFailure,
    ManifestParse,
    NonFiniteValue,
    UnknownClassId,
    ValidationError,
)


@pytest.fixture
def sample_set(rng):
    return make_set(
        {0: rng.standard_normal((3, 4)), 1: rng.standard_normal((3, 4))},
        name="sample", modality=Modality.IM, split=Split.TRAIN,
    )


class TestLoadSave:
    def test_round_trip_counts(self, sample_set, tmp_path):
        path = tmp_path / "sample.json"
        save_set(sample_set, path)
        loaded = load_set(path)
        assert loaded.name == "sample"
        assert loaded.n_total == 6
        assert loaded.class_ids == (0, 1)
        assert loaded.dimension == 4

    def test_round_trip_bit_exact_at_f32(self, sample_set, tmp_path):
        first = tmp_path / "a.json"
        save_set(sample_set, first)
        loaded = load_set(first)
        # A loaded set has already been quantized; a second cycle is exact.
        second = tmp_path / "b.json"
        save_set(loaded, second)
        reloaded = load_set(second)
        for cid in loaded.class_ids:
            np.testing.assert_array_equal(loaded.classes[cid], reloaded.classes[cid])
        assert (tmp_path / "a.f32").read_bytes() == (tmp_path / "b.f32").read_bytes()
        ma = json.loads(first.read_text())
        mb = json.loads(second.read_text())
        ma.pop("blob"), mb.pop("blob")
        assert ma == mb

    def test_quantization_is_f32(self, sample_set, tmp_path):
        path = tmp_path / "s.json"
        save_set(sample_set, path)
        loaded = load_set(path)
        for cid in sample_set.class_ids:
            np.testing.assert_array_equal(
                loaded.classes[cid],
                sample_set.classes[cid].astype("<f4").astype(np.float64),
            )

    def test_truncated_blob(self, sample_set, tmp_path):
        path = tmp_path / "s.json"
        save_set(sample_set, path)
        blob = tmp_path / "s.f32"
        blob.write_bytes(blob.read_bytes()[:-4])
        with pytest.raises(BlobSizeMismatch):
            load_set(path)

    def test_nan_row_reported(self, sample_set, tmp_path):
        path = tmp_path / "s.json"
        save_set(sample_set, path)
        blob = tmp_path / "s.f32"
        data = np.frombuffer(blob.read_bytes(), dtype="<f4").copy()
        data[4 * 4] = np.nan  # first value of blob row 4 (class 1, row 1)
        blob.write_bytes(data.tobytes())
        with pytest.raises(NonFiniteValue) as err:
            load_set(path)
        assert "class 1" in str(err.value)
        assert "row 4" in str(err.value)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(IoFailure):
            load_set(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ManifestParse):
            load_set(path)

    def test_unwritable_path(self, sample_set):
        with pytest.raises(IoFailure):
            save_set(sample_set, "/proc/readonly/nope.json")

    def test_empty_class_rejected_before_write(self, rng):
        with pytest.raises(ValidationError):
            make_set({0: rng.standard_normal((2, 4)), 1: np.empty((0, 4))})

    def test_manifest_count_mismatch(self, sample_set, tmp_path):
        path = tmp_path / "s.json"
        save_set(sample_set, path)
        manifest = json.loads(path.read_text())
        manifest["classes"][0]["count"] = 4
        path.write_text(json.dumps(manifest))
        with pytest.raises(BlobSizeMismatch):
            load_set(path)


class TestSplit:
    def test_paper_sizes(self, rng):
        es = make_set({0: rng.standard_normal((1250, 3))})
        train, evaluation = split_set(es, 0.04, seed=1)
        assert train.classes[0].shape[0] == 1200
        assert evaluation.classes[0].shape[0] == 50
        assert train.split is Split.TRAIN
        assert evaluation.split is Split.EVAL

    def test_minimum_split(self, rng):
        es = make_set({0: rng.standard_normal((2, 3))})
        train, evaluation = split_set(es, 0.5, seed=1)
        assert train.classes[0].shape[0] == 1
        assert evaluation.classes[0].shape[0] == 1

    def test_deterministic(self, rng):
        es = make_set({0: rng.standard_normal((30, 3)), 5: rng.standard_normal((11, 3))})
        t1, e1 = split_set(es, 0.2, seed=9)
        t2, e2 = split_set(es, 0.2, seed=9)
        for cid in es.class_ids:
            np.testing.assert_array_equal(t1.classes[cid], t2.classes[cid])
            np.testing.assert_array_equal(e1.classes[cid], e2.classes[cid])

    def test_disjoint_exhaustive_partition(self, rng):
        es = make_set({0: rng.standard_normal((17, 3))})
        for seed in range(5):
            train, evaluation = split_set(es, 0.3, seed=seed)
            combined = np.concatenate([train.classes[0], evaluation.classes[0]])
            original = {tuple(r) for r in es.classes[0]}
            assert {tuple(r) for r in combined} == original
            assert combined.shape[0] == 17

    def test_class_too_small(self, rng):
        es = make_set({0: rng.standard_normal((1, 3)).repeat(1, axis=0)})
        with pytest.raises(ClassTooSmall):
            split_set(es, 0.5, seed=0)

    def test_both_sides_nonempty_at_extreme_fraction(self, rng):
        es = make_set({0: rng.standard_normal((2, 3))})
        train, evaluation = split_set(es, 0.99, seed=0)
        assert train.classes[0].shape[0] == 1
        assert evaluation.classes[0].shape[0] == 1


class TestOverrides:
    def test_named_entry_replaced(self):
        labels = [ClassLabel(4, "heron"), ClassLabel(5, "crane")]
        out = apply_label_overrides(labels, {5: "a crane bird"})
        assert out == [ClassLabel(4, "heron"), ClassLabel(5, "a crane bird")]

    def test_empty_overrides_identity(self):
        labels = [ClassLabel(0, "a"), ClassLabel(1, "b")]
        assert apply_label_overrides(labels, {}) == labels

    def test_unknown_id(self):
        with pytest.raises(UnknownClassId):
            apply_label_overrides([ClassLabel(0, "a")], {9999: "x"})

    def test_override_file_round_trip(self, tmp_path):
        path = tmp_path / "ovr.json"
        path.write_text(json.dumps([{"id": 5, "prompt": "a crane bird"}]))
        assert load_label_overrides(path) == {5: "a crane bird"}

    def test_override_file_empty_prompt(self, tmp_path):
        path = tmp_path / "ovr.json"
        path.write_text(json.dumps([{"id": 5, "prompt": ""}]))
        with pytest.raises(ManifestParse):
            load_label_overrides(path)


class TestInvariants:
    def test_dimension_checked_once_at_boundary(self, rng):
        with pytest.raises(ValidationError):
            make_set({0: rng.standard_normal((2, 4)), 1: rng.standard_normal((2, 5))})

    def test_non_finite_rejected(self, rng):
        rows = rng.standard_normal((3, 4))
        rows[1, 2] = np.inf
        with pytest.raises(NonFiniteValue):
            make_set({0: rows})

    def test_loaded_arrays_immutable(self, sample_set, tmp_path):
        path = tmp_path / "s.json"
        save_set(sample_set, path)
        loaded = load_set(path)
        with pytest.raises(ValueError):
            loaded.classes[0][0, 0] = 1.0
