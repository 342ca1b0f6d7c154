import numpy as np
import pytest

from conftest import make_set
from embedlens import geometry, separability, simulator
from embedlens.dataset import Modality, Split
from embedlens.errors import DimensionMismatch, EmptySet


def gap_pair(seed, dim=16, classes=4, per_class=25, offset=0.5):
    spec = simulator.ClusterSpec(dim, classes, per_class, 0.1, 0.0, seed=seed)
    refs, _ = simulator.simulate_experiment(spec)
    rows, _ = refs.stacked()
    direction = geometry.unit_normalize(
        np.random.default_rng((seed, 1234)).standard_normal(dim)
    )
    shifted = simulator.offset_along_direction(rows, direction, offset)
    return geometry.normalize_rows(rows), shifted


class TestTrainLinearProbe:
    def test_axis_aligned_gap(self, rng):
        a = np.column_stack([rng.uniform(0.9, 1.0, 30), rng.standard_normal(30)])
        b = np.column_stack([rng.uniform(-1.0, -0.9, 30), rng.standard_normal(30)])
        probe = separability.train_linear_probe(a, b, seed=0)
        assert probe.separable
        assert probe.training_accuracy == 1.0
        assert probe.margin > 0.0
        assert separability.verify_hyperplane(a, b, probe.weights, probe.bias)

    def test_identical_clouds_not_separable(self, rng):
        a = geometry.normalize_rows(rng.standard_normal((15, 4)))
        probe = separability.train_linear_probe(a, a, max_epochs=50, seed=0)
        assert not probe.separable
        assert probe.training_accuracy <= 0.5
        assert probe.margin == 0.0

    def test_constructed_modality_gap(self):
        a, b = gap_pair(seed=31)
        probe = separability.train_linear_probe(a, b, seed=0)
        assert probe.separable
        assert separability.verify_hyperplane(a, b, probe.weights, probe.bias)

    def test_certificate_checks_every_point(self):
        a, b = gap_pair(seed=77)
        probe = separability.train_linear_probe(a, b, seed=3)
        scores_a = a @ probe.weights + probe.bias
        scores_b = b @ probe.weights + probe.bias
        assert np.all(scores_a > 0.0)
        assert np.all(scores_b < 0.0)

    def test_deterministic(self):
        a, b = gap_pair(seed=5)
        p1 = separability.train_linear_probe(a, b, seed=9)
        p2 = separability.train_linear_probe(a, b, seed=9)
        assert p1.separable == p2.separable
        assert p1.epochs_used == p2.epochs_used
        np.testing.assert_array_equal(p1.weights, p2.weights)
        assert p1.bias == p2.bias

    def test_label_symmetry(self):
        a, b = gap_pair(seed=13)
        forward = separability.train_linear_probe(a, b, seed=4)
        backward = separability.train_linear_probe(b, a, seed=4)
        np.testing.assert_array_equal(backward.weights, -forward.weights)
        assert backward.bias == -forward.bias
        assert backward.separable == forward.separable

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            separability.train_linear_probe(
                rng.standard_normal((3, 4)), rng.standard_normal((3, 5))
            )

    def test_empty_cloud(self, rng):
        with pytest.raises(EmptySet):
            separability.train_linear_probe(
                np.empty((0, 4)), rng.standard_normal((3, 4))
            )

    def test_non_convergence_reports_best_accuracy(self, rng):
        points = geometry.normalize_rows(rng.standard_normal((60, 3)))
        labels = rng.permutation(60)
        a, b = points[labels[:30]], points[labels[30:]]
        probe = separability.train_linear_probe(a, b, max_epochs=20, seed=1)
        assert not probe.separable
        assert 0.0 < probe.training_accuracy < 1.0
        assert probe.epochs_used == 20
        # returned weights achieve the reported accuracy
        scores = np.concatenate([a @ probe.weights + probe.bias,
                                 -(b @ probe.weights + probe.bias)])
        assert float(np.mean(scores > 0.0)) == probe.training_accuracy


class TestModalitySummary:
    def test_blocks_and_gap_ordering(self, rng):
        spec_a = simulator.ClusterSpec(16, 5, 30, 0.1, 0.0, seed=21)
        refs_a, queries_a = simulator.simulate_experiment(spec_a, name="images")
        direction = geometry.unit_normalize(rng.standard_normal(16))
        prompt_sets = []
        for source, split in ((refs_a, Split.TRAIN), (queries_a, Split.EVAL)):
            shifted = {
                cid: simulator.offset_along_direction(rows, direction, 1.5)
                for cid, rows in source.classes.items()
            }
            prompt_sets.append(make_set(shifted, name="prompts",
                                        modality=Modality.PRMT, split=split))
        rows = separability.modality_similarity_summary(
            [refs_a, queries_a, *prompt_sets]
        )
        groups = {r.group for r in rows}
        assert groups == {"within-prompt", "within-image", "cross-modality"}
        by_group = {
            g: np.mean([r.avg_cos_similarity for r in rows if r.group == g])
            for g in groups
        }
        assert by_group["cross-modality"] < by_group["within-image"]
        assert by_group["cross-modality"] < by_group["within-prompt"]

    def test_self_pair_of_singleton_references_is_one(self, rng):
        rows = geometry.normalize_rows(rng.standard_normal((3, 8)))
        prompts = make_set({i: rows[i][None, :] for i in range(3)},
                           name="prompts", modality=Modality.PRMT)
        other = make_set({i: rng.standard_normal((2, 8)) for i in range(3)},
                         name="other", modality=Modality.PRMT)
        summary = separability.modality_similarity_summary([prompts, other])
        self_row = [r for r in summary
                    if r.reference_set == r.query_set == "prompts"][0]
        assert self_row.avg_cos_similarity == pytest.approx(1.0, abs=1e-12)

    def test_needs_two_sets(self, rng):
        only = make_set({0: rng.standard_normal((3, 4)),
                         1: rng.standard_normal((3, 4))})
        with pytest.raises(EmptySet):
            separability.modality_similarity_summary([only])
