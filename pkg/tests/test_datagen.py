from pathlib import Path

import numpy as np
import pytest

from fabmix.datagen import GeneratorSpec, _spd_from_factor, sample_dataset, sample_ground_truth
from fabmix.gaussian import repair_covariance
from fabmix.io import load_dataset_csv, save_dataset_csv

GOLDEN = Path(__file__).parent / "golden"


def table1_spec(seed=7, n=10_000, dim=10):
    return GeneratorSpec(
        n=n, k_true=4, weights=(0.1, 0.2, 0.3, 0.4), dim=dim, seed=seed
    )


class TestGeneratorSpec:
    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            GeneratorSpec(n=10, k_true=2, weights=(0.6, 0.6), dim=2)

    def test_rejects_weight_count_mismatch(self):
        with pytest.raises(ValueError):
            GeneratorSpec(n=10, k_true=3, weights=(0.5, 0.5), dim=2)

    def test_rejects_tiny_n(self):
        with pytest.raises(ValueError):
            GeneratorSpec(n=2, k_true=4, weights=(0.1, 0.2, 0.3, 0.4), dim=2)


class TestSampleGroundTruth:
    def test_deterministic_in_seed(self):
        a = sample_ground_truth(table1_spec())
        b = sample_ground_truth(table1_spec())
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.covariances, b.covariances)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_table1_shape(self):
        model = sample_ground_truth(table1_spec())
        assert model.n_components == 4
        assert model.dim == 10
        assert model.covariances.shape == (4, 10, 10)
        np.testing.assert_allclose(model.weights, [0.1, 0.2, 0.3, 0.4])
        for c in range(4):
            # SPD without any jitter.
            repaired = repair_covariance(model.covariances[c])
            np.testing.assert_array_equal(repaired.entries, model.covariances[c])

    def test_means_inside_box(self):
        model = sample_ground_truth(table1_spec(dim=3))
        assert np.all(np.abs(model.means) <= 10.0)

    def test_cov_scale_limit_recovers_factor_product(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((4, 4))
        target = a @ a.T
        for scale in (1.0, 1e-3, 1e-6):
            built = _spd_from_factor(a, scale)
            assert np.linalg.norm(built - target) <= scale * np.sqrt(4) + 1e-12
            repair_covariance(built)  # stays factorizable all the way down
        np.testing.assert_allclose(_spd_from_factor(a, 1e-12), target, atol=1e-11)


class TestSampleDataset:
    def test_single_point(self):
        truth = sample_ground_truth(table1_spec(dim=2))
        data, labels = sample_dataset(truth, 1, seed=0)
        assert data.points.shape == (1, 2)
        assert labels.shape == (1,)
        assert 0 <= labels[0] <= 3

    def test_deterministic(self):
        truth = sample_ground_truth(table1_spec(dim=2))
        d1, l1 = sample_dataset(truth, 50, seed=9)
        d2, l2 = sample_dataset(truth, 50, seed=9)
        np.testing.assert_array_equal(d1.points, d2.points)
        np.testing.assert_array_equal(l1, l2)

    def test_label_proportions_match_weights(self):
        truth = sample_ground_truth(table1_spec(dim=2))
        _, labels = sample_dataset(truth, 100_000, seed=1)
        props = np.bincount(labels, minlength=4) / 100_000
        np.testing.assert_allclose(props, [0.1, 0.2, 0.3, 0.4], atol=0.01)

    def test_per_component_mean_within_three_se(self):
        truth = sample_ground_truth(table1_spec(dim=2))
        data, labels = sample_dataset(truth, 100_000, seed=2)
        for c in range(4):
            pts = data.points[labels == c]
            se = np.sqrt(np.diag(truth.covariances[c]) / len(pts))
            assert np.all(np.abs(pts.mean(axis=0) - truth.means[c]) < 3 * se)


class TestGoldenDataset:
    def test_golden_file_regenerates_byte_identical(self, tmp_path):
        spec = GeneratorSpec(n=32, k_true=4, weights=(0.1, 0.2, 0.3, 0.4), dim=2, seed=7)
        truth = sample_ground_truth(spec)
        data, labels = sample_dataset(truth, 32, seed=7)
        fresh = tmp_path / "dataset.csv"
        save_dataset_csv(fresh, data.points, labels)
        golden = GOLDEN / "dataset_n32_d2_s7.csv"
        assert fresh.read_bytes() == golden.read_bytes()

    def test_golden_file_loads(self):
        points, labels = load_dataset_csv(GOLDEN / "dataset_n32_d2_s7.csv")
        assert points.shape == (32, 2)
        assert labels is not None and labels.shape == (32,)
